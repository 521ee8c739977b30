"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
implementation is loaded. Set ``TRANSPOSABLE_BACKEND=python`` to force the
fallback.
"""

import os

from . import _glasso_py

BACKEND = "python"
glasso_sweep = _glasso_py.glasso_sweep

if os.environ.get("TRANSPOSABLE_BACKEND", "").lower() != "python":
    try:
        from ._glasso_ext import glasso_sweep  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name=None):
    """Module exposing ``glasso_sweep`` for ``name``.

    ``name`` is 'cython', 'python' or None for the active backend.
    """
    if name is None:
        name = BACKEND
    if name == "python":
        return _glasso_py
    if name == "cython":
        from . import _glasso_ext
        return _glasso_ext
    raise ValueError(f"unknown backend {name!r}")
