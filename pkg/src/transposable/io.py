"""File formats: matrices, labeled data, statistics, fits and FDR curves."""

import csv
import os
from pathlib import Path

import numpy as np

from .core import DataMatrix
from .errors import TransposableError
from .fdr import PROCEDURES, FdrReport
from .stats import TestStatVector
from .trcm import TrcmFit

FLOAT_FMT = "%.17g"
CLASS_TAGS = ("c1", "c2")


class DataIOError(TransposableError, OSError):
    """A file could not be read, parsed or written."""


def _fmt(v):
    return FLOAT_FMT % v


def _open_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def _read_lines(path):
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def _floats(rows, path):
    try:
        a = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise DataIOError(f"{path}: non-numeric entry ({exc})") from exc
    if a.ndim != 2 or (rows and len({len(r) for r in rows}) != 1):
        raise DataIOError(f"{path}: ragged matrix")
    return a


def write_matrix(path, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in a:
            w.writerow([_fmt(v) for v in row])


def read_matrix(path):
    rows = _read_lines(path)
    if not rows:
        raise DataIOError(f"{path}: empty matrix file")
    return _floats(rows, path)


def write_data(path, x):
    """Write a matrix; labeled data get a ``class,c1,...,c2`` header."""
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        if x.labeled:
            tags = np.empty(x.shape[1], dtype=object)
            tags[x.class1] = CLASS_TAGS[0]
            tags[x.class2] = CLASS_TAGS[1]
            w.writerow(["class", *tags])
        for row in x.values:
            w.writerow([_fmt(v) for v in row])


def read_data(path):
    rows = _read_lines(path)
    if not rows:
        raise DataIOError(f"{path}: empty data file")
    if rows[0][0].strip() == "class":
        tags = [t.strip() for t in rows[0][1:]]
        if any(t not in CLASS_TAGS for t in tags):
            raise DataIOError(f"{path}: class tags must be c1 or c2")
        values = _floats(rows[1:], path)
        if values.shape[1] != len(tags):
            raise DataIOError(f"{path}: header has {len(tags)} tags for "
                              f"{values.shape[1]} columns")
        tags = np.array(tags)
        return DataMatrix(values, np.flatnonzero(tags == "c1"),
                          np.flatnonzero(tags == "c2"))
    return DataMatrix(_floats(rows, path))


def write_stats(path, stats, p=None):
    """Columns ``row,stat,flag,p``; ``p`` is left empty when not given."""
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "stat", "flag", "p"])
        for i, (t, f) in enumerate(zip(stats.values, stats.flags)):
            w.writerow([i, _fmt(t), int(f), "" if p is None else _fmt(p[i])])


def read_stats(path, kind="t", df=1, c_n=1.0):
    rows = _read_lines(path)
    if not rows or rows[0] != ["row", "stat", "flag", "p"]:
        raise DataIOError(f"{path}: expected header row,stat,flag,p")
    try:
        body = sorted(rows[1:], key=lambda r: int(r[0]))
        t = np.array([float(r[1]) for r in body])
        flags = np.array([bool(int(r[2])) for r in body])
        p = None if any(r[3] == "" for r in body) else np.array([float(r[3]) for r in body])
    except (ValueError, IndexError) as exc:
        raise DataIOError(f"{path}: malformed statistics ({exc})") from exc
    return TestStatVector(t, kind, df, c_n, flags), p


def write_stats_meta(path, stats):
    write_kv(path, {"kind": stats.kind, "df": stats.df, "c_n": float(stats.c_n)})


def read_stats_meta(path):
    meta = read_kv(path)
    try:
        return meta["kind"], int(float(meta["df"])), float(meta["c_n"])
    except (KeyError, ValueError) as exc:
        raise DataIOError(f"{path}: malformed statistics metadata") from exc


def write_truth(path, rows):
    """Non-null row indices, one per line."""
    with _open_write(path) as fh:
        for r in np.asarray(rows, dtype=int):
            fh.write(f"{r}\n")


def read_truth(path):
    rows = _read_lines(path)
    try:
        return np.array([int(r[0]) for r in rows], dtype=int)
    except ValueError as exc:
        raise DataIOError(f"{path}: truth must list integer row indices") from exc


def write_kv(path, items):
    with _open_write(path) as fh:
        for k, v in items.items():
            fh.write(f"{k}={_fmt(v) if isinstance(v, float) else v}\n")


def read_kv(path):
    out = {}
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    k, _, v = line.partition("=")
                    out[k.strip()] = v.strip()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    return out


def write_fit(directory, fit):
    d = Path(directory)
    write_matrix(d / "sigma.csv", fit.SigmaHat)
    write_matrix(d / "delta.csv", fit.DeltaHat)
    write_kv(d / "meta", {"lambda": fit.lambda_, "iterations": fit.iterations,
                          "converged": str(fit.converged).lower(),
                          "objective": fit.finalObjective})


def read_fit(directory):
    d = Path(directory)
    meta = read_kv(d / "meta")
    try:
        lam = float(meta.get("lambda", 0.0))
    except ValueError as exc:
        raise DataIOError(f"{d / 'meta'}: bad lambda") from exc
    fit = TrcmFit.from_covariances(read_matrix(d / "sigma.csv"),
                                   read_matrix(d / "delta.csv"), lam)
    return fit


CURVE_COLUMNS = ("k", "true_fdp") + PROCEDURES


def write_curve(path, report):
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for k in range(1, report.m + 1):
            row = report.at(k)
            w.writerow([k] + ["" if np.isnan(row[c]) else _fmt(row[c])
                              for c in CURVE_COLUMNS[1:]])


def read_curve(path):
    """Read ``fdr_curve.csv`` back as ``{column: array}`` (NaN for blanks)."""
    rows = _read_lines(path)
    if not rows or tuple(rows[0]) != CURVE_COLUMNS:
        raise DataIOError(f"{path}: expected header {','.join(CURVE_COLUMNS)}")
    try:
        cols = list(zip(*rows[1:]))
        out = {"k": np.array([int(v) for v in cols[0]])}
        for name, col in zip(CURVE_COLUMNS[1:], cols[1:]):
            out[name] = np.array([np.nan if v == "" else float(v) for v in col])
    except (ValueError, IndexError) as exc:
        raise DataIOError(f"{path}: malformed curve ({exc})") from exc
    return out


def curve_to_report(curve):
    """Rebuild a ranking-free :class:`FdrReport` from a curve table."""
    m = curve["k"].size
    per = {p: curve[p] for p in PROCEDURES if not np.all(np.isnan(curve[p]))}
    fdp = None if np.all(np.isnan(curve["true_fdp"])) else curve["true_fdp"]
    return FdrReport(np.arange(m), per, fdp)


def plot_curves(path, curves, title=None):
    """Line chart of true FDP and estimates against rejections.

    ``curves`` maps a label to ``(k, values)``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, (k, v) in curves.items():
        style = "k-" if label == "true_fdp" else "-"
        ax.plot(k, v, style, label=label, linewidth=1.5 if label == "true_fdp" else 1)
    ax.set_xlabel("Number of tests rejected")
    ax.set_ylabel("False discovery proportion")
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", frameon=False)
    fig.tight_layout()
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        # no date and a fixed id salt keep the SVG byte-identical across runs
        with matplotlib.rc_context({"svg.hashsalt": "transposable"}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {path}: {exc}") from exc
    return Path(path)
