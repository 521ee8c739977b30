"""Two-sample inference for matrices with correlated rows and columns.

The package estimates row and column covariances with an L1-penalized
matrix-variate normal likelihood, de-correlates ("spheres") the data,
computes row-wise test statistics and estimates false discovery rates.
"""

from ._kernels import BACKEND
from .core import (DataMatrix, DecompositionFit, MatrixNormalParams, SignalSpec,
                   decompose, empirical_cov_pair, make_structured_cov, rng_for,
                   sample_matrix_normal)
from .errors import (ConfigError, ConvergenceError, DegenerateClassError,
                     DegenerateDensityError, NumericalWarning, ParameterError,
                     TransposableError)
from .fdr import (FdrReport, bh_stepup, by_stepup, empirical_null_fdr,
                  permutation_fdr, run_procedures)
from .harness import RunResult, Scenario, emit_tables, generate, make_scenario, run_scenario
from .sphere import central_match, filter_rows
from .stats import TestStatVector, eta, eta_blocked, p_values, row_t_stats, row_z_stats
from .trcm import TrcmFit, cross_validate_lambda, fit_trcm, glasso

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DataMatrix", "DecompositionFit", "MatrixNormalParams", "SignalSpec",
    "decompose", "empirical_cov_pair", "make_structured_cov", "rng_for",
    "sample_matrix_normal", "ConfigError", "ConvergenceError", "DegenerateClassError",
    "DegenerateDensityError", "NumericalWarning", "ParameterError", "TransposableError",
    "FdrReport", "bh_stepup", "by_stepup", "empirical_null_fdr", "permutation_fdr",
    "run_procedures", "RunResult", "Scenario", "emit_tables", "generate",
    "make_scenario", "run_scenario", "central_match", "filter_rows",
    "TestStatVector", "eta", "eta_blocked", "p_values", "row_t_stats", "row_z_stats",
    "TrcmFit", "cross_validate_lambda", "fit_trcm", "glasso",
]
