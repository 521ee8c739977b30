"""Simulation scenarios, the replicate runner and table/figure emitters."""

import dataclasses
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .core import (DataMatrix, MatrixNormalParams, SignalSpec, decompose,
                   empirical_cov_pair, make_structured_cov, rng_for,
                   sample_matrix_normal)
from .errors import ConfigError, NumericalWarning, ParameterError, TransposableError
from .fdr import PROCEDURES, run_procedures
from .sphere import central_match, filter_rows, sphere
from .stats import p_values, row_t_stats
from .trcm import cross_validate_lambda, fit_trcm

log = logging.getLogger(__name__)

K_GRID = (40, 45, 50, 55, 60)
SUMMARY_COLUMNS = ("true_fdp",) + PROCEDURES
GENERATORS = ("matrix_normal", "latent_variable", "random_effects")
PIPELINES = ("standard", "sphered")
COV_KINDS = ("identity", "ar1", "block_ar1", "empirical")
BATCH_MEANS = (-0.5, -0.25, 0.0, 0.25, 0.5)

REP_KEY = 1
CV_KEY = 2
PERM_KEY = 3
SUBSAMPLE_KEY = 4


def derive_seed(seed, *key):
    """A 32-bit seed for ``(seed, *key)`` for APIs that take an integer."""
    return int(rng_for(seed, *key).integers(2**32))


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one simulation cell."""

    name: str = "custom"
    m: int = 250
    n: int = 50
    n1: int = 25
    n2: int = 25
    n_nonnull: int = 50
    effect: float = 0.5
    row_cov: str = "identity"
    row_rho: float = 0.0
    row_block: int = 0
    col_cov: str = "identity"
    col_rho: float = 0.0
    col_block: int = 0
    source: str = ""
    generator: str = "matrix_normal"
    latent_factors: int = 2
    batch_size: int = 5
    batch_var: float = 0.5
    reps: int = 10
    seed: int = 0
    pipeline: str = "standard"
    pi0: float = 0.8
    enull_window: float = 0.5
    perms: int = 1000
    folds: int = 5
    filter: int = 0
    methods: tuple = PROCEDURES

    def __post_init__(self):
        if self.n1 + self.n2 != self.n:
            raise ConfigError(f"n1 + n2 = {self.n1 + self.n2} but n = {self.n}")
        if self.n1 < 2 or self.n2 < 2:
            raise ConfigError("each class needs at least 2 columns")
        if not 0 <= self.n_nonnull <= self.m:
            raise ConfigError("n_nonnull must lie in [0, m]")
        if self.generator not in GENERATORS:
            raise ConfigError(f"generator must be one of {GENERATORS}")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}")
        for side in ("row", "col"):
            kind = getattr(self, f"{side}_cov")
            if kind not in COV_KINDS:
                raise ConfigError(f"{side}_cov must be one of {COV_KINDS}")
            if not abs(getattr(self, f"{side}_rho")) < 1:
                raise ConfigError(f"|{side}_rho| must be < 1")
            if kind == "empirical" and not self.source:
                raise ConfigError("empirical covariances need a source file")
            if kind == "block_ar1":
                dim = self.m if side == "row" else self.n
                block = getattr(self, f"{side}_block")
                if block < 1 or dim % block:
                    raise ConfigError(f"{side}_block={block} must divide {dim}")
        if (self.row_cov == "empirical") != (self.col_cov == "empirical"):
            raise ConfigError("row_cov and col_cov must both be empirical or neither")
        if self.reps < 1:
            raise ConfigError("reps must be positive")
        if self.perms < 1:
            raise ConfigError("perms must be positive")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if not 0 < self.pi0 <= 1 or not 0 < self.enull_window < 1:
            raise ConfigError("pi0 must lie in (0, 1] and enull_window in (0, 1)")
        if self.filter and not 2 <= self.filter <= self.m:
            raise ConfigError("filter must be 0 (off) or in [2, m]")
        bad = [mth for mth in self.methods if mth not in PROCEDURES]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {PROCEDURES}")
        if self.generator == "random_effects" and self.n % self.batch_size:
            raise ConfigError("batch_size must divide n")

    @property
    def signal(self):
        return SignalSpec.block(self.m, self.n_nonnull, self.effect)

    @property
    def truth(self):
        return self.signal.nonnull

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _structured(scn, side):
    dim = scn.m if side == "row" else scn.n
    kind = getattr(scn, f"{side}_cov")
    block = getattr(scn, f"{side}_block") or None
    return make_structured_cov(kind, dim, getattr(scn, f"{side}_rho"), block)


def empirical_cov_scenario(matrix_file, m_sub, n_sub, seed, loading=1e-3):
    """Covariance pair estimated from a random ``m_sub x n_sub`` block of a file.

    The block is double-centered, its empirical covariances computed, and the
    diagonal of each is raised just enough that its smallest eigenvalue is
    ``loading`` times its mean eigenvalue. The pair is scaled so that
    ``trace(Delta) = n_sub``.
    """
    try:
        X = io.read_matrix(matrix_file)
    except io.DataIOError as exc:
        raise ConfigError(f"covariance source: {exc}") from exc
    M, N = X.shape
    if m_sub > M or n_sub > N:
        raise ConfigError(f"source is {M}x{N} but {m_sub}x{n_sub} was requested; "
                          "use a larger source matrix")
    rng = rng_for(seed, SUBSAMPLE_KEY)
    rows = np.sort(rng.choice(M, m_sub, replace=False))
    cols = np.sort(rng.choice(N, n_sub, replace=False))
    sub = X[np.ix_(rows, cols)]
    sub = sub - sub.mean(axis=0) - sub.mean(axis=1, keepdims=True) + sub.mean()
    if np.linalg.matrix_rank(sub) < 2:
        raise ConfigError("subsampled block has rank < 2; use a larger or richer "
                          "source matrix")
    Sigma, Delta = empirical_cov_pair(sub)
    out = []
    for a in (Sigma, Delta):
        a = (a + a.T) / 2
        ev = np.linalg.eigvalsh(a)
        target = loading * ev.mean()
        if ev[0] < target:
            a = a + (target - ev[0]) * np.eye(a.shape[0])
        out.append(a)
    Sigma, Delta = out
    c = n_sub / np.trace(Delta)
    return Sigma / c, Delta * c


def covariances(scn):
    """True ``(Sigma, Delta)`` of a matrix-normal scenario."""
    if scn.row_cov == "empirical":
        return empirical_cov_scenario(scn.source, scn.m, scn.n, scn.seed)
    return _structured(scn, "row"), _structured(scn, "col")


def generate(scn, rep, covs=None):
    """Labeled data for replicate ``rep``; classes are the first ``n1`` columns."""
    rng = rng_for(scn.seed, REP_KEY, rep)
    m, n, n1 = scn.m, scn.n, scn.n1
    signal = scn.signal
    if scn.generator == "matrix_normal":
        Sigma, Delta = covs if covs is not None else covariances(scn)
        return sample_matrix_normal(MatrixNormalParams.centered(Sigma, Delta),
                                    signal, seed=rng, n1=n1)
    S = signal.matrix(n1, n - n1)
    if scn.generator == "latent_variable":
        gamma = rng.standard_normal((m, scn.latent_factors))
        g = rng.binomial(1, 0.5, size=(scn.latent_factors, n)).astype(float)
        return DataMatrix.two_class(S + gamma @ g + rng.standard_normal((m, n)), n1)
    # random effects: one N(mean_k, batch_var I) draw per batch of columns,
    # batch means cycling through BATCH_MEANS, row-correlated errors
    Sigma = _structured(scn, "row")
    root = np.linalg.cholesky(Sigma)
    eps = root @ rng.standard_normal((m, n))
    nb = n // scn.batch_size
    means = np.resize(BATCH_MEANS, nb)
    beta = means[None, :] + np.sqrt(scn.batch_var) * rng.standard_normal((m, nb))
    batches = np.repeat(beta, scn.batch_size, axis=1)
    return DataMatrix.two_class(S + batches + eps, n1)


def standard_center(x):
    """Remove row and column means."""
    X = x.values
    return x.with_values(X - X.mean(axis=0) - X.mean(axis=1, keepdims=True) + X.mean())


def sphered_statistics(x, pi0=0.8, folds=5, seed=0):
    """Cross-validated fit, sphering and central matching for one data set.

    Returns ``(sphered DataMatrix, matched statistics, fit, match result)``.
    """
    noise = decompose(x).noise
    lam, _ = cross_validate_lambda(noise, folds=folds, seed=seed)
    fit = fit_trcm(noise, lam)
    sp = sphere(x, fit)
    match = central_match(row_t_stats(sp.data, kind="t_sphered"), pi0)
    return sp.data, match.scaledStats, fit, match


def run_rep(scn, rep, covs=None):
    """One replicate: data, pipeline, all requested FDR curves."""
    with threadpool_limits(limits=1), warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        x = generate(scn, rep, covs)
        truth = scn.truth
        if scn.filter:
            x, index = filter_rows(x, scn.filter)
            truth = np.flatnonzero(np.isin(index, truth))
        if scn.pipeline == "standard":
            data = standard_center(x)
            stats = row_t_stats(data)
        else:
            data, stats, _, _ = sphered_statistics(
                x, scn.pi0, scn.folds, derive_seed(scn.seed, CV_KEY, rep))
        p = p_values(stats)
        return run_procedures(stats, p, data, scn.methods, scn.perms,
                              derive_seed(scn.seed, PERM_KEY, rep),
                              scn.enull_window, truth)


@dataclass
class RunResult:
    scenario: Scenario
    perRep: list
    reps: list
    failures: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def summarize(reports, ks=K_GRID):
    """Mean and standard error of each column at each rejection count.

    Returns ``{column: (means, ses)}`` with arrays aligned to ``ks``.
    """
    if not reports:
        raise ParameterError("no replicate results to summarize")
    out = {}
    for col in SUMMARY_COLUMNS:
        vals = np.array([[r.at(k)[col] for k in ks] for r in reports])
        mean = vals.mean(axis=0)
        if len(reports) > 1:
            se = vals.std(axis=0, ddof=1) / np.sqrt(len(reports))
        else:
            se = np.full(len(ks), np.nan)
        out[col] = (mean, se)
    return out


def _run_one(args):
    scn, rep, covs = args
    try:
        return rep, run_rep(scn, rep, covs), None
    except TransposableError as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"


def run_scenario(scn, threads=1):
    """Run every replicate; failures are recorded and the rest continue."""
    covs = covariances(scn) if scn.generator == "matrix_normal" else None
    jobs = [(scn, rep, covs) for rep in range(scn.reps)]
    if threads > 1 and scn.reps > 1:
        with ProcessPoolExecutor(max_workers=min(threads, scn.reps)) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    results.sort(key=lambda r: r[0])
    reports = [r for _, r, err in results if err is None]
    reps = [rep for rep, _, err in results if err is None]
    failures = {rep: err for rep, _, err in results if err is not None}
    for rep, err in failures.items():
        log.warning("replicate %d failed: %s", rep, err)
    summary = summarize(reports) if reports else {}
    return RunResult(scn, reports, reps, failures, summary)


def mean_curve(reports):
    """Average of the per-replicate curves (same length required)."""
    m = reports[0].m
    if any(r.m != m for r in reports):
        raise ParameterError("replicates have different numbers of rows")
    curves = {}
    for col in SUMMARY_COLUMNS:
        if col == "true_fdp":
            vals = [r.trueFdp for r in reports if r.trueFdp is not None]
        else:
            vals = [r.perProcedure[col] for r in reports if col in r.perProcedure]
        curves[col] = np.mean(vals, axis=0) if len(vals) == len(reports) else None
    return curves


def write_summary(path, summary, ks=K_GRID):
    header = ["k"] + [f"{c}_{s}" for c in SUMMARY_COLUMNS for s in ("mean", "se")]
    lines = [",".join(header)]
    for i, k in enumerate(ks):
        row = [str(k)]
        for c in SUMMARY_COLUMNS:
            mean, se = summary[c]
            row += [io.FLOAT_FMT % mean[i], io.FLOAT_FMT % se[i]]
        lines.append(",".join(row))
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise io.DataIOError(f"cannot write {path}: {exc}") from exc


def read_summary(path):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise io.DataIOError(f"cannot read {path}: {exc}") from exc
    header = lines[0].split(",")
    body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    ks = tuple(int(k) for k in body[:, 0])
    out = {}
    for c in SUMMARY_COLUMNS:
        out[c] = (body[:, header.index(f"{c}_mean")], body[:, header.index(f"{c}_se")])
    return ks, out


def _emit_curve(out, reports, title):
    curves = mean_curve(reports)
    m = reports[0].m
    per = {c: v for c, v in curves.items() if c != "true_fdp" and v is not None}
    from .fdr import FdrReport
    report = FdrReport(np.arange(m), per, curves["true_fdp"])
    io.write_curve(out / "fdr_curve.csv", report)
    k = np.arange(1, m + 1)
    io.plot_curves(out / "fdr_curve.svg",
                   {c: (k, v) for c, v in curves.items() if v is not None}, title)


def emit_tables(result, out_dir):
    """Write ``summary.csv``, ``fdr_curve.csv``/``.svg`` and per-replicate curves."""
    if not result.perRep:
        raise ParameterError("no successful replicates to emit")
    out = io.ensure_dir(out_dir)
    write_summary(out / "summary.csv", result.summary)
    for rep, report in zip(result.reps, result.perRep):
        io.write_curve(out / "reps" / f"rep_{rep:03d}.csv", report)
    _emit_curve(out, result.perRep, result.scenario.name)
    write_config(out / "scenario.cfg", result.scenario)
    if result.failures:
        io.write_kv(out / "failures", {f"rep_{r:03d}": e for r, e in result.failures.items()})
    return out


def report_from_dir(run_dir, out_dir=None):
    """Rebuild summary and curve outputs from saved per-replicate curves."""
    run_dir = Path(run_dir)
    files = sorted((run_dir / "reps").glob("rep_*.csv"))
    if not files:
        raise io.DataIOError(f"{run_dir}: no replicate curves under reps/")
    reports = [io.curve_to_report(io.read_curve(f)) for f in files]
    out = io.ensure_dir(out_dir or run_dir)
    write_summary(out / "summary.csv", summarize(reports))
    title = None
    if (run_dir / "scenario.cfg").exists():
        title = read_config(run_dir / "scenario.cfg").name
    _emit_curve(out, reports, title)
    return out


# --- configuration -------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(Scenario)}


def _mn(name, row, col):
    kw = {"name": name, "row_cov": "block_ar1", "row_rho": row, "row_block": 10}
    if col is None:
        kw.update(col_cov="identity")
    else:
        kw.update(col_cov="block_ar1", col_rho=0.5, col_block=col)
    return kw


PRESET_SCENARIOS = {
    "sigma1_identity": _mn("sigma1_identity", 0.9, None),
    "sigma2_identity": _mn("sigma2_identity", -0.9, None),
    "sigma1_delta1": _mn("sigma1_delta1", 0.9, 10),
    "sigma2_delta1": _mn("sigma2_delta1", -0.9, 10),
    "sigma1_delta2": _mn("sigma1_delta2", 0.9, 25),
    "sigma2_delta2": _mn("sigma2_delta2", -0.9, 25),
    "latent_variable": {"name": "latent_variable", "generator": "latent_variable"},
    "random_effects": {"name": "random_effects", "generator": "random_effects",
                       "row_cov": "block_ar1", "row_rho": 0.9, "row_block": 10},
}

SCALE_PRESETS = {
    "desk": {"reps": 3, "perms": 200},
    "full": {"reps": 10, "perms": 1000},
}


def make_scenario(base="sigma1_delta1", scale="full", **overrides):
    """Scenario from a named preset, a scale preset and explicit overrides."""
    if base not in PRESET_SCENARIOS:
        raise ConfigError(f"unknown scenario {base!r}; choose from "
                          f"{sorted(PRESET_SCENARIOS)}")
    if scale not in SCALE_PRESETS:
        raise ConfigError(f"unknown preset {scale!r}; choose from {sorted(SCALE_PRESETS)}")
    kw = {**PRESET_SCENARIOS[base], **SCALE_PRESETS[scale], **overrides}
    unknown = set(kw) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    return Scenario(**kw)


def _coerce(key, text):
    kind = _FIELDS[key].type
    try:
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
        if kind in ("tuple", tuple):
            return tuple(t.strip() for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc
    return text


def parse_config(text, origin="<config>"):
    """Parse flat ``key = value`` lines into a :class:`Scenario`.

    ``scenario`` picks a named base and ``preset`` a scale (desk or full);
    every other key must be a scenario field. ``#`` starts a comment.
    """
    values = {}
    for num, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"{origin}:{num}: expected 'key = value'")
        if key in values:
            raise ConfigError(f"{origin}:{num}: duplicate key {key!r}")
        if key not in _FIELDS and key not in ("scenario", "preset"):
            raise ConfigError(f"{origin}:{num}: unknown key {key!r}")
        values[key] = val
    base = values.pop("scenario", "sigma1_delta1")
    scale = values.pop("preset", "full")
    overrides = {k: _coerce(k, v) for k, v in values.items()}
    try:
        return make_scenario(base, scale, **overrides)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise io.DataIOError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))


def format_config(scn):
    lines = []
    for name in _FIELDS:
        v = getattr(scn, name)
        if isinstance(v, tuple):
            v = ",".join(v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"


def write_config(path, scn):
    try:
        Path(path).write_text(format_config(scn))
    except OSError as exc:
        raise io.DataIOError(f"cannot write {path}: {exc}") from exc
