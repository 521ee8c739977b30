import numpy as np
import pytest

from transposable import harness
from transposable.core import decompose, rng_for
from transposable.errors import ConfigError, ParameterError
from transposable.harness import (K_GRID, Scenario, emit_tables, empirical_cov_scenario,
                                  generate, make_scenario, parse_config, read_summary,
                                  report_from_dir, run_scenario, standard_center, summarize,
                                  write_summary)
from transposable.io import write_matrix

CHEAP = dict(m=120, n=20, n1=10, n2=10, n_nonnull=20, effect=1.0, reps=4, perms=100,
             row_cov="block_ar1", row_rho=0.5, row_block=10, col_cov="identity",
             methods=("bh", "by", "perm"))


@pytest.fixture(scope="module")
def cheap_run():
    return run_scenario(Scenario(**CHEAP))


@pytest.mark.parametrize("text, match", [
    ("reps = 3\nreps = 4", "duplicate"),
    ("colour = red", "unknown key"),
    ("just words", "key = value"),
    ("reps = many", "cannot parse"),
    ("scenario = nope", "unknown scenario"),
    ("preset = huge", "unknown preset"),
    ("n1 = 20", "n1 \\+ n2"),
    ("row_block = 7", "row_block"),
    ("methods = bh,storey", "methods"),
    ("row_rho = 1.5", "rho"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        scn = parse_config(text)
        harness.covariances(scn)


def test_config_round_trip_and_presets():
    scn = parse_config("scenario = sigma2_delta2  # comment\npreset = desk\nseed = 9\n")
    assert (scn.row_rho, scn.col_block, scn.reps, scn.perms, scn.seed) == (-0.9, 25, 3, 200, 9)
    assert parse_config(harness.format_config(scn)) == scn
    full = make_scenario("sigma1_identity")
    assert (full.reps, full.perms, full.col_cov) == (10, 1000, "identity")
    assert K_GRID == (40, 45, 50, 55, 60)


def test_empirical_requires_source():
    with pytest.raises(ConfigError):
        Scenario(row_cov="empirical", col_cov="empirical")


def test_zero_signal_identity_is_iid():
    scn = Scenario(m=400, n=50, effect=0.0)
    X = generate(scn, 0).values
    assert abs(X.mean()) < 0.02 and abs(X.var() - 1) < 0.03
    corr = np.corrcoef(X.T)
    assert np.abs(corr[np.triu_indices(50, 1)]).max() < 0.25


def test_generate_reproducible_and_distinct():
    scn = Scenario(m=40, n=10, n1=5, n2=5, n_nonnull=5)
    assert np.array_equal(generate(scn, 3).values, generate(scn, 3).values)
    assert not np.array_equal(generate(scn, 3).values, generate(scn, 4).values)


def test_latent_without_factors_is_signal_plus_noise():
    scn = Scenario(generator="latent_variable", latent_factors=0, m=2000, effect=0.0)
    X = generate(scn, 0).values
    assert abs(X.var() - 1) < 0.02


def test_latent_factors_add_variance():
    scn = Scenario(generator="latent_variable", m=1000, effect=0.0)
    # each factor contributes E[(gamma g)^2] = E[g^2] = 1/2 on top of unit noise
    second_moment = np.mean([np.mean(generate(scn, rep).values ** 2) for rep in range(40)])
    assert abs(second_moment - 2.0) < 0.05


def test_random_effects_within_batch_correlation():
    scn = make_scenario("random_effects", effect=0.0)
    same, other = [], []
    for rep in range(100):
        X = generate(scn, rep).values
        same.append(np.corrcoef(X[:, 0], X[:, 1])[0, 1])
        other.append(np.corrcoef(X[:, 0], X[:, 5])[0, 1])
    assert np.mean(same) > 0.2
    assert abs(np.mean(other)) < 0.05


@pytest.fixture(scope="module")
def iid_source(tmp_path_factory):
    path = tmp_path_factory.mktemp("src") / "source.csv"
    write_matrix(path, rng_for(3).standard_normal((400, 100)))
    return path


def test_empirical_identity_source(iid_source):
    Sigma, Delta = empirical_cov_scenario(iid_source, 250, 50, seed=1)
    assert np.trace(Delta) == pytest.approx(50)
    off = Delta - np.diag(np.diag(Delta))
    assert np.abs(off).max() < 0.3 and np.abs(np.diag(Delta) - 1).max() < 0.3
    assert np.trace(Sigma) / 250 == pytest.approx(1, abs=0.1)
    for a in (Sigma, Delta):
        assert np.linalg.eigvalsh(a)[0] > 0


def test_empirical_subsample_seeded(iid_source):
    a = empirical_cov_scenario(iid_source, 100, 30, seed=2)
    b = empirical_cov_scenario(iid_source, 100, 30, seed=2)
    c = empirical_cov_scenario(iid_source, 100, 30, seed=3)
    assert np.array_equal(a[0], b[0]) and not np.array_equal(a[0], c[0])


def test_empirical_loading_only_raises_floor(iid_source):
    # with zero loading the pair is the raw (PSD, rank-deficient) covariance
    Sigma, _ = empirical_cov_scenario(iid_source, 250, 50, seed=1, loading=0.0)
    assert np.linalg.eigvalsh(Sigma)[0] > -1e-10
    assert np.linalg.matrix_rank(Sigma, tol=1e-8) < 250


def test_empirical_source_errors(iid_source, tmp_path):
    with pytest.raises(ConfigError, match="larger source"):
        empirical_cov_scenario(iid_source, 500, 50, seed=0)
    with pytest.raises(ConfigError):
        empirical_cov_scenario(tmp_path / "missing.csv", 10, 10, seed=0)


def test_standard_center_keeps_class_differences():
    x = generate(Scenario(m=60, n=20, n1=10, n2=10, n_nonnull=10), 0)
    c = standard_center(x)
    diff = lambda d: d.values[:, d.class1].mean(1) - d.values[:, d.class2].mean(1)
    assert np.ptp(diff(c) - diff(x)) < 1e-12
    assert np.allclose(c.values.mean(0), 0) and np.allclose(c.values.mean(1), 0)
    assert np.allclose(decompose(x).noise, decompose(c).noise)


def test_summary_recomputable(cheap_run):
    assert not cheap_run.failures and len(cheap_run.perRep) == 4
    for col, (mean, se) in cheap_run.summary.items():
        vals = np.array([[r.at(k)[col] for k in K_GRID] for r in cheap_run.perRep])
        assert np.allclose(mean, vals.mean(0), atol=1e-12, rtol=0, equal_nan=True)
        assert np.allclose(se, vals.std(0, ddof=1) / 2, atol=1e-12, rtol=0, equal_nan=True)
    assert np.all(np.isnan(cheap_run.summary["enull"][0]))


def test_summary_round_trip_exact(tmp_path, cheap_run):
    write_summary(tmp_path / "s.csv", cheap_run.summary)
    ks, back = read_summary(tmp_path / "s.csv")
    assert ks == K_GRID
    for col, (mean, se) in cheap_run.summary.items():
        assert np.array_equal(back[col][0], mean, equal_nan=True)
        assert np.array_equal(back[col][1], se, equal_nan=True)


def test_emit_and_report(tmp_path, cheap_run):
    emit_tables(cheap_run, tmp_path / "run")
    for name in ("summary.csv", "fdr_curve.csv", "fdr_curve.svg", "scenario.cfg",
                 "reps/rep_000.csv"):
        assert (tmp_path / "run" / name).exists()
    report_from_dir(tmp_path / "run", tmp_path / "again")
    assert ((tmp_path / "run" / "summary.csv").read_bytes()
            == (tmp_path / "again" / "summary.csv").read_bytes())


def test_empty_results_error(tmp_path):
    with pytest.raises(ParameterError):
        summarize([])
    with pytest.raises(ParameterError):
        emit_tables(harness.RunResult(Scenario(), [], []), tmp_path)


def test_failed_replicates_are_recorded():
    # a filter larger than the fit can handle fails every replicate cleanly
    scn = Scenario(**{**CHEAP, "reps": 2, "pipeline": "sphered", "filter": 2})
    res = run_scenario(scn)
    assert not res.perRep and set(res.failures) == {0, 1}


def test_thread_count_does_not_change_results(cheap_run):
    par = run_scenario(Scenario(**CHEAP), threads=2)
    for col in cheap_run.summary:
        for a, b in zip(cheap_run.summary[col], par.summary[col]):
            assert np.array_equal(a, b, equal_nan=True)
