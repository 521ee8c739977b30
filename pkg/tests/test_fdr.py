import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats as sps

from transposable.core import DataMatrix, rng_for
from transposable.errors import DegenerateDensityError, NumericalWarning, ParameterError
from transposable.fdr import (bh_curve, bh_stepup, by_curve, by_stepup, empirical_null_fdr,
                              enull_curve, fdr_curve, permutation_fdr, pi0_estimate,
                              qvalues, run_procedures, to_z, true_fdp, truncated_normal_var)
from transposable.sphere import rank_rows
from transposable.stats import TestStatVector, p_values, row_t_stats

p_vectors = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60).map(np.array)


def test_bh_example():
    assert bh_stepup([0.01, 0.02, 0.9], 0.05).tolist() == [0, 1]
    assert bh_stepup(np.ones(5), 0.05).size == 0


def test_by_example():
    assert by_stepup([0.01, 0.02, 0.9], 0.05).size == 0
    assert np.array_equal(by_stepup([0.03], 0.05), bh_stepup([0.03], 0.05))


def test_stepup_input_errors():
    with pytest.raises(ParameterError):
        bh_stepup([0.1, 1.2], 0.05)
    with pytest.raises(ParameterError):
        bh_stepup([0.1], 1.0)


@settings(max_examples=200, deadline=None)
@given(p=p_vectors, q=st.floats(0.001, 0.5))
def test_by_within_bh(p, q):
    assert set(by_stepup(p, q)) <= set(bh_stepup(p, q))


@settings(max_examples=200, deadline=None)
@given(p=p_vectors, q1=st.floats(0.001, 0.99), q2=st.floats(0.001, 0.99))
def test_bh_monotone_in_q(p, q1, q2):
    lo, hi = sorted((q1, q2))
    assert bh_stepup(p, lo).size <= bh_stepup(p, hi).size


@settings(max_examples=200, deadline=None)
@given(p=p_vectors, q=st.floats(0.001, 0.99))
def test_curves_match_stepup(p, q):
    # rejecting k is allowed exactly when the curve at k is <= q
    for curve, rule in ((bh_curve, bh_stepup), (by_curve, by_stepup)):
        c = curve(p)
        assume(np.all(np.abs(c - q) > 1e-9))
        ok = np.flatnonzero(c <= q)
        assert rule(p, q).size == (ok[-1] + 1 if ok.size else 0)
        assert np.all(np.diff(c) >= 0)


def test_bh_controls_fdr_under_independence():
    fdp = []
    for rep in range(1000):
        fdp.append(float(bh_stepup(rng_for(rep, 4).uniform(size=200), 0.1).size > 0))
    assert np.mean(fdp) <= 0.1


def test_qvalues_and_pi0():
    p = np.array([0.5, 0.01, 0.04, 0.9])
    q = qvalues(p)
    assert q[1] == pytest.approx(0.04) and q[2] == pytest.approx(0.08)
    assert pi0_estimate(p) == pytest.approx(0.5)
    assert pi0_estimate(np.zeros(10)) == 0.05


def null_data(seed, m=200, n=20):
    return DataMatrix.two_class(rng_for(seed, 5).standard_normal((m, n)), n // 2)


def test_permutation_calibration():
    hits = []
    for rep in range(20):
        res = permutation_fdr(null_data(rep), 100, seed=rep)
        hits.append(float(np.any(res.q <= 0.1)))
    assert np.mean(hits) <= 0.15


def test_permutation_properties():
    X = null_data(1).values.copy()
    X[5] = X[9]
    res = permutation_fdr(DataMatrix.two_class(X, 10), 150, seed=2)
    assert res.p[5] == res.p[9] and res.q[5] == res.q[9]
    assert np.all(res.p > 0) and np.all(res.p <= 1)
    order = np.argsort(res.p, kind="stable")
    assert np.all(np.diff(res.q[order]) >= 0)
    again = permutation_fdr(DataMatrix.two_class(X, 10), 150, seed=2)
    assert np.array_equal(res.p, again.p)


def test_permutation_chunking_invariant():
    x = null_data(3, m=50)
    a = permutation_fdr(x, 120, seed=4, chunk=7).p
    b = permutation_fdr(x, 120, seed=4, chunk=500).p
    assert np.array_equal(a, b)


def test_permutation_matches_brute_force():
    x = null_data(6, m=30, n=10)
    B = 100
    res = permutation_fdr(x, B, seed=1)
    from transposable.fdr import permutation_labels
    t_obs = np.abs(row_t_stats(x).values)
    null = []
    for lab in permutation_labels(10, 5, B, 1):
        null.append(np.abs(row_t_stats(DataMatrix(x.values, np.flatnonzero(lab),
                                                  np.flatnonzero(~lab))).values))
    null = np.concatenate(null)
    brute = np.array([(1 + np.sum(null >= t * (1 - 1e-10)) / 30) / (B + 1) for t in t_obs])
    assert np.allclose(res.p, brute)


def test_permutation_arguments():
    with pytest.raises(ParameterError):
        permutation_fdr(null_data(0), 0)
    with pytest.warns(NumericalWarning):
        permutation_fdr(null_data(0), 20)


def z_stats(values):
    return TestStatVector(values, "z", 48, 0.08)


def test_enull_standard_normal():
    res = empirical_null_fdr(z_stats(rng_for(1).standard_normal(10_000)))
    assert abs(res.delta) < 0.05 and abs(res.sigma - 1) < 0.05


def test_enull_mixture():
    rng = rng_for(2)
    z = np.r_[rng.standard_normal(9000), rng.normal(4.0, 1.0, 1000)]
    res = empirical_null_fdr(z_stats(z))
    tail = np.abs(z) > 3
    assert res.local_fdr[tail].mean() < 0.2
    assert res.local_fdr[np.abs(z) < 1].mean() > 0.85
    # analytic two-component local fdr in the tail, for reference
    f0 = 0.9 * sps.norm.pdf(z)
    exact = f0 / (f0 + 0.1 * sps.norm.pdf(z, 4.0))
    assert abs(res.local_fdr[tail].mean() - exact[tail].mean()) < 0.1


def test_enull_errors():
    with pytest.raises(DegenerateDensityError):
        empirical_null_fdr(z_stats(np.ones(500)))
    with pytest.raises(ParameterError):
        empirical_null_fdr(z_stats(np.arange(50.0)))


def test_to_z_accuracy():
    t = TestStatVector(np.array([-40.0, -2.0, 0.0, 2.0, 40.0]), "t", 10, 0.4)
    z = to_z(t)
    assert z[2] == 0 and z[1] == -z[3]
    assert z[3] == pytest.approx(sps.norm.isf(sps.t(10).sf(2.0)))
    assert np.all(np.abs(z) <= 8.5)


def test_truncated_normal_variance():
    c = sps.norm.ppf(0.9)
    exact = sps.truncnorm(-c, c).var()
    assert truncated_normal_var(0.8) == pytest.approx(exact)


def test_true_fdp_examples():
    m = 250
    truth = np.arange(50)
    fdp = true_fdp(np.arange(m), truth)
    k = np.arange(1, m + 1)
    assert np.all(fdp[:50] == 0)
    assert np.allclose(fdp[50:], (k[50:] - 50) / k[50:])
    rev = true_fdp(np.arange(m)[::-1], truth)
    assert np.all(rev[: m - 50] == 1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 1000), m=st.integers(1, 40), frac=st.floats(0, 1))
def test_true_fdp_brute_force(seed, m, frac):
    rng = rng_for(seed)
    ranking = rng.permutation(m)
    truth = rng.choice(m, int(frac * m), replace=False)
    fdp = true_fdp(ranking, truth)
    for k in range(1, m + 1):
        assert fdp[k - 1] == len(set(ranking[:k]) - set(truth)) / k


def test_fdr_curve_validation():
    with pytest.raises(ParameterError):
        fdr_curve([0, 0, 1], {})
    with pytest.raises(ParameterError):
        fdr_curve([0, 1], {"bh": np.zeros(3)})
    with pytest.raises(ParameterError):
        fdr_curve([0, 1], {"storey": np.zeros(2)})
    rep = fdr_curve([1, 0], {"bh": np.array([0.2, 1.4])}, truth=[1])
    assert rep.at(2)["bh"] == 1.0 and np.isnan(rep.at(1)["enull"])
    assert rep.at(1)["true_fdp"] == 0.0


def test_run_procedures_all():
    rng = rng_for(7)
    X = rng.standard_normal((300, 20))
    X[:30, :10] += 1.5
    x = DataMatrix.two_class(X, 10)
    t = row_t_stats(x)
    rep = run_procedures(t, p_values(t), x, perms=100, truth=np.arange(30))
    assert set(rep.perProcedure) == {"bh", "by", "perm", "enull"}
    assert np.array_equal(rep.ranking, rank_rows(t.values))
    assert rep.at(20)["true_fdp"] < 0.2
    curve = enull_curve(empirical_null_fdr(t), rep.ranking)
    assert np.allclose(rep.perProcedure["enull"], np.clip(curve, 0, 1))
    with pytest.raises(ParameterError):
        run_procedures(t, p_values(t), None, ("perm",))
