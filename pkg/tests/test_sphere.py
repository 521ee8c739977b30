import numpy as np
import pytest
from scipy import stats as sps

from transposable.core import (DataMatrix, MatrixNormalParams, SignalSpec, decompose,
                               make_structured_cov, rng_for, sample_matrix_normal)
from transposable.errors import NumericalWarning, ParameterError
from transposable.sphere import (central_match, central_window, filter_rows, rank_rows,
                                 sphere, sym_inv_sqrt, t_central_variance)
from transposable.stats import TestStatVector, c_n, eta, row_t_stats
from transposable.trcm import TrcmFit

from conftest import random_spd

C1, C2 = np.arange(25), np.arange(25, 50)


def off_diag_abs(a):
    return np.abs(a - np.diag(np.diag(a)))


def test_inv_sqrt_examples():
    assert np.allclose(sym_inv_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(sym_inv_sqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))


@pytest.mark.parametrize("seed", range(5))
def test_inv_sqrt_identity(seed):
    A = random_spd(rng_for(seed), 5)
    R = sym_inv_sqrt(A)
    assert np.allclose(R, R.T)
    assert np.allclose(R @ A @ R, np.eye(5), atol=1e-8)


def test_inv_sqrt_floor_warns():
    with pytest.warns(NumericalWarning):
        R = sym_inv_sqrt(np.diag([1.0, 0.0]))
    assert np.all(np.isfinite(R))
    with pytest.raises(ParameterError):
        sym_inv_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


def model_data(seed, Sigma, Delta, signal=True):
    params = MatrixNormalParams.centered(Sigma, Delta)
    sig = SignalSpec.block(Sigma.shape[0]) if signal else None
    return sample_matrix_normal(params, sig, seed=seed, n1=Delta.shape[0] // 2)


def test_identity_fit_keeps_signal_and_noise():
    x = model_data(1, np.eye(40), np.eye(10))
    dec = decompose(x)
    sp = sphere(x, TrcmFit.from_covariances(np.eye(40), np.eye(10)))
    assert np.allclose(sp.values, dec.signalMatrix + dec.noise)
    assert np.allclose(sp.noise, dec.noise)


def test_identity_sphering_keeps_ranks():
    x = model_data(2, np.eye(60), np.eye(12))
    sp = sphere(x, TrcmFit.from_covariances(np.eye(60), np.eye(12)))
    centered = x.with_values(x.values - decompose(x).meanMatrix)
    assert np.array_equal(rank_rows(row_t_stats(centered).values),
                          rank_rows(row_t_stats(sp.data).values))


def test_signal_preserved(sigma1, delta1):
    x = model_data(3, sigma1, delta1)
    dec = decompose(x)
    sp = sphere(x, TrcmFit.from_covariances(sigma1, delta1))
    X = sp.values
    diff = X[:, C1].mean(axis=1) - X[:, C2].mean(axis=1)
    assert np.abs(diff - (dec.psi1Hat - dec.psi2Hat)).max() < 1e-10


def test_filter_then_sphere_keeps_signal(sigma1, delta1):
    x = model_data(4, sigma1, delta1)
    dec = decompose(x)
    sub, index = filter_rows(x, 100)
    fit = TrcmFit.from_covariances(sigma1[np.ix_(index, index)], delta1)
    X = sphere(sub, fit).values
    diff = X[:, C1].mean(axis=1) - X[:, C2].mean(axis=1)
    sub_dec = decompose(sub)
    assert np.abs(diff - (sub_dec.psi1Hat - sub_dec.psi2Hat)).max() < 1e-10
    # against the full-data estimate only a common offset remains, from
    # column means taken over fewer rows
    shift = diff - (dec.psi1Hat - dec.psi2Hat)[index]
    assert np.ptp(shift) < 1e-10


def test_oracle_sphering_matches_iid_noise_level(sigma1, delta1):
    fit = TrcmFit.from_covariances(sigma1, delta1)
    before, after, iid = [], [], []
    for rep in range(10):
        x = model_data(rng_for(5, rep), sigma1, delta1)
        N0 = decompose(x).noise
        N1 = sphere(x, fit).noise
        Z = decompose(x.with_values(rng_for(6, rep).standard_normal((250, 50)))).noise
        for store, N in ((before, N0), (after, N1), (iid, Z)):
            store.append((np.corrcoef(N), np.corrcoef(N.T)))
    for k in range(2):
        mean = {name: off_diag_abs(np.mean([r[k] for r in store], axis=0)).mean()
                for name, store in (("before", before), ("after", after), ("iid", iid))}
        # sphered correlations sit at the sampling-noise floor of independent data
        assert mean["after"] < 1.1 * mean["iid"]
        assert mean["before"] > 1.5 * mean["iid"]


def test_fit_shape_mismatch():
    x = model_data(7, np.eye(20), np.eye(8))
    with pytest.raises(ParameterError):
        sphere(x, TrcmFit.from_covariances(np.eye(19), np.eye(8)))


def test_scaled_t_null(sigma1, delta1):
    fit = TrcmFit.from_covariances(sigma1, delta1)
    scale = np.sqrt(eta(delta1, C1, C2) / c_n(25, 25))
    rows = []
    for rep in range(400):
        x = model_data(rng_for(77, rep), sigma1, delta1, signal=False)
        t = row_t_stats(sphere(x, fit).data).values
        # one row per independent block of the row covariance
        rows.append(t[::10] / scale)
    assert sps.kstest(np.concatenate(rows), sps.t(48).cdf).pvalue > 0.01


def t_stats(values, df=48):
    return TestStatVector(values, "t_sphered", df, c_n(25, 25))


def test_central_variance_full_mass():
    assert t_central_variance(48, 1.0) == pytest.approx(48 / 46)
    assert central_window(0.8) == pytest.approx((0.1, 0.9))


def test_central_variance_matches_simulation():
    draws = sps.t(48).rvs(1_000_000, random_state=np.random.default_rng(1))
    lo, hi = sps.t(48).ppf([0.1, 0.9])
    inside = draws[(draws >= lo) & (draws <= hi)]
    assert t_central_variance(48, 0.8) == pytest.approx(np.mean(inside**2), rel=5e-3)


@pytest.mark.parametrize("factor", [1.0, 3.0])
def test_central_match_scale(factor):
    draws = factor * sps.t(48).rvs(100_000, random_state=np.random.default_rng(2))
    res = central_match(t_stats(draws), 0.8)
    assert res.scale == pytest.approx(1 / factor, rel=0.01 if factor == 1 else 0.02)
    assert res.scaledStats.kind == "t_central_matched"


def test_central_match_full_sample():
    draws = rng_for(3).standard_normal(5000) * 2
    res = central_match(t_stats(draws), 1.0)
    assert res.scale == pytest.approx(np.sqrt(48 / 46) / draws.std(ddof=1))


@pytest.mark.parametrize("c", [0.01, 2.5, 1e4])
def test_central_match_equivariant(c):
    draws = rng_for(4).standard_t(48, 1000)
    a = central_match(t_stats(draws), 0.8).scaledStats.values
    b = central_match(t_stats(c * draws), 0.8).scaledStats.values
    assert np.allclose(a, b, rtol=1e-10)


@pytest.mark.parametrize("pi0", [0.0, 1.2])
def test_central_match_errors(pi0):
    with pytest.raises(ParameterError):
        central_match(t_stats(np.arange(100.0)), pi0)


def test_rank_rows_ties_by_index():
    assert rank_rows([1.0, -3.0, 3.0, 0.5]).tolist() == [1, 2, 0, 3]


def test_filter_rows():
    x = DataMatrix.two_class(rng_for(8).standard_normal((20, 8)), 4)
    sub, index = filter_rows(x, 20)
    assert np.array_equal(index, np.arange(20))
    X = x.values.copy()
    X[7, :4] += 50.0
    sub, index = filter_rows(x.with_values(X), 5)
    assert 7 in index
    assert rank_rows(row_t_stats(x.with_values(X)).values)[0] == 7
    with pytest.raises(ParameterError):
        filter_rows(x, 21)
