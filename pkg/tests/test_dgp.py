from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from manycov.design import annihilator, leverage_diagnostics
from manycov.dgp import (
    Model1Spec,
    PanelSpec,
    PlmSpec,
    calibrate_variance_constants,
    gen_model1,
    gen_panel,
    gen_plm,
    hetero_trim,
    model1_error_variance,
    panel_error_variance,
    plm_basis_dimension,
    power_series_basis,
    trimmed_normal_second_moment,
)
from manycov.rng import Stream


def test_trim_examples():
    assert hetero_trim(1.5) == 1.5
    assert hetero_trim(3.0) == 2.0
    assert hetero_trim(-3.0) == -2.0
    assert hetero_trim(2.0) == 2.0
    assert hetero_trim(-2.0) == -2.0
    np.testing.assert_array_equal(hetero_trim(np.array([-5.0, 0.1, 7.0])), [-2.0, 0.1, 2.0])


def _trimmed_second_moment_quad(s: float) -> float:
    inner = integrate.quad(lambda x: x * x * stats.norm.pdf(x, scale=s), -2.0, 2.0, epsabs=1e-14)[0]
    return inner + 4.0 * 2.0 * stats.norm.sf(2.0, scale=s)


@pytest.mark.parametrize("s", [0.3, 1.0, 2.0, 5.0])
def test_trimmed_moment_closed_form(s):
    assert trimmed_normal_second_moment(s) == pytest.approx(_trimmed_second_moment_quad(s), rel=1e-10)


def test_calibration_no_dummies():
    ku, kv = calibrate_variance_constants(Model1Spec(n=10, K=0, hetero=True))
    assert kv == 1.0
    m = _trimmed_second_moment_quad(1.0)
    assert m == pytest.approx(0.9205, abs=1e-4)
    assert ku == pytest.approx(1 / (1 + m), rel=1e-10)
    assert ku == pytest.approx(0.5207, abs=1e-4)


def test_dummy_count_binomial_moments():
    spec = Model1Spec(n=700, K=281, hetero=True)
    p = spec.dummy_probability
    assert p == pytest.approx(0.006210, abs=1e-6)
    ku, kv = calibrate_variance_constants(spec)
    K = 281
    assert 1 / kv == pytest.approx(1 + K * p * (1 - p) + (K * p) ** 2, rel=1e-12)
    counts = Stream(3, "binomial-check").generator().binomial(K, p, size=2_000_000)
    assert np.mean(counts.astype(float) ** 2) == pytest.approx(K * p * (1 - p) + (K * p) ** 2, rel=0.01)


@pytest.mark.slow
def test_calibration_monte_carlo_agrees_with_quadrature():
    spec = Model1Spec(n=700, K=141, hetero=True, seed=2)
    exact = calibrate_variance_constants(spec)
    mc = calibrate_variance_constants(spec, method="monte_carlo", draws=10_000_000)
    assert mc[0] == pytest.approx(exact[0], rel=1e-3)
    assert mc[1] == pytest.approx(exact[1], rel=1e-3)
    with pytest.raises(ValueError):
        calibrate_variance_constants(spec, method="monte_carlo", draws=1000)


def test_model1_dummy_sparsity():
    spec = Model1Spec(n=700, K=281, seed=5)
    data = gen_model1(spec)
    p = spec.dummy_probability
    assert 700 * p == pytest.approx(4.35, abs=0.01)
    col = data.W.sum(axis=0)
    sd = math.sqrt(700 * p * (1 - p) / 281)
    assert abs(col.mean() - 700 * p) <= 3 * sd
    assert set(np.unique(data.W)) <= {0.0, 1.0}
    assert data.n == 700 and data.K == 281 and data.d == 1


@pytest.mark.parametrize("hetero,tol", [(False, 0.005), (True, 0.01)])
def test_model1_error_and_regressor_variance(hetero, tol):
    spec = Model1Spec(n=1_000_000, K=5, hetero=hetero, seed=9, beta=0.0)
    data = gen_model1(spec)
    assert data.y.var() == pytest.approx(1.0, abs=tol)  # beta = 0 makes y = u
    assert data.X[:, 0].var() == pytest.approx(1.0, abs=tol)


def test_model1_streams_and_true_variance():
    spec = Model1Spec(n=200, K=20, hetero=True, seed=1)
    a = gen_model1(spec, Stream(1, "d"), error_stream=Stream(1, "e1"))
    b = gen_model1(spec, Stream(1, "d"), error_stream=Stream(1, "e2"))
    np.testing.assert_array_equal(a.W, b.W)
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.y, b.y)
    sig = model1_error_variance(spec, a)
    assert sig.shape == (200,) and np.all(sig > 0)
    assert np.all(model1_error_variance(Model1Spec(n=200, K=20), a) == 1.0)


def test_model1_spec_validation():
    with pytest.raises(ValueError):
        Model1Spec(n=10, K=10)
    with pytest.raises(ValueError):
        Model1Spec(n=10, K=2, gamma=(1.0,))


def test_panel_examples():
    data = gen_panel(PanelSpec(N_units=3, T=3, seed=0))
    assert (data.n, data.K) == (9, 3)
    rep = annihilator(data.W)
    np.testing.assert_allclose(rep.diag, 2 / 3, atol=1e-12)
    block = np.eye(3) - 1 / 3
    np.testing.assert_allclose(rep.M, np.kron(np.eye(3), block), atol=1e-10)
    for N, T in [(4, 2), (10, 5), (7, 3)]:
        spec = PanelSpec(N_units=N, T=T)
        assert spec.K / spec.n == pytest.approx(1 / T)
    diag = leverage_diagnostics(annihilator(gen_panel(PanelSpec(N_units=10, T=2)).W))
    assert not diag.hck_feasible
    with pytest.raises(ValueError):
        PanelSpec(T=1)


def test_panel_hetero_variance_normalized():
    alpha = tuple(Stream(4, "alpha").normal(500))
    spec = PanelSpec(N_units=500, T=3, hetero=True, seed=4, beta=0.0, alpha=alpha)
    sig, u = [], []
    for r in range(200):
        data = gen_panel(spec, Stream(4, "p", r))
        sig.append(panel_error_variance(spec, data, Stream(4, "p", r)))
        u.append(data.y - np.repeat(alpha, 3))
    assert np.concatenate(sig).mean() == pytest.approx(1.0, abs=0.01)
    assert np.concatenate(u).var() == pytest.approx(1.0, abs=0.01)


def test_plm_dimensions():
    assert plm_basis_dimension(3, 10) == 286
    assert plm_basis_dimension(0, 4) == 1
    assert plm_basis_dimension(2, 2) == 6
    z = np.array([[0.5, -1.0]])
    basis = power_series_basis(z, 2)
    assert basis.shape == (1, 6)
    np.testing.assert_allclose(sorted(basis[0]), sorted([1, 0.5, -1.0, 0.25, -0.5, 1.0]))


def test_plm_generator():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        spec = PlmSpec(n=1000, order=3, dim_z=10, seed=3)
    data = gen_plm(spec)
    assert data.K == 286 and data.n == 1000
    np.testing.assert_array_equal(data.W[:, 0], 1.0)
    assert np.abs(data.W[:, 1:11]).max() <= 1.0
    with pytest.raises(ValueError, match="not below"):
        PlmSpec(n=200, order=3, dim_z=10)
    with pytest.warns(UserWarning):
        PlmSpec(n=500, order=3, dim_z=10)
    with pytest.raises(ValueError):
        PlmSpec(g="nope")
