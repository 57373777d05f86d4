from __future__ import annotations

import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fe_design, random_design
from manycov.design import RegressionData, annihilator, prepare_design
from manycov.exceptions import HCKInfeasibleError, UnitLeverageError
from manycov.regression import PartialledFit, fit_partialled
from manycov.variance import (
    ALL_KINDS,
    EstimatorKind,
    MeatEstimate,
    clear_kappa_cache,
    compute_meat,
    hc_weights,
    meat_hc_diag,
    meat_hck,
    meat_ho,
    sandwich,
    solve_kappa_system,
)


def _fit(data):
    prep = prepare_design(data)
    return fit_partialled(prep.data, prep.rep)


def _manual_fit(x, u_hat, W) -> PartialledFit:
    """Fit object with prescribed residuals (for hand-evaluated examples)."""
    rep = annihilator(W)
    v = rep.M @ np.asarray(x, float)[:, None]
    n = v.shape[0]
    return PartialledFit(np.zeros(1), v, np.asarray(u_hat, float), v.T @ v / n, rep, n, 1, rep.K_effective)


def test_estimator_kind_parse():
    assert EstimatorKind.parse("hck") is EstimatorKind.HCK
    assert EstimatorKind.parse(EstimatorKind.HC3) is EstimatorKind.HC3
    assert [str(k) for k in ALL_KINDS] == ["HO0", "HO1", "HC0", "HC1", "HC2", "HC3", "HC4", "HCK"]
    with pytest.raises(ValueError):
        EstimatorKind.parse("hc9")


# -- homoskedastic -----------------------------------------------------------

def test_zero_residuals_give_zero_meats():
    fit = _manual_fit(np.arange(5.0), np.zeros(5), np.ones((5, 1)))
    for kind in ALL_KINDS:
        assert np.all(compute_meat(fit, kind).sigma_mat == 0)
    # an exact affine fit leaves only rounding noise
    x = np.arange(5.0)
    fit = _fit(RegressionData(2 * x + 1, x, np.ones((5, 1))))
    for kind in ALL_KINDS:
        np.testing.assert_allclose(compute_meat(fit, kind).sigma_mat, 0.0, atol=1e-25)


def test_ho1_dof_example():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((10, 4))
    fit = _fit(RegressionData(rng.standard_normal(10), rng.standard_normal(10), W))
    scaled = PartialledFit(fit.beta_hat, fit.v_hat, fit.u_hat * np.sqrt(5 / (fit.u_hat @ fit.u_hat)),
                           fit.gamma_mat, fit.annihilator, 10, 1, 4)
    est = meat_ho(scaled, dof_adjust=True)
    assert est.aux["sigma2"] == pytest.approx(1.0, rel=1e-14)
    np.testing.assert_allclose(est.sigma_mat, scaled.gamma_mat, rtol=1e-14)


def test_ho1_is_scaled_ho0(rng):
    fit = _fit(random_design(rng, 60, 15, d=2))
    ho0, ho1 = meat_ho(fit, False), meat_ho(fit, True)
    np.testing.assert_allclose(ho1.sigma_mat, ho0.sigma_mat * 60 / (60 - 2 - 15), rtol=1e-12)
    assert ho0.kind is EstimatorKind.HO0 and ho1.kind is EstimatorKind.HO1


# -- diagonal HC -------------------------------------------------------------

def test_hc_equalities_without_nuisance(rng):
    fit = _fit(random_design(rng, 40, 0, d=2))
    direct = (fit.v_hat * fit.u_hat[:, None] ** 2).T @ fit.v_hat / 40
    for kind in ("HC0", "HC1", "HC2", "HC3", "HC4", "HCK"):
        np.testing.assert_allclose(compute_meat(fit, kind).sigma_mat, direct, rtol=1e-12)


def test_hc4_equals_hc3_at_balanced_leverage(rng):
    N, T = 30, 3
    data = RegressionData(rng.standard_normal(N * T), rng.standard_normal(N * T), fe_design(N, T))
    fit = _fit(data)
    np.testing.assert_allclose(hc_weights(fit.annihilator, "HC4"), hc_weights(fit.annihilator, "HC3"),
                               rtol=1e-12)
    np.testing.assert_allclose(meat_hc_diag(fit, "HC4").sigma_mat, meat_hc_diag(fit, "HC3").sigma_mat,
                               rtol=1e-12, atol=0)


def test_hc2_hand_example():
    x = np.array([0.0, 1.0, 2.0])
    u = np.array([1.0, -2.0, 1.0])
    fit = _fit(RegressionData(2 * x + u, x, np.ones((3, 1))))
    np.testing.assert_allclose(fit.u_hat, u, atol=1e-14)
    v = np.array([-1.0, 0.0, 1.0])
    expected = (v**2 * u**2 / (2 / 3)).sum() / 3
    assert meat_hc_diag(fit, "HC2").sigma_mat[0, 0] == pytest.approx(expected, rel=1e-13)
    assert expected == pytest.approx(1.0)


def test_hc1_uses_n_over_n_minus_k(rng):
    fit = _fit(random_design(rng, 50, 10, d=2))
    np.testing.assert_allclose(meat_hc_diag(fit, "HC1").sigma_mat,
                               meat_hc_diag(fit, "HC0").sigma_mat * 50 / 40, rtol=1e-12)


def test_unit_leverage_error_lists_rows():
    n = 10
    W = np.zeros((n, 2))
    W[:, 0] = 1
    W[7, 1] = 1
    rng = np.random.default_rng(3)
    fit = _fit(RegressionData(rng.standard_normal(n), rng.standard_normal(n), W))
    for kind in ("HC2", "HC3", "HC4"):
        with pytest.raises(UnitLeverageError) as err:
            meat_hc_diag(fit, kind)
        assert list(err.value.indices) == [7]
    meat_hc_diag(fit, "HC0")  # xi = 0 is fine


@settings(max_examples=40, deadline=None)
@given(n=st.integers(12, 150), frac=st.floats(0.0, 0.45), d=st.integers(1, 3),
       seed=st.integers(0, 2**32 - 1))
def test_meat_orderings(n, frac, d, seed):
    rng = np.random.default_rng(seed)
    K = max(0, min(int(frac * n), n - d - 2))
    fit = _fit(random_design(rng, n, K, d=d))
    hc0, hc1 = meat_hc_diag(fit, "HC0").sigma_mat, meat_hc_diag(fit, "HC1").sigma_mat
    hc2, hc3 = meat_hc_diag(fit, "HC2"), meat_hc_diag(fit, "HC3")
    for m in (hc2, hc3):
        assert m.psd
        np.testing.assert_allclose(m.sigma_mat, m.sigma_mat.T, atol=1e-10 * np.abs(m.sigma_mat).max())
    diff = hc3.sigma_mat - hc2.sigma_mat
    assert np.linalg.eigvalsh(diff)[0] >= -1e-10 * abs(np.trace(diff))
    diff01 = hc1 - hc0
    assert np.linalg.eigvalsh(diff01)[0] >= -1e-10 * abs(np.trace(diff01))


# -- kappa system ------------------------------------------------------------

def test_kappa_identity_when_no_nuisance():
    u2 = np.array([0.3, 1.0, 2.5, 0.0])
    np.testing.assert_allclose(solve_kappa_system(annihilator(np.zeros((4, 0))), u2), u2, rtol=1e-14)


def test_kappa_three_point_example():
    rep = annihilator(np.ones((3, 1)))
    H = rep.M * rep.M
    np.testing.assert_allclose(np.diag(H), 4 / 9, atol=1e-15)
    np.testing.assert_allclose(H[~np.eye(3, dtype=bool)], 1 / 9, atol=1e-15)
    np.testing.assert_allclose(solve_kappa_system(rep, np.ones(3)), 1.5, atol=1e-12)


def test_kappa_infeasible_two_points():
    rep = annihilator(np.ones((2, 1)))
    assert rep.mcal == pytest.approx(0.5)
    with pytest.raises(HCKInfeasibleError, match="infeasible") as err:
        solve_kappa_system(rep, np.ones(2))
    assert err.value.mcal == pytest.approx(0.5)


def test_hck_three_point_meat():
    fit = _manual_fit([0.0, 1.0, 2.0], [1.0, -1.0, 1.0], np.ones((3, 1)))
    est = meat_hck(fit)
    assert est.sigma_mat[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert est.aux["negative_u_tilde"] == 0
    assert est.psd


@settings(max_examples=30, deadline=None)
@given(n=st.integers(8, 120), frac=st.floats(0.0, 0.35), seed=st.integers(0, 2**32 - 1))
def test_kappa_residual_and_varah(n, frac, seed):
    rng = np.random.default_rng(seed)
    K = int(frac * n)
    rep = annihilator(rng.standard_normal((n, K)))
    if rep.mcal >= 0.45:
        return
    u2 = rng.standard_normal(n) ** 2
    sol = solve_kappa_system(rep, u2, use_cache=False)
    H = rep.M * rep.M
    assert np.abs(H @ sol - u2).max() <= 1e-8 * np.abs(u2).max()
    kappa = np.linalg.inv(H)  # explicit inverse only in test code
    assert np.abs(kappa).sum(axis=1).max() <= 1.0 / (0.5 - rep.mcal) * (1 + 1e-10)


def test_kappa_matrix_rhs_matches_columns(rng):
    rep = annihilator(fe_design(10, 3))
    U = rng.standard_normal((30, 4)) ** 2
    batch = solve_kappa_system(rep, U)
    for j in range(4):
        np.testing.assert_allclose(batch[:, j], solve_kappa_system(rep, U[:, j]), rtol=1e-12)


def test_hck_without_nuisance_equals_hc0(rng):
    fit = _fit(random_design(rng, 30, 0, d=2))
    np.testing.assert_array_equal(meat_hck(fit).sigma_mat, meat_hc_diag(fit, "HC0").sigma_mat)


def test_hck_conditional_unbiasedness_aggregate():
    # E[sigma_HCK | design] = (1/n) sum v_i^2 sigma_i^2 when u_hat = M u
    rng = np.random.default_rng(11)
    N, T = 40, 3
    n = N * T
    rep = annihilator(fe_design(N, T))
    v = rep.M @ rng.standard_normal(n)
    sigma2 = 0.5 + rng.random(n) * 2
    S = 20_000
    U = rep.M @ (rng.standard_normal((n, S)) * np.sqrt(sigma2)[:, None])
    ut = solve_kappa_system(rep, U**2)
    meats = (v**2) @ ut / n
    target = (v**2) @ sigma2 / n
    assert abs(meats.mean() / target - 1) < 0.02


# -- minimum-norm extension --------------------------------------------------

def _singular_fit(seed=4):
    rng = np.random.default_rng(seed)
    N, T = 20, 2
    data = RegressionData(rng.standard_normal(N * T), rng.standard_normal(N * T), fe_design(N, T))
    return _fit(data)


def test_hck_minnorm_is_consistent_and_invariant():
    fit = _singular_fit()
    rep = fit.annihilator
    with pytest.raises(HCKInfeasibleError):
        meat_hck(fit)
    u2 = fit.u_hat**2
    sol = solve_kappa_system(rep, u2, singular="minnorm", use_cache=False)
    H = rep.M * rep.M
    assert np.abs(H @ sol - u2).max() <= 1e-8 * u2.max()
    # any null-space shift leaves the meat unchanged
    lam, vec = np.linalg.eigh(H)
    z = vec[:, lam < 1e-9 * lam[-1]] @ np.ones(int(np.sum(lam < 1e-9 * lam[-1])))
    assert np.linalg.norm(z) > 0.5
    shifted = sol + 3.0 * z
    v = fit.v_hat[:, 0]
    assert (v**2) @ shifted == pytest.approx((v**2) @ sol, rel=1e-9, abs=1e-12)
    est = meat_hck(fit, singular="minnorm")
    assert est.aux["minnorm"]


# -- sandwich ----------------------------------------------------------------

def test_sandwich_identity_and_scalar(rng):
    fit = _fit(random_design(rng, 50, 5, d=2))
    ones = MeatEstimate(fit.gamma_mat, EstimatorKind.HO0, True, {})
    np.testing.assert_allclose(sandwich(fit, ones).omega_mat, np.linalg.inv(fit.gamma_mat), rtol=1e-10)
    scalar = _manual_fit([0.0, 1.0, 2.0, 3.0], np.zeros(4), np.zeros((4, 0)))
    scalar = PartialledFit(scalar.beta_hat, scalar.v_hat, scalar.u_hat, np.array([[2.0]]),
                           scalar.annihilator, 4, 1, 0)
    omega = sandwich(scalar, MeatEstimate(np.array([[8.0]]), EstimatorKind.HC0, True, {})).omega_mat
    assert omega[0, 0] == pytest.approx(2.0)


def test_sandwich_matches_dense_product(rng):
    fit = _fit(random_design(rng, 80, 10, d=2))
    meat = meat_hc_diag(fit, "HC2")
    g_inv = np.linalg.inv(fit.gamma_mat)
    np.testing.assert_allclose(sandwich(fit, meat).omega_mat, g_inv @ meat.sigma_mat @ g_inv, rtol=1e-10)


# -- cache -------------------------------------------------------------------

def test_cache_reuse_and_thread_safety(rng):
    clear_kappa_cache()
    rep = annihilator(fe_design(30, 3))
    U = rng.standard_normal((90, 16)) ** 2
    ref = [solve_kappa_system(rep, U[:, j], use_cache=False) for j in range(16)]
    out = [None] * 16

    def work(j):
        out[j] = solve_kappa_system(rep, U[:, j])

    threads = [threading.Thread(target=work, args=(j,)) for j in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for a, b in zip(out, ref):
        np.testing.assert_allclose(a, b, rtol=1e-12)


def test_bias_corrected_residuals_unbiased_per_index():
    # z-scores of per-index Monte Carlo means against exact Gaussian sampling sd
    rng = np.random.default_rng(12)
    N, T, S = 40, 3, 20_000
    n = N * T
    rep = annihilator(fe_design(N, T))
    sigma2 = 0.3 + 2.0 * rng.random(n)
    U = rep.M @ (rng.standard_normal((n, S)) * np.sqrt(sigma2)[:, None])
    means = solve_kappa_system(rep, U**2).mean(axis=1)
    kappa = np.linalg.inv(rep.M * rep.M)
    C = rep.M * sigma2[None, :] @ rep.M
    cov = kappa @ (2.0 * C**2) @ kappa.T / S
    z = (means - sigma2) / np.sqrt(np.diag(cov))
    assert np.abs(z).max() < 4.5
    assert 0.75 < np.mean(z**2) < 1.25
    pooled = (means - sigma2).sum() / np.sqrt(cov.sum())
    assert abs(pooled) < 4.0
