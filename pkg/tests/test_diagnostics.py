import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from snar import DegenerateError, DomainError, InnovationFamily, SnarParams, fit, simulate
from snar.diagnostics import (
    chi_square_sf,
    empirical_quantile,
    q_statistic,
    rho_covariance,
    sample_acf,
    select_tuning,
    weighted_residuals,
)
from snar.montecarlo import derive_seed

NORMAL = InnovationFamily("normal", 1.0)


def _fitted_path(par=SnarParams(1.0, 0.9, 1.0), n=2_000, seed=101):
    path = simulate(par, n, NORMAL, seed=seed)
    return path, fit(path.y)


class TestTuning:
    def test_quantile_order_statistic_convention(self):
        y = np.concatenate([[0.0], np.arange(1.0, 101.0)])  # |y[1:]| = 1..100
        assert select_tuning(y, None, "q90") == 90.0
        assert select_tuning(y, None, "q95") == 95.0

    def test_auto_rule(self):
        path, res = _fitted_path()
        # force the two branches by overriding the estimate
        res.theta_hat = SnarParams(1.0, 0.9, 1.0)   # p*phi^4 = 0.9 < 1
        assert select_tuning(path.y, res, "auto") == math.inf
        res.theta_hat = SnarParams(1.2, 0.9, 1.0)   # 0.9*1.2^4 = 1.866
        a = select_tuning(path.y, res, "auto")
        assert math.isfinite(a)
        assert a == empirical_quantile(np.abs(path.y[1:]), 0.95)

    def test_unknown_mode(self):
        with pytest.raises(DomainError):
            select_tuning(np.zeros(10), None, "q50")


class TestWeightedResiduals:
    def test_small_cutoff_kills_everything(self):
        y = np.array([2.0, 3.0, -4.0, 1.0])
        eta = weighted_residuals(y, SnarParams(1.0, 0.5, 1.0), 1e-9)
        assert np.all(eta == 0.0)

    def test_hand_value(self):
        eta = weighted_residuals(np.array([2.0, 3.0]), SnarParams(0.05, 0.5, 1.0), math.inf)
        assert_allclose(eta, [3.0 - 0.025 * 2.0], rtol=1e-14)

    def test_white_noise_moments_at_truth(self):
        par = SnarParams(1.0, 0.9, 1.0)
        path = simulate(par, 1_000_000, NORMAL, seed=55)
        eta = weighted_residuals(path.y, par, math.inf)
        s2 = eta.var()
        assert abs(eta.mean()) < 0.01
        lag1 = np.mean((eta[1:] - eta.mean()) * (eta[:-1] - eta.mean()))
        assert abs(lag1) < 0.01 * s2

    def test_variance_identity_with_finite_cutoff(self):
        # sample variance of eta vs p(1-p)phi^2 E[y^2 1{|y|<=a}] + sigma2 P(|y|<=a),
        # both sides estimated from the same long path
        par = SnarParams(1.0, 0.9, 1.0)
        path = simulate(par, 1_000_000, NORMAL, seed=56)
        y = path.y
        a = empirical_quantile(np.abs(y[1:]), 0.95)
        eta = weighted_residuals(y, par, a)
        lhs = eta.var()
        yl = y[:-1]
        ind = np.abs(yl) <= a
        rhs = par.p * (1 - par.p) * par.phi**2 * np.mean(yl**2 * ind) + par.sigma2 * np.mean(ind)
        assert_allclose(lhs, rhs, rtol=0.03)


class TestSampleAcf:
    def test_constant_sequence_degenerate(self):
        with pytest.raises(DegenerateError):
            sample_acf(np.full(100, 2.5), 3)

    def test_alternating_sequence_hand_value(self):
        eta = np.tile([1.0, -1.0], 50)
        rho = sample_acf(eta, 1)
        assert_allclose(rho[0], -99.0 / 100.0, rtol=1e-12)

    def test_iid_noise_acf_small(self):
        rng = np.random.default_rng(6)
        hits = 0
        for _ in range(40):
            eta = rng.standard_normal(10_000)
            rho = sample_acf(eta, 10)
            if np.all(np.abs(rho) < 4.0 / 100.0):
                hits += 1
        assert hits >= 38  # >= 95% of seeds

    def test_lag_depth_validated(self):
        with pytest.raises(DomainError):
            sample_acf(np.arange(20.0), 5)


class TestChiSquareSF:
    def test_zero_gives_one(self):
        for k in (1, 3, 10):
            assert chi_square_sf(0.0, k) == 1.0

    def test_frozen_quadrature_values(self):
        # reference values from 40-digit numerical integration of the density
        assert_allclose(chi_square_sf(3.841, 1), 0.05001368376395670, atol=1e-10)
        assert_allclose(chi_square_sf(12.592, 6), 0.04999245818921003, atol=1e-10)
        assert_allclose(chi_square_sf(1.0, 1), 0.31731050786291410, atol=1e-10)
        assert_allclose(chi_square_sf(5.0, 2), 0.08208499862389880, atol=1e-10)
        assert_allclose(chi_square_sf(10.0, 4), 0.04042768199451280, atol=1e-10)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            chi_square_sf(-0.1, 2)
        with pytest.raises(DomainError):
            chi_square_sf(1.0, 0)


class TestRhoCovariance:
    def test_symmetric_psd(self):
        path, res = _fitted_path(seed=102)
        a = select_tuning(path.y, res, "q95")
        V = rho_covariance(path.y, res, a, 6)
        assert np.max(np.abs(V - V.T)) < 1e-12
        assert np.linalg.eigvalsh(V).min() > -1e-8

    def test_needs_enough_data(self):
        path, res = _fitted_path(n=100, seed=103)
        with pytest.raises(DomainError):
            rho_covariance(path.y, res, math.inf, 12)

    def test_diagonal_near_replication_variance(self):
        # the plug-in covariance of sqrt(n)*rho should match a brute-force
        # replication estimate; moderate scale keeps the runtime sane
        par = SnarParams(1.0, 0.9, 1.0)
        n, reps, M = 3_000, 300, 4
        rhos = []
        for rep in range(reps):
            path = simulate(par, n, NORMAL, seed=derive_seed(900, 1, rep))
            res = fit(path.y)
            eta = weighted_residuals(path.y, res.theta_hat, math.inf)
            rhos.append(sample_acf(eta, M))
        mc = np.cov(np.array(rhos).T, ddof=1) * n
        path, res = _fitted_path(par, 30_000, seed=104)
        V = rho_covariance(path.y, res, math.inf, M)
        assert_allclose(np.diag(V), np.diag(mc), rtol=0.25)


class TestQStatistic:
    def test_nonnegative_and_pvalue_consistent(self):
        path, res = _fitted_path(seed=105)
        rep = q_statistic(path.y, res, 6, "q95")
        assert rep.Q >= 0.0
        assert_allclose(rep.p_value, chi_square_sf(rep.Q, 6), rtol=1e-12)
        assert rep.df == 6

    def test_report_serialization(self):
        path, res = _fitted_path(seed=106)
        d = q_statistic(path.y, res, 6, "auto").to_dict()
        assert d["a"] == "inf"  # p*phi^4 < 1 at this fit
        assert d["df"] == d["M"] == 6
        assert len(d["rho_hat"]) == 6

    def test_rescaling_invariance(self):
        # y -> c y with matching theta and cutoff leaves rho unchanged
        path, res = _fitted_path(seed=107)
        y = path.y
        th = res.theta_hat
        a = select_tuning(y, res, "q95")
        c = 7.25
        th_scaled = SnarParams(th.phi, th.p, th.sigma2 * c * c)
        rho1 = sample_acf(weighted_residuals(y, th, a), 6)
        rho2 = sample_acf(weighted_residuals(c * y, th_scaled, c * a), 6)
        assert np.max(np.abs(rho1 - rho2)) < 1e-10

    def test_power_against_linear_ar(self):
        # data from a plain AR(1) with positive coefficient: the fitted
        # model's weighted residuals stay autocorrelated
        rng_master = 777
        reject = 0
        total = 120
        for rep in range(total):
            rng = np.random.default_rng(derive_seed(rng_master, 2, rep))
            eps = rng.standard_normal(1_301)
            y = np.empty(1_301)
            y[0] = eps[0]
            for t in range(1, 1_301):
                y[t] = 0.5 * y[t - 1] + eps[t]
            y = y[500:]
            try:
                res = fit(y)
                rep_q = q_statistic(y, res, 6, "q95")
                if rep_q.p_value < 0.05:
                    reject += 1
            except Exception:
                reject += 1  # failures to fit a misspecified model count against it
        assert reject / total > 0.30
