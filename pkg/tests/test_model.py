import numpy as np
import pytest
from numpy.testing import assert_allclose

from snar import (
    DomainError,
    InnovationFamily,
    SnarParams,
    kurtosis,
    second_moment,
    simulate,
    simulate_aux,
    validate_params,
)

NORMAL = InnovationFamily("normal", 1.0)


class TestValidateParams:
    def test_accepts_reference_config(self):
        p = validate_params(1.025, 0.977, 36.0)
        assert (p.phi, p.p, p.sigma2) == (1.025, 0.977, 36.0)

    def test_rejects_p_of_one(self):
        with pytest.raises(DomainError):
            validate_params(1.0, 1.0, 1.0)

    def test_accepts_degenerate_noise(self):
        validate_params(0.0, 0.0, 1.0)

    @pytest.mark.parametrize(
        "phi,p,s2",
        [(1.0, -0.1, 1.0), (1.0, 0.5, 0.0), (1.0, 0.5, -1.0),
         (float("nan"), 0.5, 1.0), (float("inf"), 0.5, 1.0), (1.0, 0.5, float("nan"))],
    )
    def test_rejects_bad_inputs(self, phi, p, s2):
        with pytest.raises(DomainError):
            validate_params(phi, p, s2)


class TestSimulate:
    def test_phi_zero_gives_iid_noise(self):
        path = simulate(SnarParams(0.0, 0.9, 1.0), 200, NORMAL, seed=3)
        assert np.array_equal(path.y[1:], path.eps[1:])

    def test_recursion_identity_bit_for_bit(self):
        path = simulate(SnarParams(1.05, 0.977, 36.0),
                        500, InnovationFamily.with_variance("laplace", 36.0), seed=11)
        lhs = path.y[1:]
        rhs = path.s[1:].astype(float) * 1.05 * np.abs(path.y[:-1]) + path.eps[1:]
        assert np.array_equal(lhs, rhs)

    def test_reproducible(self):
        a = simulate(SnarParams(1.0, 0.9, 1.0), 300, NORMAL, seed=17, burn_in=100)
        b = simulate(SnarParams(1.0, 0.9, 1.0), 300, NORMAL, seed=17, burn_in=100)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.s, b.s)
        assert a.seed == b.seed == 17

    def test_y0_respected_without_burn_in(self):
        path = simulate(SnarParams(1.0, 0.9, 1.0), 10, NORMAL, seed=1, y0=4.5)
        assert path.y[0] == 4.5

    def test_scale_mismatch_rejected(self):
        with pytest.raises(DomainError):
            simulate(SnarParams(1.0, 0.9, 4.0), 10, NORMAL, seed=1)

    def test_n_must_be_positive(self):
        with pytest.raises(DomainError):
            simulate(SnarParams(1.0, 0.9, 1.0), 0, NORMAL, seed=1)

    def test_sample_second_moment_matches_formula(self):
        # mean square over 1e6 points vs sigma2 / (1 - p phi^2)
        par = SnarParams(1.0, 0.9, 1.0)
        path = simulate(par, 1_000_000, NORMAL, seed=23)
        m2 = float(np.mean(path.y**2))
        assert_allclose(m2, second_moment(par), rtol=0.05)

    def test_explosive_excursions_frequent(self):
        # at (1.05, 0.977, 36) most windows of 400 points show a large excursion
        par = SnarParams(1.05, 0.977, 36.0)
        fam = InnovationFamily.with_variance("normal", 36.0)
        hits = 0
        trials = 200
        for seed in range(trials):
            path = simulate(par, 400, fam, seed=seed)
            if np.max(path.y) > 5.0 * 6.0:
                hits += 1
        assert hits / trials > 0.9


class TestSimulateAux:
    def test_k_zero_is_single_innovation(self):
        aux = simulate_aux(SnarParams(1.2, 0.9, 1.0), 0, NORMAL, seed=2)
        assert aux.z.shape == (1,)

    def test_phi_zero_copies_innovations(self):
        par = SnarParams(0.0, 0.9, 1.0)
        aux = simulate_aux(par, 50, NORMAL, seed=9)
        rng = np.random.default_rng(9)
        eps = NORMAL.sample(rng, 51)
        assert np.array_equal(aux.z, eps)

    def test_recursion_identity(self):
        par = SnarParams(1.2, 0.9, 1.0)
        aux = simulate_aux(par, 100, NORMAL, seed=4)
        rng = np.random.default_rng(4)
        eps = NORMAL.sample(rng, 101)
        assert aux.z[0] == eps[0]
        assert np.array_equal(aux.z[1:], 1.2 * np.abs(aux.z[:-1]) + eps[1:])

    def test_explosive_growth_monotone_in_k(self):
        # mean of z_k over many seeds increases with k for an explosive phi
        par = SnarParams(1.2, 0.9, 1.0)
        rng = np.random.default_rng(77)
        reps = 10_000
        z = NORMAL.sample(rng, reps)
        means = []
        for k in range(1, 51):
            z = 1.2 * np.abs(z) + NORMAL.sample(rng, reps)
            if k >= 5:
                means.append(z.mean())
        assert np.all(np.diff(means) > 0)

    def test_negative_k_rejected(self):
        with pytest.raises(DomainError):
            simulate_aux(SnarParams(1.2, 0.9, 1.0), -1, NORMAL, seed=0)


class TestMoments:
    def test_second_moment_values(self):
        assert_allclose(second_moment(SnarParams(1.0, 0.9, 1.0)), 10.0, rtol=1e-12)
        assert_allclose(second_moment(SnarParams(0.0, 0.5, 2.0)), 2.0, rtol=1e-12)
        assert second_moment(SnarParams(1.2, 0.9, 1.0)) is None

    def test_kurtosis_values(self):
        # no bubble state: the observed process is the innovation itself
        assert_allclose(kurtosis(SnarParams(2.0, 0.0, 1.0), 3.0), 3.0, rtol=1e-12)
        # direct arithmetic at phi=1, p=0.5 under normal innovations
        assert_allclose(kurtosis(SnarParams(1.0, 0.5, 1.0), 3.0), 4.5, rtol=1e-12)
        assert kurtosis(SnarParams(1.2, 0.9, 1.0), 3.0) is None

    def test_kurtosis_normal_case_identity(self):
        # {6pf^2 + 3(1-pf^2)}(1-pf^2)/(1-pf^4) == 3(1-p^2 f^4)/(1-p f^4)
        par = SnarParams(1.0, 0.9, 1.0)
        expect = 3.0 * (1.0 - par.p**2 * par.phi**4) / (1.0 - par.p * par.phi**4)
        assert_allclose(kurtosis(par, 3.0), expect, rtol=1e-12)
        assert kurtosis(par, 3.0) > 3.0
