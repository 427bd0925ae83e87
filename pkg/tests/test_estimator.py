import numpy as np
import pytest

from crowdsig import (
    EquicorrParams,
    ErrorPanel,
    ProfileCoefficients,
    SignaturePlot,
    bootstrap_se,
    closed_form_estimate,
    matching_estimate,
    model_plot,
    mse_closed_form,
    objective_q,
    profile_sigma2,
    sample_moments,
    simulate_equicorrelated,
    with_bootstrap_se,
)
from crowdsig.errors import DomainError, EstimationError


def toy_panel():
    return ErrorPanel([1, 2, 3], [0, 1], [[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class TestObjective:
    def test_zero_at_generating_parameters(self):
        plot = model_plot(EquicorrParams(0.45, 2.5), k_max=12, kind="mse")
        assert objective_q(plot, 0.45, 2.5) == pytest.approx(0.0, abs=1e-28)

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        plot = model_plot(EquicorrParams(0.3, 1.0), k_max=8, kind="mse")
        for _ in range(50):
            q = objective_q(plot, rng.uniform(-0.1, 0.95), rng.uniform(0.1, 5.0))
            assert q >= 0.0

    def test_domain_checks(self):
        plot = model_plot(EquicorrParams(0.3, 1.0), k_max=5, kind="mse")
        with pytest.raises(DomainError):
            objective_q(plot, 1.0, 1.0)
        with pytest.raises(DomainError):
            objective_q(plot, 0.3, 0.0)
        with pytest.raises(DomainError):
            objective_q(plot, -0.3, 1.0, n=5)  # below -1/4
        objective_q(plot, -0.3, 1.0, n=4)      # above -1/3


class TestProfile:
    def test_hand_computed_coefficients(self):
        # plot {1: 2.0, 2: 1.5} (from rho=0.5, sigma2=2)
        plot = SignaturePlot([1, 2], [2.0, 1.5], kind="mse", method="model")
        c = ProfileCoefficients.from_plot(plot)
        assert c.c1 == pytest.approx(2.75)
        assert c.c2 == pytest.approx(1.25)
        assert c.c3 == pytest.approx(0.25)
        assert profile_sigma2(c, 0.5) == pytest.approx(2.0)

    def test_single_k_independent_of_rho(self):
        plot = SignaturePlot([1], [3.0], kind="mse", method="model")
        c = ProfileCoefficients.from_plot(plot)
        assert c.c3 == 0.0
        assert profile_sigma2(c, -0.4) == profile_sigma2(c, 0.9) == 3.0

    def test_strictly_decreasing_in_rho(self):
        c = ProfileCoefficients(2.75, 1.25, 0.25)
        grid = np.linspace(-0.9, 0.99, 50)
        vals = [profile_sigma2(c, r) for r in grid]
        assert np.all(np.diff(vals) < 0)

    def test_nonpositive_denominator(self):
        c = ProfileCoefficients(1.0, 0.5, 1.0)
        with pytest.raises(DomainError):
            profile_sigma2(c, -0.5)

    def test_recovers_generating_sigma2(self):
        # at the generating rho the profile returns the generating sigma2
        for rho, sigma2, kmax in ((0.2, 1.0, 6), (0.75, 18.5, 20), (-0.05, 3.0, 10)):
            plot = model_plot(EquicorrParams(rho, sigma2), k_max=kmax, kind="mse")
            c = ProfileCoefficients.from_plot(plot)
            assert profile_sigma2(c, rho) == pytest.approx(sigma2, rel=1e-12)


class TestMatchingEstimate:
    def test_zero_residual_recovery(self):
        plot = model_plot(EquicorrParams(0.6, 4.0), k_max=20, kind="mse")
        est = matching_estimate(plot, n=40)
        assert est.rho == pytest.approx(0.6, abs=1e-8)
        assert est.sigma2 == pytest.approx(4.0, abs=1e-8)
        assert est.q < 1e-20
        assert est.valid and not est.boundary
        assert est.method == "numeric_profile"

    def test_recovery_across_domain(self):
        # negative rho is only meaningful for small pools: 1+(k-1)rho >= 0
        for rho, n in ((-0.2, 5), (0.05, 15), (0.5, 15), (0.9, 15)):
            plot = model_plot(EquicorrParams(rho, 2.0), k_max=n, kind="mse")
            est = matching_estimate(plot, n=n)
            assert est.rho == pytest.approx(rho, abs=1e-8)

    def test_agrees_with_closed_form_on_balanced_panels(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            n = int(rng.integers(3, 9))
            t = int(rng.integers(5, 40))
            p = ErrorPanel(np.arange(n), np.arange(t), rng.standard_normal((n, t)) * 2.0)
            m = sample_moments(p)
            cf = closed_form_estimate(m)
            num = matching_estimate(mse_closed_form(m, k_max=n), n=n)
            assert num.rho == pytest.approx(cf.rho, abs=1e-6)
            assert num.sigma2 == pytest.approx(cf.sigma2, abs=1e-6 * cf.sigma2)
            scale = float(np.mean(mse_closed_form(m, k_max=n).values ** 2))
            assert num.q / scale < 1e-18

    def test_optimum_beats_random_rho(self):
        plot = mse_closed_form(sample_moments(simulate_equicorrelated(10, 50, 0.4, 2.0, seed=3)), k_max=10)
        est = matching_estimate(plot, n=10)
        c = ProfileCoefficients.from_plot(plot)
        rng = np.random.default_rng(4)
        for _ in range(1000):
            rho = rng.uniform(-1.0 / 9.0 + 1e-6, 1.0 - 1e-6)
            assert est.q <= objective_q(plot, rho, profile_sigma2(c, rho)) + 1e-24

    def test_degenerate_plot_rejected(self):
        plot = SignaturePlot([1, 2], [0.0, 0.0], kind="mse", method="model")
        with pytest.raises(EstimationError):
            matching_estimate(plot, n=5)

    def test_needs_mse_kind(self):
        plot = SignaturePlot([1, 2], [1.0, 0.6], kind="mse_ratio", method="model")
        with pytest.raises(ValueError):
            matching_estimate(plot, n=5)


class TestClosedFormEstimate:
    def test_toy_panel(self):
        est = closed_form_estimate(sample_moments(toy_panel()))
        assert est.sigma2 == pytest.approx(1.0)
        assert est.rho == pytest.approx(-1.0 / 3.0)
        assert est.valid  # -1/3 > -1/2 for N=3
        assert est.q == 0.0
        assert est.method == "closed_form"

    def test_exact_recovery_from_equicorrelated_moments(self):
        from crowdsig import CovarianceSummary

        n, rho, sigma2 = 6, 0.37, 2.4
        cov = np.full((n, n), rho * sigma2)
        np.fill_diagonal(cov, sigma2)
        m = CovarianceSummary(np.arange(n), cov, np.full((n, n), 9, dtype=np.int64))
        est = closed_form_estimate(m)
        assert est.rho == pytest.approx(rho, rel=1e-14)
        assert est.sigma2 == pytest.approx(sigma2, rel=1e-14)

    def test_out_of_domain_flagged_not_clipped(self):
        # two perfectly negatively correlated unit-variance series: rhohat = -1,
        # outside the open interval (-1, 1) for N=2
        v = np.array([[1.0, -1.0, 2.0], [-1.0, 1.0, -2.0]])
        est = closed_form_estimate(sample_moments(ErrorPanel([1, 2], [0, 1, 2], v)))
        assert est.rho == pytest.approx(-1.0)
        assert not est.valid

    def test_scale_equivariance(self):
        p = simulate_equicorrelated(5, 30, 0.3, 1.0, seed=5)
        a = closed_form_estimate(sample_moments(p))
        scaled = ErrorPanel(p.forecaster_ids, p.periods, 3.0 * p.values)
        b = closed_form_estimate(sample_moments(scaled))
        assert b.rho == pytest.approx(a.rho, rel=1e-13)
        assert b.sigma2 == pytest.approx(9.0 * a.sigma2, rel=1e-13)

    def test_matching_scale_equivariance(self):
        p = simulate_equicorrelated(5, 30, 0.3, 1.0, seed=5)
        a = matching_estimate(mse_closed_form(sample_moments(p), k_max=5), n=5)
        scaled = ErrorPanel(p.forecaster_ids, p.periods, 3.0 * p.values)
        b = matching_estimate(mse_closed_form(sample_moments(scaled), k_max=5), n=5)
        assert b.rho == pytest.approx(a.rho, abs=1e-9)
        assert b.sigma2 == pytest.approx(9.0 * a.sigma2, rel=1e-8)


class TestConsistency:
    def test_desk_scale_recovery(self):
        p = simulate_equicorrelated(40, 10_000, 0.5, 1.0, seed=6)
        m = sample_moments(p)
        cf = closed_form_estimate(m)
        assert abs(cf.rho - 0.5) < 0.02
        assert abs(cf.sigma2 - 1.0) < 0.03
        num = matching_estimate(mse_closed_form(m, k_max=20), n=40)
        assert abs(num.rho - 0.5) < 0.02
        assert abs(num.sigma2 - 1.0) < 0.03


class TestBootstrap:
    def test_constant_periods_zero_se(self):
        col = np.array([[1.0], [2.0], [-0.5]])
        p = ErrorPanel([1, 2, 3], [0, 1, 2, 3], np.tile(col, (1, 4)))
        boot = bootstrap_se(p, estimator="closed_form", b_boot=50, seed=0)
        # replicate estimates are bitwise identical; np.std leaves ~1 ulp
        assert boot.se_rho == pytest.approx(0.0, abs=1e-15)
        assert boot.se_sigma2 == pytest.approx(0.0, abs=1e-15)
        assert boot.n_invalid == 0

    def test_seed_determinism(self):
        p = simulate_equicorrelated(6, 40, 0.4, 1.5, seed=7)
        a = bootstrap_se(p, b_boot=60, seed=3)
        b = bootstrap_se(p, b_boot=60, seed=3)
        assert (a.se_rho, a.se_sigma2) == (b.se_rho, b.se_sigma2)
        c = bootstrap_se(p, b_boot=60, seed=4)
        assert (a.se_rho, a.se_sigma2) != (c.se_rho, c.se_sigma2)

    def test_estimator_choices_agree_on_balanced(self):
        p = simulate_equicorrelated(5, 50, 0.3, 1.0, seed=8)
        a = bootstrap_se(p, estimator="closed_form", b_boot=40, seed=1)
        b = bootstrap_se(p, estimator="numeric_profile", b_boot=40, seed=1)
        assert a.se_rho == pytest.approx(b.se_rho, rel=1e-4)
        assert a.se_sigma2 == pytest.approx(b.se_sigma2, rel=1e-4)

    def test_scale_equivariance(self):
        p = simulate_equicorrelated(5, 60, 0.4, 1.0, seed=9)
        a = bootstrap_se(p, b_boot=40, seed=2)
        scaled = ErrorPanel(p.forecaster_ids, p.periods, 2.0 * p.values)
        b = bootstrap_se(scaled, b_boot=40, seed=2)
        assert b.se_rho == pytest.approx(a.se_rho, rel=1e-12)
        assert b.se_sigma2 == pytest.approx(4.0 * a.se_sigma2, rel=1e-12)

    def test_block_bootstrap_runs(self):
        p = simulate_equicorrelated(5, 60, 0.4, 1.0, seed=10)
        boot = bootstrap_se(p, b_boot=30, seed=5, block_length=6)
        assert boot.se_rho > 0

    def test_invalid_replicates_counted(self):
        # forecaster 2 appears only in period 0: resamples that miss period 0
        # have an empty forecaster and are excluded
        v = np.array([[1.0, 2.0, -1.0, 0.5], [3.0, np.nan, np.nan, np.nan]])
        p = ErrorPanel([1, 2], [0, 1, 2, 3], v)
        boot = bootstrap_se(p, estimator="closed_form", b_boot=100, seed=6)
        assert 0 < boot.n_invalid < 100

    def test_attach_se(self):
        p = simulate_equicorrelated(5, 30, 0.3, 1.0, seed=11)
        est = closed_form_estimate(sample_moments(p))
        boot = bootstrap_se(p, b_boot=20, seed=7)
        est2 = with_bootstrap_se(est, boot)
        assert est2.se_rho == boot.se_rho and est2.se_sigma2 == boot.se_sigma2
        assert est.se_rho is None  # original untouched

    def test_preconditions(self):
        p = simulate_equicorrelated(4, 10, 0.2, 1.0, seed=12)
        with pytest.raises(DomainError):
            bootstrap_se(p, b_boot=1, seed=0)
        single = ErrorPanel([1, 2], [0], [[1.0], [2.0]])
        with pytest.raises(DomainError):
            bootstrap_se(single, b_boot=10, seed=0)
