import numpy as np
import pytest

from flocksde import (
    BrownianPath,
    CommonMultiplicativeNoise,
    ConstantKernel,
    ModelConfig,
    RationalKernel,
    SingularKernel,
    StepScheme,
    SystemState,
    center_frame,
    centered_speed_norm2,
    expected_decay_exact_const,
    expected_decay_upper,
    expected_growth_lower,
    expected_x_upper,
    kernel_bounds,
    make_brownian_path,
    pathwise_v_exact_const,
    pathwise_v_upper,
    pathwise_x_upper,
    simulate,
    thresholds,
)


def constant_path(value_per_step, dt, steps):
    """A deterministic 'path' with a chosen increment per step."""
    inc = np.full((steps, 1), value_per_step, dtype=float)
    return BrownianPath(dt=dt, increments=inc, entropy=0, spawn_key=())


def zero_path(dt, steps):
    return constant_path(0.0, dt, steps)


class TestPathwiseVUpper:
    def test_zero_path_constant(self):
        bound = pathwise_v_upper(2.0, 4, 0.3, zero_path(0.1, 10), [0.0, 0.5, 1.0])
        np.testing.assert_allclose(bound.values, 2.0)

    def test_hand_value(self):
        # w_1 = 1: V = 2 exp(-2 * 2 * 0.5 * 1) = 2 e^-2
        path = constant_path(0.1, 0.1, 10)  # w(1.0) = 1.0
        bound = pathwise_v_upper(2.0, 2, 0.5, path, [1.0])
        assert bound.values[0] == pytest.approx(2.0 * np.exp(-2.0), rel=1e-12)

    def test_saturation_flagged(self):
        path = constant_path(-100.0, 0.1, 10)  # w very negative -> huge bound
        bound = pathwise_v_upper(1.0, 5, 1.0, path, [1.0])
        assert bound.saturated[0]
        assert bound.values[0] == np.finfo(float).max
        assert np.isfinite(bound.log_values[0])  # exact exponent still reported


class TestPathwiseXUpper:
    def test_zero_path_linear(self):
        bound = pathwise_x_upper(1.5, 2.0, 4, 0.3, zero_path(0.25, 8), [0.0, 1.0, 2.0])
        np.testing.assert_allclose(bound.values, [1.5, 3.5, 5.5])

    def test_zero_velocity_constant(self):
        path = make_brownian_path(3, 0.1, 20)
        bound = pathwise_x_upper(1.5, 0.0, 4, 0.3, path, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(bound.values, 1.5)


class TestExpectedEnvelopes:
    def test_growth_at_zero(self):
        bound = expected_growth_lower(3.0, 10, 0.5, 1.0, [0.0])
        assert bound.values[0] == 3.0

    def test_growth_hand_value(self):
        # 2*10*(10*0.25 - 1)*0.2 = 6
        bound = expected_growth_lower(1.0, 10, 0.5, 1.0, [0.2])
        assert bound.values[0] == pytest.approx(np.exp(6.0), rel=1e-12)

    def test_growth_rate_350(self):
        bound = expected_growth_lower(1.0, 50, 0.3, 1.0, [0.0, 1.0])
        assert np.log(bound.values[1] / bound.values[0]) == pytest.approx(350.0, rel=1e-12)

    def test_growth_monotone_iff_supercritical(self):
        t = np.linspace(0, 1, 11)
        growing = expected_growth_lower(1.0, 10, 0.5, 1.0, t)  # 0.5 > sqrt(0.1)
        assert (np.diff(growing.values) > 0).all()
        shrinking = expected_growth_lower(1.0, 10, 0.2, 1.0, t)  # 0.2 < sqrt(0.1)
        assert (np.diff(shrinking.values) < 0).all()

    def test_decay_upper_rate(self):
        # 50 * 0.0025 - 1 = -0.875 per unit time
        bound = expected_decay_upper(1.0, 50, 0.05, 1.0, [0.0, 1.0])
        assert np.log(bound.values[1]) == pytest.approx(-0.875, rel=1e-12)

    def test_decay_upper_constant_at_threshold(self):
        sigma = np.sqrt(1.0 / 50.0)
        bound = expected_decay_upper(1.0, 50, sigma, 1.0, np.linspace(0, 2, 9))
        np.testing.assert_allclose(bound.values, 1.0, rtol=1e-12)

    def test_decay_upper_monotone_iff_subcritical(self):
        t = np.linspace(0, 1, 11)
        decaying = expected_decay_upper(1.0, 50, 0.05, 1.0, t)
        assert (np.diff(decaying.values) < 0).all()
        growing = expected_decay_upper(1.0, 50, 0.2, 1.0, t)  # 0.2 > sqrt(0.02)
        assert (np.diff(growing.values) > 0).all()

    def test_exact_const_balanced(self):
        sigma = 0.3
        c = 5 * sigma * sigma  # c = N sigma^2 makes the rate zero
        bound = expected_decay_exact_const(2.0, 5, sigma, c, np.linspace(0, 3, 7))
        np.testing.assert_allclose(bound.values, 2.0, rtol=1e-12)

    def test_exact_const_hand_value(self):
        bound = expected_decay_exact_const(1.0, 5, 0.1, 1.0, [1.0])
        assert bound.values[0] == pytest.approx(np.exp(-9.5), rel=1e-12)


class TestExactConstOracleAgainstBruteForce:
    """The exponential mean formula must match independent Monte Carlo."""

    def test_scalar_sde_monte_carlo(self):
        # Euler-Maruyama on dV = 2N(N s^2 - c) V dt - 2 N s V dw, written
        # directly here as an independent oracle of the closed form
        n, sigma, c = 5, 0.1, 1.0
        dt, paths = 2e-4, 10_000
        rng = np.random.Generator(np.random.Philox(12345))
        rate = 2 * n * (n * sigma**2 - c)
        v = np.ones(paths)
        for k in range(int(round(1.0 / dt))):
            dw = rng.normal(0.0, np.sqrt(dt), paths)
            v = v * (1.0 + rate * dt) - 2 * n * sigma * v * dw
            t_now = (k + 1) * dt
            if abs(t_now - 0.5) < 1e-12 or abs(t_now - 1.0) < 1e-12:
                target = expected_decay_exact_const(1.0, n, sigma, c, [t_now]).values[0]
                z = (v.mean() - target) / (v.std(ddof=1) / np.sqrt(paths))
                assert abs(z) <= 3.0, f"t={t_now}: z={z:.2f}"

    def test_lognormal_moment_recovers_mean(self):
        # E exp(-2 N sigma w_t) = exp(2 N^2 sigma^2 t) over 1e4 endpoints
        n, sigma, t = 5, 0.1, 1.0
        rng = np.random.Generator(np.random.Philox(999))
        w = rng.normal(0.0, np.sqrt(t), 10_000)
        samples = np.exp(-2 * n * sigma * w)
        target = np.exp(2 * n * n * sigma * sigma * t)
        z = (samples.mean() - target) / (samples.std(ddof=1) / np.sqrt(samples.size))
        assert abs(z) <= 3.0

    def test_noise_free_simulation_matches_exponential(self):
        # with no noise and psi = c the decay e^{-2Nct} must hold to O(dt)
        n, c, dt, t_final = 5, 1.0, 1e-3, 0.25
        config = ModelConfig(ConstantKernel(c), None, n, 2)
        rng = np.random.default_rng(17)
        init = center_frame(SystemState(0.0, rng.uniform(0, 1, (n, 2)), rng.uniform(0, 1, (n, 2))))[0]
        traj = simulate(config, init, StepScheme.EULER_MARUYAMA_ITO, dt, t_final,
                        output_times=np.round(np.arange(0, 6) * 0.05, 12))
        exact = centered_speed_norm2(init) * np.exp(-2 * n * c * traj.times)
        rel = np.abs(traj.v2_centered / exact - 1.0).max()
        assert rel <= 10 * dt


class TestPathwiseExactConst:
    def test_zero_noise_zero_kernel_constant(self):
        bound = pathwise_v_exact_const(3.0, 5, 0.1, 0.0, zero_path(0.1, 10), [0.0, 0.5, 1.0])
        np.testing.assert_allclose(bound.values, 3.0)

    def test_hand_exponent(self):
        # exponent -2*5*1*1 - 2*5*0.1*0.3 = -10.3
        path = constant_path(0.03, 0.1, 10)  # w(1.0) = 0.3
        bound = pathwise_v_exact_const(1.0, 5, 0.1, 1.0, path, [1.0])
        assert bound.log_values[0] == pytest.approx(-10.3, rel=1e-12)

    def test_expectation_over_paths(self):
        # averaging the pathwise solution over many paths recovers the mean law
        n, sigma, c, t = 5, 0.1, 1.0, 0.5
        rng = np.random.Generator(np.random.Philox(77))
        w = rng.normal(0.0, np.sqrt(t), 20_000)
        samples = np.exp(-2 * n * c * t - 2 * n * sigma * w)
        target = expected_decay_exact_const(1.0, n, sigma, c, [t]).values[0]
        z = (samples.mean() - target) / (samples.std(ddof=1) / np.sqrt(samples.size))
        assert abs(z) <= 3.0


class TestExpectedXUpper:
    def test_at_zero(self):
        bound = expected_x_upper(1.5, 2.0, 5, 0.1, 1.0, [0.0])
        assert bound.values[0] == pytest.approx(1.5)

    def test_zero_velocity_constant(self):
        bound = expected_x_upper(1.5, 0.0, 5, 0.1, 1.0, np.linspace(0, 10, 5))
        np.testing.assert_allclose(bound.values, 1.5)

    def test_finite_limit(self):
        # N=2, sigma=0.1: psi* + (N^2-N) sigma^2 = 1.02
        bound = expected_x_upper(1.0, 3.0, 2, 0.1, 1.0, [200.0])
        assert bound.values[0] == pytest.approx(1.0 + 2.0 * 3.0 / 1.02, rel=1e-9)

    def test_monotone_increasing_to_limit(self):
        bound = expected_x_upper(1.0, 1.0, 5, 0.1, 1.0, np.linspace(0, 20, 21))
        assert (np.diff(bound.values) >= 0).all()
        assert bound.values[-1] <= 1.0 + 2.0 / (1.0 + 20 * 0.01) + 1e-9

    def test_degenerate_envelope_rejected(self):
        # r = (N - N^2) sigma^2 - psi* vanishes only when sigma = psi* = 0
        with pytest.raises(ValueError):
            expected_x_upper(1.0, 1.0, 2, 0.0, 0.0, [1.0])


class TestThresholds:
    def test_constant_kernel_n50(self):
        report = thresholds(50, kernel_bounds(ConstantKernel(1.0)))
        assert report.sigma_flock_max == pytest.approx(np.sqrt(0.02), abs=1e-15)
        assert report.sigma_nonflock_min == pytest.approx(np.sqrt(0.02), abs=1e-15)

    def test_n10(self):
        report = thresholds(10, kernel_bounds(ConstantKernel(1.0)))
        assert report.sigma_nonflock_min == pytest.approx(0.31622776601683794, abs=1e-15)

    def test_vanishing_infimum_gives_zero_budget(self):
        report = thresholds(10, kernel_bounds(RationalKernel(1.0, 1.0, 0.25)))
        assert report.sigma_flock_max == 0.0
        assert report.classify(1e-9) == "indeterminate"

    def test_classification(self):
        report = thresholds(50, kernel_bounds(ConstantKernel(1.0)))
        assert report.classify(0.05) == "flocking"
        assert report.classify(0.3) == "non-flocking"
        assert report.classify(np.sqrt(0.02)) == "indeterminate"

    def test_unbounded_kernel_inapplicable(self):
        report = thresholds(10, kernel_bounds(SingularKernel(beta=0.5, cap_s=None)))
        assert not report.nonflock_applicable
        assert report.sigma_nonflock_min == np.inf
        assert report.classify(100.0) == "indeterminate"

    def test_invalid_inputs(self):
        report = thresholds(10, kernel_bounds(ConstantKernel(1.0)))
        with pytest.raises(ValueError):
            report.classify(0.0)
        with pytest.raises(ValueError):
            thresholds(1, kernel_bounds(ConstantKernel(1.0)))


class TestPathwiseDomination:
    def test_simulation_stays_under_bounds(self):
        # comparison-theorem sandwich on shared paths, a few seeds at desk scale
        config = ModelConfig(
            RationalKernel(1.0, 1.0, 0.25), CommonMultiplicativeNoise(0.2), 5, 2
        )
        out = np.round(np.arange(0, 51) * 0.02, 12)
        for seed in range(3):
            rng = np.random.default_rng(100 + seed)
            init = center_frame(
                SystemState(0.0, rng.uniform(0, 1, (5, 2)), rng.uniform(0, 1, (5, 2)))
            )[0]
            traj = simulate(config, init, StepScheme.EULER_MARUYAMA_ITO, 1e-4, 1.0,
                            output_times=out, seed=200 + seed)
            v_bound = pathwise_v_upper(centered_speed_norm2(init), 5, 0.2, traj.path, traj.times)
            assert (traj.v2_centered <= 1.05 * v_bound.values).all()
            x_norms = np.array([np.linalg.norm(s.x) for s in traj.states])
            x_bound = pathwise_x_upper(float(np.linalg.norm(init.x)), float(np.linalg.norm(init.v)),
                                       5, 0.2, traj.path, traj.times)
            assert (x_norms <= 1.05 * x_bound.values).all()
