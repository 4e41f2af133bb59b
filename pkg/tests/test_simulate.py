"""Integrator and adjoint: analytic solutions, order checks, gradient cross-checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topopath.simulate import (
    DivergenceError,
    SimulationConfig,
    StateGradientSeed,
    Trajectory,
    adjoint_gradient,
    finite_difference_gradient,
    integrate,
    tail_point_cloud,
)
from topopath.systems import (
    ParameterVector,
    SystemModel,
    lorenz_model,
    rossler_model,
)


def _toy(state_dim, param_dim, scalar_field, scalar_jx, scalar_jm, nonautonomous=False):
    """Minimal model wrapper for closed-form test systems."""
    return SystemModel(
        name="toy",
        state_dim=state_dim,
        param_dim=param_dim,
        field=lambda x, t, m: np.asarray(scalar_field(tuple(x), t, tuple(m))),
        jac_state=lambda x, t, m: np.asarray(scalar_jx(tuple(x), t, tuple(m))),
        jac_param=lambda x, t, m: np.asarray(scalar_jm(tuple(x), t, tuple(m))),
        default_initial_state=np.zeros(state_dim),
        default_params=ParameterVector(
            np.zeros(param_dim),
            tuple(f"p{i}" for i in range(param_dim)),
            (None,) * param_dim,
        ),
        default_sim=SimulationConfig(0.0, 1.0, 0.01, 2),
        nonautonomous=nonautonomous,
        scalar_field=scalar_field,
        scalar_jac_state=scalar_jx,
        scalar_jac_param=scalar_jm,
    )


def _linear_growth():
    # x' = mu x, solution x0 exp(mu t)
    return _toy(
        1,
        1,
        lambda x, t, m: (m[0] * x[0],),
        lambda x, t, m: ((m[0],),),
        lambda x, t, m: ((x[0],),),
    )


def _harmonic(omega_as_param=True):
    # x'' = -omega^2 x written as a first-order pair
    return _toy(
        2,
        1,
        lambda x, t, m: (x[1], -m[0] * m[0] * x[0]),
        lambda x, t, m: ((0.0, 1.0), (-m[0] * m[0], 0.0)),
        lambda x, t, m: ((0.0,), (-2.0 * m[0] * x[0],)),
    )


class TestSimulationConfig:
    @pytest.mark.parametrize(
        "cfg,expected",
        [
            (SimulationConfig(0.0, 10.0, 0.01, 500), 1001),
            (SimulationConfig(0.0, 200.0, 0.04, 500), 5001),
            (SimulationConfig(0.0, 100.0, 0.03, 500), 3334),
            (SimulationConfig(0.0, 0.0, 0.1, 2), 1),
        ],
    )
    def test_sample_counts(self, cfg, expected):
        assert cfg.n_samples == expected

    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            SimulationConfig(0.0, -1.0, 0.01, 10)
        with pytest.raises(ValueError):
            SimulationConfig(0.0, 1.0, 0.0, 10)
        with pytest.raises(ValueError):
            SimulationConfig(0.0, 1.0, -0.01, 10)
        with pytest.raises(ValueError):
            SimulationConfig(0.0, 1.0, 0.01, 1)
        with pytest.raises(ValueError):
            SimulationConfig(0.0, math.inf, 0.01, 10)

    def test_rejects_tail_longer_than_run(self):
        with pytest.raises(ValueError):
            SimulationConfig(0.0, 1.0, 0.1, 500)


class TestIntegrate:
    def test_exponential_decay_endpoint(self):
        model = _linear_growth()
        traj = integrate(model, [-1.0], [1.0], SimulationConfig(0.0, 1.0, 0.001, 2))
        assert traj.states[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-10)

    def test_zero_span_returns_initial_state_only(self):
        model = _linear_growth()
        traj = integrate(model, [2.0], [3.5], SimulationConfig(1.0, 1.0, 0.1, 2))
        assert traj.n_samples == 1
        np.testing.assert_array_equal(traj.states, [[3.5]])
        np.testing.assert_array_equal(traj.times, [1.0])

    def test_fourth_order_convergence(self):
        # halving dt must cut the endpoint error by about 2^4
        model = _linear_growth()
        exact = math.exp(-1.0)

        def endpoint_error(dt):
            traj = integrate(model, [-1.0], [1.0], SimulationConfig(0.0, 1.0, dt, 2))
            return abs(traj.states[-1, 0] - exact)

        ratio = endpoint_error(0.05) / endpoint_error(0.025)
        assert 16.0 * 0.9 <= ratio <= 16.0 * 1.1, f"convergence ratio {ratio}"

    def test_harmonic_energy_drift_over_hundred_periods(self):
        model = _harmonic()
        omega = 1.0
        period = 2.0 * math.pi / omega
        cfg = SimulationConfig(0.0, 100.0 * period, period / 1000.0, 2)
        traj = integrate(model, [omega], [1.0, 0.0], cfg)
        energy = 0.5 * (traj.states[:, 1] ** 2 + omega**2 * traj.states[:, 0] ** 2)
        drift = np.max(np.abs(energy - energy[0])) / energy[0]
        assert drift < 1e-6, f"relative energy drift {drift}"

    def test_divergence_raises_with_last_finite_time(self):
        # x' = x^2 from x0=1 blows up at t=1
        model = _toy(
            1,
            1,
            lambda x, t, m: (x[0] * x[0],),
            lambda x, t, m: ((2.0 * x[0],),),
            lambda x, t, m: ((0.0,),),
        )
        with pytest.raises(DivergenceError) as exc:
            integrate(model, [0.0], [1.0], SimulationConfig(0.0, 2.0, 0.001, 2))
        assert 0.9 <= exc.value.last_finite_time <= 2.0

    def test_dimension_mismatches_rejected(self):
        model = _linear_growth()
        cfg = SimulationConfig(0.0, 1.0, 0.1, 2)
        with pytest.raises(ValueError):
            integrate(model, [1.0, 2.0], [1.0], cfg)
        with pytest.raises(ValueError):
            integrate(model, [1.0], [1.0, 2.0], cfg)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(min_value=-50.0, max_value=50.0, allow_nan=False))
    def test_autonomous_flow_ignores_time_origin(self, t0):
        # shifting t0 relabels times but cannot change an autonomous orbit
        model = lorenz_model()
        mu = model.default_params.values
        base = integrate(model, mu, model.default_initial_state, SimulationConfig(0.0, 1.0, 0.01, 2))
        moved = integrate(model, mu, model.default_initial_state, SimulationConfig(t0, t0 + 1.0, 0.01, 2))
        np.testing.assert_array_equal(base.states, moved.states)


class TestTrajectoryAndTail:
    def test_rejects_nonuniform_times(self):
        with pytest.raises(ValueError):
            Trajectory(times=np.array([0.0, 0.1, 0.3]), states=np.zeros((3, 2)))

    def test_rejects_decreasing_times(self):
        with pytest.raises(ValueError):
            Trajectory(times=np.array([0.0, -0.1, -0.2]), states=np.zeros((3, 2)))

    def test_tail_points_and_indices(self):
        times = 0.1 * np.arange(10)
        states = np.arange(20.0).reshape(10, 2)
        traj = Trajectory(times=times, states=states)
        cloud = tail_point_cloud(traj, 4)
        np.testing.assert_array_equal(cloud.source_indices, [6, 7, 8, 9])
        np.testing.assert_array_equal(cloud.points, states[6:])
        # the cloud owns its memory
        cloud.points[0, 0] = -1.0
        assert traj.states[6, 0] == 12.0

    def test_tail_bounds(self):
        traj = Trajectory(times=0.1 * np.arange(5), states=np.zeros((5, 2)))
        with pytest.raises(ValueError):
            tail_point_cloud(traj, 6)
        with pytest.raises(ValueError):
            tail_point_cloud(traj, 0)
        assert tail_point_cloud(traj, 5).points.shape == (5, 2)


class TestStateGradientSeed:
    def test_requires_strictly_increasing_indices(self):
        with pytest.raises(ValueError):
            StateGradientSeed(np.array([3, 3]), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            StateGradientSeed(np.array([-1, 2]), np.zeros((2, 2)))

    def test_requires_matching_rows(self):
        with pytest.raises(ValueError):
            StateGradientSeed(np.array([0, 1, 2]), np.zeros((2, 2)))

    def test_requires_finite_gradients(self):
        with pytest.raises(ValueError):
            StateGradientSeed(np.array([0]), np.array([[np.nan, 0.0]]))


class TestAdjointGradient:
    def test_matches_analytic_sensitivity(self):
        # L = x(T) for x' = mu x has dL/dmu = T exp(mu T)
        model = _linear_growth()
        mu, T = 0.5, 1.0
        traj = integrate(model, [mu], [1.0], SimulationConfig(0.0, T, 0.001, 2))
        seed = StateGradientSeed(
            np.array([traj.n_samples - 1]), np.array([[1.0]])
        )
        grad = adjoint_gradient(model, traj, [mu], seed)
        assert grad[0] == pytest.approx(T * math.exp(mu * T), rel=1e-6)

    def test_zero_seed_gives_zero_gradient(self):
        model = _linear_growth()
        traj = integrate(model, [0.5], [1.0], SimulationConfig(0.0, 1.0, 0.01, 2))
        seed = StateGradientSeed(np.array([40, 90]), np.zeros((2, 1)))
        np.testing.assert_array_equal(
            adjoint_gradient(model, traj, [0.5], seed), [0.0]
        )

    def test_linear_in_the_seed(self):
        model = rossler_model()
        mu = np.array([0.1, 0.2, 5.7])
        traj = integrate(model, mu, model.default_initial_state, SimulationConfig(0.0, 5.0, 0.01, 2))
        rng = np.random.default_rng(5)
        idx = np.array([100, 250, 499])
        g1 = rng.normal(size=(3, 3))
        g2 = rng.normal(size=(3, 3))
        a, b = 2.5, -1.25
        lhs = adjoint_gradient(
            model, traj, mu, StateGradientSeed(idx, a * g1 + b * g2)
        )
        rhs = a * adjoint_gradient(
            model, traj, mu, StateGradientSeed(idx, g1)
        ) + b * adjoint_gradient(model, traj, mu, StateGradientSeed(idx, g2))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)

    def test_matches_finite_differences_on_rossler(self):
        # 20 random loss seeds on one orbit; FD re-integrates per component
        model = rossler_model()
        mu0 = np.array([0.05, 0.2, 5.7])
        x0 = model.default_initial_state
        cfg = SimulationConfig(0.0, 15.0, 0.01, 100)
        center = integrate(model, mu0, x0, cfg)
        h = 1e-5
        shifted = {}
        for c in range(3):
            e = np.zeros(3)
            e[c] = h
            shifted[c] = (
                integrate(model, mu0 + e, x0, cfg).states,
                integrate(model, mu0 - e, x0, cfg).states,
            )
        rng = np.random.default_rng(77)
        n = center.n_samples
        worst = 0.0
        for _ in range(20):
            idx = np.sort(rng.choice(np.arange(n - 200, n), size=50, replace=False))
            G = rng.normal(size=(50, 3))
            seed = StateGradientSeed(idx.astype(np.int64), G)
            grad = adjoint_gradient(model, center, mu0, seed)
            fd = np.empty(3)
            for c in range(3):
                plus, minus = shifted[c]
                fd[c] = (np.sum(G * plus[idx]) - np.sum(G * minus[idx])) / (2 * h)
            denom = np.maximum(np.abs(fd), np.maximum(np.abs(grad), 1e-10))
            worst = max(worst, float(np.max(np.abs(grad - fd) / denom)))
        assert worst < 1e-2, f"worst adjoint vs finite-difference error {worst}"

    def test_ndarray_only_model_agrees_with_scalar_form(self):
        import dataclasses

        fast = _linear_growth()
        slow = dataclasses.replace(
            fast, scalar_field=None, scalar_jac_state=None, scalar_jac_param=None
        )
        cfg = SimulationConfig(0.0, 1.0, 0.01, 2)
        tf = integrate(fast, [0.5], [1.0], cfg)
        ts = integrate(slow, [0.5], [1.0], cfg)
        np.testing.assert_array_equal(tf.states, ts.states)
        seed = StateGradientSeed(np.array([tf.n_samples - 1]), np.array([[1.0]]))
        np.testing.assert_allclose(
            adjoint_gradient(slow, ts, [0.5], seed),
            adjoint_gradient(fast, tf, [0.5], seed),
            rtol=1e-14,
        )

    def test_rejects_seed_past_trajectory_end(self):
        model = _linear_growth()
        traj = integrate(model, [0.5], [1.0], SimulationConfig(0.0, 1.0, 0.1, 2))
        seed = StateGradientSeed(np.array([traj.n_samples]), np.array([[1.0]]))
        with pytest.raises(ValueError):
            adjoint_gradient(model, traj, [0.5], seed)


class TestFiniteDifferenceGradient:
    def test_exact_on_quadratics(self):
        c = np.array([2.0, -3.0, 0.5])

        def pipeline(mu):
            return float(np.sum(c * mu**2))

        mu = np.array([1.0, 2.0, -1.5])
        grad = finite_difference_gradient(pipeline, mu, 1e-4)
        np.testing.assert_allclose(grad, 2 * c * mu, rtol=1e-8)
