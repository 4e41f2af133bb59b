"""Fixed-step integration and adjoint parameter sensitivities.

The forward integrator is classic fourth-order Runge-Kutta on a uniform
grid. Adaptive stepping would fight both reproducibility and the adjoint
bookkeeping: the backward pass has to apply loss-gradient jumps exactly at
the sampled times, which is trivial when those times are the grid itself.

The adjoint pass integrates

    da/dt = -a(t)^T df/dx,    dL/dmu = integral of a(t)^T df/dmu dt

backward from the final sample, adding the seeded per-sample loss gradient
to a whenever it crosses a seeded time. The state x(t) needed inside the
Jacobians is re-integrated backward one step at a time and re-anchored on
the stored forward samples, so memory stays O(N_s * n) with no dense stage
storage.

Everything here works on plain Python floats and tuples in the hot loops;
the state dimensions of interest are 2 or 3, where ndarray dispatch costs
more than the arithmetic itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .tda import PointCloud

__all__ = [
    "AdjointState",
    "DivergenceError",
    "SimulationConfig",
    "StateGradientSeed",
    "Trajectory",
    "adjoint_gradient",
    "finite_difference_gradient",
    "integrate",
    "tail_point_cloud",
]


class DivergenceError(RuntimeError):
    """A state or adjoint variable stopped being finite mid-integration."""

    def __init__(self, message: str, last_finite_time: float):
        super().__init__(message)
        self.last_finite_time = float(last_finite_time)


@dataclass(frozen=True)
class SimulationConfig:
    """Recipe for one forward simulation.

    tail_count rides along so a model can carry its steady-state convention
    with it; the tail itself is taken by tail_point_cloud.
    """

    t0: float
    tf: float
    dt: float
    tail_count: int

    def __post_init__(self):
        for name in ("t0", "tf", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.tf < self.t0:
            raise ValueError("tf must not precede t0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.tail_count < 2:
            raise ValueError("tail_count must be at least 2")
        if self.tf > self.t0 and self.tail_count > self.n_samples:
            raise ValueError("tail_count exceeds the sample count")

    @property
    def n_samples(self) -> int:
        # floor((tf-t0)/dt)+1 with a tolerance so spans that are an exact
        # multiple of dt up to roundoff (10/0.01, 200/0.04) count fully
        return int(math.floor((self.tf - self.t0) / self.dt + 1e-9)) + 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled solution: times[k] and the state row states[k]."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.ascontiguousarray(np.asarray(self.times, dtype=np.float64))
        states = np.ascontiguousarray(np.asarray(self.states, dtype=np.float64))
        if times.ndim != 1 or states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise ValueError("times must be (N,) and states (N, n)")
        if times.shape[0] == 0:
            raise ValueError("empty trajectory")
        if times.shape[0] > 1:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise ValueError("times must be strictly increasing")
            dt = steps[0]
            if np.any(np.abs(steps - dt) > 1e-12 * max(abs(dt), 1.0)):
                raise ValueError("times must be uniformly spaced")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True, eq=False)
class StateGradientSeed:
    """Per-sample loss gradients dL/dx(t_i) that seed the adjoint jumps."""

    sample_indices: np.ndarray
    gradients: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(np.asarray(self.sample_indices, dtype=np.int64))
        grads = np.ascontiguousarray(np.asarray(self.gradients, dtype=np.float64))
        if idx.ndim != 1 or grads.ndim != 2 or grads.shape[0] != idx.shape[0]:
            raise ValueError("sample_indices must be (K,) and gradients (K, n)")
        if idx.shape[0] == 0:
            raise ValueError("empty seed")
        if np.any(idx[1:] <= idx[:-1]):
            raise ValueError("sample_indices must be strictly increasing")
        if idx[0] < 0:
            raise ValueError("sample_indices must be non-negative")
        if not np.all(np.isfinite(grads)):
            raise ValueError("gradients must be finite")
        object.__setattr__(self, "sample_indices", idx)
        object.__setattr__(self, "gradients", grads)


@dataclass(frozen=True, eq=False)
class AdjointState:
    """Final adjoint vector and the parameter gradient it accumulated."""

    a: np.ndarray
    accumulated_param_gradient: np.ndarray


def _scalar_rhs(model, mu: Sequence[float]):
    """The tuple-math field, synthesized from the ndarray one if needed."""
    f = getattr(model, "scalar_field", None)
    if f is not None:
        return f
    nd = model.field

    def wrapped(x, t, m):
        return tuple(float(v) for v in nd(np.asarray(x, dtype=np.float64), t, np.asarray(m)))

    return wrapped


def _nested_rows(nd_jac):
    """Tuple-of-rows adapter over an ndarray Jacobian callable."""

    def wrapped(x, t, m):
        rows = np.asarray(nd_jac(np.asarray(x, dtype=np.float64), t, np.asarray(m)))
        return tuple(tuple(float(v) for v in row) for row in rows)

    return wrapped


def integrate(model, mu, x0, cfg: SimulationConfig) -> Trajectory:
    """Classic RK4 over the configured grid, x0 included as the first row.

    Raises DivergenceError (carrying the last finite time) as soon as any
    state component leaves the finite range; a diverging tail has no
    meaningful topology downstream.
    """
    mu_t = tuple(float(v) for v in np.asarray(mu, dtype=np.float64).ravel())
    x = tuple(float(v) for v in np.asarray(x0, dtype=np.float64).ravel())
    if len(x) != model.state_dim:
        raise ValueError(f"x0 has dimension {len(x)}, model wants {model.state_dim}")
    if len(mu_t) != model.param_dim:
        raise ValueError(f"mu has dimension {len(mu_t)}, model wants {model.param_dim}")

    n_samples = cfg.n_samples
    times = cfg.t0 + cfg.dt * np.arange(n_samples)
    states = np.empty((n_samples, len(x)), dtype=np.float64)
    states[0] = x
    f = _scalar_rhs(model, mu_t)
    dt = cfg.dt
    half = 0.5 * dt
    sixth = dt / 6.0

    # Python floats raise OverflowError where ndarrays would go inf; both
    # spellings of a blow-up must surface as the same exception.
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(n_samples - 1):
            t = cfg.t0 + dt * step
            try:
                k1 = f(x, t, mu_t)
                k2 = f(tuple(xi + half * ki for xi, ki in zip(x, k1)), t + half, mu_t)
                k3 = f(tuple(xi + half * ki for xi, ki in zip(x, k2)), t + half, mu_t)
                k4 = f(tuple(xi + dt * ki for xi, ki in zip(x, k3)), t + dt, mu_t)
                x = tuple(
                    xi + sixth * (a + 2.0 * (b + c) + d)
                    for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
                )
            except OverflowError:
                raise DivergenceError(
                    f"state diverged at t={times[step]:.6g}", float(times[step])
                ) from None
            ok = True
            for v in x:
                if not math.isfinite(v):
                    ok = False
                    break
            if not ok:
                raise DivergenceError(
                    f"state diverged at t={times[step]:.6g}", float(times[step])
                )
            states[step + 1] = x
    return Trajectory(times=times, states=states)


def tail_point_cloud(traj: Trajectory, tail_count: int) -> PointCloud:
    """Last tail_count samples, untransformed, with their sample indices."""
    n = traj.n_samples
    if tail_count < 1 or tail_count > n:
        raise ValueError(f"tail_count {tail_count} outside 1..{n}")
    start = n - tail_count
    return PointCloud(
        points=traj.states[start:].copy(),
        source_indices=np.arange(start, n, dtype=np.int64),
    )


def adjoint_gradient(model, traj: Trajectory, mu, seed: StateGradientSeed) -> np.ndarray:
    """dL/dmu for a loss whose state gradients are known at sampled times.

    Walks the trajectory backward one grid step at a time. Between samples
    the augmented system (x, a, g) advances with RK4 at step -dt, where
    g accumulates a^T df/dmu; x is re-anchored on each stored sample so the
    backward re-integration error cannot compound. Crossing a seeded sample
    time adds that sample's loss gradient to a (the adjoint jump).
    """
    mu_t = tuple(float(v) for v in np.asarray(mu, dtype=np.float64).ravel())
    if len(mu_t) != model.param_dim:
        raise ValueError(f"mu has dimension {len(mu_t)}, model wants {model.param_dim}")
    n = model.state_dim
    if traj.state_dim != n:
        raise ValueError("trajectory dimension does not match the model")
    if seed.gradients.shape[1] != n:
        raise ValueError("seed gradient dimension does not match the model")
    n_samples = traj.n_samples
    if int(seed.sample_indices[-1]) >= n_samples:
        raise ValueError("seed indices outside the trajectory")

    f = model.scalar_field or _scalar_rhs(model, mu_t)
    jx = model.scalar_jac_state or _nested_rows(model.jac_state)
    jm = model.scalar_jac_param or _nested_rows(model.jac_param)

    D = model.param_dim
    dims_n = range(n)
    dims_d = range(D)
    jump_at = {int(i): tuple(float(v) for v in row)
               for i, row in zip(seed.sample_indices, seed.gradients)}

    a = (0.0,) * n
    g = (0.0,) * D
    dt = -float(traj.times[1] - traj.times[0]) if n_samples > 1 else 0.0
    half = 0.5 * dt
    sixth = dt / 6.0
    states = traj.states
    t0 = float(traj.times[0])
    step_fwd = float(traj.times[1] - traj.times[0]) if n_samples > 1 else 0.0

    def rhs(x, a_cur, t):
        fx = f(x, t, mu_t)
        jxv = jx(x, t, mu_t)
        jmv = jm(x, t, mu_t)
        da = tuple(-sum(a_cur[c] * jxv[c][r] for c in dims_n) for r in dims_n)
        dg = tuple(-sum(a_cur[c] * jmv[c][j] for c in dims_n) for j in dims_d)
        return fx, da, dg

    for k in range(n_samples - 1, 0, -1):
        if k in jump_at:
            jv = jump_at[k]
            a = tuple(ai + ji for ai, ji in zip(a, jv))
        t = t0 + step_fwd * k
        x = tuple(float(v) for v in states[k])
        fx1, da1, dg1 = rhs(x, a, t)
        x2 = tuple(xi + half * v for xi, v in zip(x, fx1))
        a2 = tuple(ai + half * v for ai, v in zip(a, da1))
        fx2, da2, dg2 = rhs(x2, a2, t + half)
        x3 = tuple(xi + half * v for xi, v in zip(x, fx2))
        a3 = tuple(ai + half * v for ai, v in zip(a, da2))
        fx3, da3, dg3 = rhs(x3, a3, t + half)
        x4 = tuple(xi + dt * v for xi, v in zip(x, fx3))
        a4 = tuple(ai + dt * v for ai, v in zip(a, da3))
        fx4, da4, dg4 = rhs(x4, a4, t + dt)
        a = tuple(
            ai + sixth * (p + 2.0 * (q + r_) + s)
            for ai, p, q, r_, s in zip(a, da1, da2, da3, da4)
        )
        g = tuple(
            gi + sixth * (p + 2.0 * (q + r_) + s)
            for gi, p, q, r_, s in zip(g, dg1, dg2, dg3, dg4)
        )
        for v in a:
            if not math.isfinite(v):
                raise DivergenceError(
                    f"adjoint diverged at t={t:.6g}", float(t)
                )
    if 0 in jump_at:
        a = tuple(ai + ji for ai, ji in zip(a, jump_at[0]))

    final = AdjointState(
        a=np.array(a, dtype=np.float64),
        accumulated_param_gradient=np.array(g, dtype=np.float64),
    )
    if not np.all(np.isfinite(final.accumulated_param_gradient)):
        raise DivergenceError("parameter gradient is not finite", t0)
    return final.accumulated_param_gradient


def finite_difference_gradient(pipeline: Callable[[np.ndarray], float], mu, h: float) -> np.ndarray:
    """Central differences of a scalar pipeline, component by component."""
    if h <= 0:
        raise ValueError("h must be positive")
    base = np.asarray(mu, dtype=np.float64).copy()
    out = np.empty_like(base)
    for i in range(base.shape[0]):
        stash = base[i]
        base[i] = stash + h
        hi = float(pipeline(base.copy()))
        base[i] = stash - h
        lo = float(pipeline(base.copy()))
        base[i] = stash
        out[i] = (hi - lo) / (2.0 * h)
    return out
