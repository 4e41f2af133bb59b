"""Benchmark dynamical systems: Lorenz, Rossler, base-excited magnetic pendulum.

Every model carries its vector field plus hand-derived Jacobians with
respect to state and parameters, in two synchronized forms: ndarray
callables (the public contract, what finite-difference checks exercise)
and scalar tuple callables (what the integrator and adjoint consume; at
state dimension 2 or 3, ndarray dispatch costs more than the arithmetic).
The ndarray form is a thin adapter over the scalar form, so they cannot
drift apart.

Parameters that a study holds fixed (Lorenz beta, Rossler c) stay in the
parameter vector with equal lower and upper bounds; one code path then
serves any slice of parameter space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as _field
from typing import Callable, Optional, Tuple

import numpy as np

from .simulate import SimulationConfig

__all__ = [
    "MagneticPendulumParams",
    "ParameterVector",
    "SystemModel",
    "eval_field",
    "lorenz_model",
    "magnetic_pendulum_model",
    "model_by_name",
    "rossler_model",
]

Bounds = Optional[Tuple[float, float]]


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Named parameter values with optional per-component box bounds.

    Equal lower and upper bounds freeze a component: navigation treats it
    as fixed while the model still receives the full vector.
    """

    values: np.ndarray
    names: Tuple[str, ...]
    bounds: Tuple[Bounds, ...]

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64)).ravel()
        if vals.shape[0] < 1:
            raise ValueError("at least one parameter required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("parameter values must be finite")
        names = tuple(str(s) for s in self.names)
        if len(names) != vals.shape[0]:
            raise ValueError("names and values disagree on dimension")
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        bounds = tuple(self.bounds)
        if len(bounds) != vals.shape[0]:
            raise ValueError("bounds and values disagree on dimension")
        for b in bounds:
            if b is None:
                continue
            lo, hi = float(b[0]), float(b[1])
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("bounds must be finite")
            if lo > hi:
                raise ValueError("lower bound exceeds upper bound")
        bounds = tuple(None if b is None else (float(b[0]), float(b[1])) for b in bounds)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def free_mask(self) -> np.ndarray:
        """True where a component may move (unbounded or lower < upper)."""
        return np.array(
            [b is None or b[0] < b[1] for b in self.bounds], dtype=bool
        )

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(values=np.asarray(values), names=self.names, bounds=self.bounds)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """A parameterized vector field with analytic Jacobians.

    field, jac_state, jac_param map (x, t, mu) to f, df/dx, df/dmu as
    ndarrays. The scalar_* siblings do the same on tuples of floats and
    feed the integrator. Models are immutable and safe to share.
    """

    name: str
    state_dim: int
    param_dim: int
    field: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    jac_state: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    jac_param: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    default_initial_state: np.ndarray
    default_params: ParameterVector
    default_sim: SimulationConfig
    nonautonomous: bool
    scalar_field: Callable = None
    scalar_jac_state: Callable = None
    scalar_jac_param: Callable = None


def eval_field(model: SystemModel, x, t: float, mu) -> np.ndarray:
    """f(x, t, mu) with dimension checks."""
    xv = np.asarray(x, dtype=np.float64).ravel()
    mv = np.asarray(mu, dtype=np.float64).ravel()
    if xv.shape[0] != model.state_dim:
        raise ValueError(f"x has dimension {xv.shape[0]}, model wants {model.state_dim}")
    if mv.shape[0] != model.param_dim:
        raise ValueError(f"mu has dimension {mv.shape[0]}, model wants {model.param_dim}")
    return model.field(xv, float(t), mv)


def _lift_vec(scalar_f):
    def wrapped(x, t, mu):
        return np.asarray(scalar_f(tuple(x), float(t), tuple(mu)), dtype=np.float64)

    return wrapped


def _lift_mat(scalar_f):
    def wrapped(x, t, mu):
        return np.asarray(scalar_f(tuple(x), float(t), tuple(mu)), dtype=np.float64)

    return wrapped


# ---------------------------------------------------------------- Lorenz

def _lorenz_f(x, t, mu):
    xx, yy, zz = x
    sigma, rho, beta = mu
    return (sigma * (yy - xx), xx * (rho - zz) - yy, xx * yy - beta * zz)


def _lorenz_jx(x, t, mu):
    xx, yy, zz = x
    sigma, rho, beta = mu
    return (
        (-sigma, sigma, 0.0),
        (rho - zz, -1.0, -xx),
        (yy, xx, -beta),
    )


def _lorenz_jm(x, t, mu):
    xx, yy, zz = x
    return (
        (yy - xx, 0.0, 0.0),
        (0.0, xx, 0.0),
        (0.0, 0.0, -zz),
    )


def lorenz_model() -> SystemModel:
    """sigma(y-x), x(rho-z)-y, xy-beta z; beta frozen at 8/3 by bounds."""
    params = ParameterVector(
        values=np.array([20.0, 190.0, 8.0 / 3.0]),
        names=("sigma", "rho", "beta"),
        bounds=((4.0, 50.0), (80.0, 300.0), (8.0 / 3.0, 8.0 / 3.0)),
    )
    return SystemModel(
        name="lorenz",
        state_dim=3,
        param_dim=3,
        field=_lift_vec(_lorenz_f),
        jac_state=_lift_mat(_lorenz_jx),
        jac_param=_lift_mat(_lorenz_jm),
        default_initial_state=np.array([1.0, 1.0, 1.0]),
        default_params=params,
        default_sim=SimulationConfig(t0=0.0, tf=10.0, dt=0.01, tail_count=500),
        nonautonomous=False,
        scalar_field=_lorenz_f,
        scalar_jac_state=_lorenz_jx,
        scalar_jac_param=_lorenz_jm,
    )


# ---------------------------------------------------------------- Rossler

def _rossler_f(x, t, mu):
    xx, yy, zz = x
    a, b, c = mu
    return (-yy - zz, xx + a * yy, b + zz * (xx - c))


def _rossler_jx(x, t, mu):
    xx, yy, zz = x
    a, b, c = mu
    return (
        (0.0, -1.0, -1.0),
        (1.0, a, 0.0),
        (zz, 0.0, xx - c),
    )


def _rossler_jm(x, t, mu):
    xx, yy, zz = x
    return (
        (0.0, 0.0, 0.0),
        (yy, 0.0, 0.0),
        (0.0, 1.0, -zz),
    )


def rossler_model() -> SystemModel:
    """-y-z, x+ay, b+z(x-c); c frozen at 5.7 by bounds."""
    params = ParameterVector(
        values=np.array([0.2, 0.2, 5.7]),
        names=("a", "b", "c"),
        bounds=((-0.1, 0.3), (0.0, 0.6), (5.7, 5.7)),
    )
    return SystemModel(
        name="rossler",
        state_dim=3,
        param_dim=3,
        field=_lift_vec(_rossler_f),
        jac_state=_lift_mat(_rossler_jx),
        jac_param=_lift_mat(_rossler_jm),
        default_initial_state=np.array([-0.4, 0.6, 1.0]),
        default_params=params,
        default_sim=SimulationConfig(t0=0.0, tf=200.0, dt=0.04, tail_count=500),
        nonautonomous=False,
        scalar_field=_rossler_f,
        scalar_jac_state=_rossler_jx,
        scalar_jac_param=_rossler_jm,
    )


# ------------------------------------------------- base-excited pendulum

@dataclass(frozen=True)
class MagneticPendulumParams:
    """Measured constants of the base-excited magnetic pendulum.

    A (base amplitude, meters) and omega (base frequency, rad/s) are the
    free parameters; everything else is hardware.
    """

    M: float = 0.1038
    l: float = 0.208
    g: float = 9.81
    r_cm: float = 0.18775
    I_cm: float = 1.919e-5
    mu_v: float = 0.003
    m_dipole: float = 1.2
    mu_0: float = 1.257e-6
    d: float = 0.032
    A: float = 0.04
    omega: float = 7.5

    def __post_init__(self):
        for name in ("M", "l", "g", "r_cm", "I_cm", "mu_v", "m_dipole", "mu_0", "d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.A < 0:
            raise ValueError("A must be non-negative")
        if self.omega <= 0:
            raise ValueError("omega must be strictly positive")


def magnetic_pendulum_model(constants: Optional[MagneticPendulumParams] = None) -> SystemModel:
    """Pendulum with a magnet at the tip and another on the excited base.

    State (theta, theta_dot), parameters (A, omega); base acceleration
    -A omega^2 sin(omega t). The magnet pair separation is

        r = sqrt(l^2 + (d+l)^2 - 2 l (l+d) cos theta)

    and the magnet bearing phi = pi/2 - arcsin(l sin(theta) / r). The
    implementation never calls arcsin: with P = sin(phi), Q = cos(phi),
    the identities P = ((d+l) - l cos theta)/r and Q = l sin(theta)/r are
    exact (square both and compare with r^2), so every trig expression of
    phi reduces to polynomials in P and Q and the arcsin domain clamp
    becomes unnecessary. The fixed magnet orientations are a = 3 pi/2 and
    b = pi/2 - theta, which collapse to the angle sums expanded below.
    """
    p = constants if constants is not None else MagneticPendulumParams()
    M, l, g = p.M, p.l, p.g
    r_cm, mu_v, d = p.r_cm, p.mu_v, p.d
    i_tot = M * r_cm * r_cm + p.I_cm
    dl = d + l
    ldl = l * dl
    c4 = 3.0 * p.mu_0 * p.m_dipole * p.m_dipole / (4.0 * math.pi)
    mgr = M * g * r_cm
    mr = M * r_cm

    def _geometry(s, c):
        # s, c = sin(theta), cos(theta); returns r2, r, P, Q
        r2 = l * l + dl * dl - 2.0 * ldl * c
        r = math.sqrt(r2)
        return r2, r, (dl - l * c) / r, l * s / r

    def _tau_m(s, c):
        # magnetic torque; angle differences against a=3pi/2, b=pi/2-theta
        # reduce to: cos(phi-a)=-P, sin(phi-a)=Q, cos(phi-b)=P c + Q s,
        # sin(phi-b)=P s - Q c, sin(2phi-a-b)=2PQ c + (Q^2-P^2) s
        r2, r, P, Q = _geometry(s, c)
        scale = c4 / (r2 * r2)
        f_r = scale * (c * (Q * Q - 2.0 * P * P) - 3.0 * P * Q * s)
        f_phi = scale * (2.0 * P * Q * c + (Q * Q - P * P) * s)
        cos_d = Q * c + P * s
        sin_d = P * c - Q * s
        return l * (f_r * cos_d - f_phi * sin_d)

    def _pend_f(x, t, mu):
        th, w = x
        A, om = mu
        s = math.sin(th)
        c = math.cos(th)
        xb = -A * om * om * math.sin(om * t)
        acc = (-mu_v * w - _tau_m(s, c) - mgr * s - mr * xb * c) / i_tot
        return (w, acc)

    def _dtau_m(s, c):
        # d tau_m / d theta, with P' and Q' from dr/dtheta = l(l+d) s / r
        r2, r, P, Q = _geometry(s, c)
        rp = ldl * s / r
        Pp = l * s / r - P * rp / r
        Qp = l * c / r - Q * rp / r
        G = c * (Q * Q - 2.0 * P * P) - 3.0 * P * Q * s
        Gp = (
            -s * (Q * Q - 2.0 * P * P)
            + c * (2.0 * Q * Qp - 4.0 * P * Pp)
            - 3.0 * c * P * Q
            - 3.0 * s * (Pp * Q + P * Qp)
        )
        S = 2.0 * P * Q * c + (Q * Q - P * P) * s
        Sp = (
            2.0 * c * (Pp * Q + P * Qp)
            - 2.0 * P * Q * s
            + 2.0 * (Q * Qp - P * Pp) * s
            + (Q * Q - P * P) * c
        )
        scale = c4 / (r2 * r2)
        f_r = scale * G
        f_phi = scale * S
        f_r_p = scale * (Gp - 4.0 * G * rp / r)
        f_phi_p = scale * (Sp - 4.0 * S * rp / r)
        cos_d = Q * c + P * s
        sin_d = P * c - Q * s
        cos_d_p = Qp * c - Q * s + Pp * s + P * c
        sin_d_p = Pp * c - P * s - Qp * s - Q * c
        return l * (f_r_p * cos_d + f_r * cos_d_p - f_phi_p * sin_d - f_phi * sin_d_p)

    def _pend_jx(x, t, mu):
        th, w = x
        A, om = mu
        s = math.sin(th)
        c = math.cos(th)
        xb = -A * om * om * math.sin(om * t)
        dacc_dth = (-_dtau_m(s, c) - mgr * c + mr * xb * s) / i_tot
        return ((0.0, 1.0), (dacc_dth, -mu_v / i_tot))

    def _pend_jm(x, t, mu):
        th, w = x
        A, om = mu
        c = math.cos(th)
        swt = math.sin(om * t)
        cwt = math.cos(om * t)
        dacc_dA = mr * om * om * swt * c / i_tot
        dacc_dom = mr * A * (2.0 * om * swt + om * om * t * cwt) * c / i_tot
        return ((0.0, 0.0), (dacc_dA, dacc_dom))

    params = ParameterVector(
        values=np.array([p.A, p.omega]),
        names=("A", "omega"),
        bounds=((0.005, 0.1), (2.0, 12.0)),
    )
    return SystemModel(
        name="magnetic_pendulum",
        state_dim=2,
        param_dim=2,
        field=_lift_vec(_pend_f),
        jac_state=_lift_mat(_pend_jx),
        jac_param=_lift_mat(_pend_jm),
        default_initial_state=np.array([0.0, 0.0]),
        default_params=params,
        default_sim=SimulationConfig(t0=0.0, tf=100.0, dt=0.03, tail_count=500),
        nonautonomous=True,
        scalar_field=_pend_f,
        scalar_jac_state=_pend_jx,
        scalar_jac_param=_pend_jm,
    )


_FACTORIES = {
    "lorenz": lorenz_model,
    "rossler": rossler_model,
    "magnetic_pendulum": magnetic_pendulum_model,
}


def model_by_name(name: str) -> SystemModel:
    """Model registry for the config layer."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        known = ", ".join(sorted(_FACTORIES))
        raise ValueError(f"unknown model {name!r}; known models: {known}") from None
    return factory()
