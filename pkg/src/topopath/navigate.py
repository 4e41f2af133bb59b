"""Parameter-space path generation.

Two families. gradient_descent_path differentiates the whole chain
(simulate -> tail cloud -> persistence -> loss) with the attaching-edge
pullback feeding the adjoint sweep, then applies Adam with gradient
clipping and per-epoch learning-rate decay. global_sampling_path and
local_sampling_path are derivative-free: they repeatedly maximize a
feature map over a rectangular region (a growing one anchored at the
start point, or a trust region sized by a confidence factor) and walk a
fixed step along the resulting direction.

Region argmaxes use scrambled low-discrepancy sampling plus a
Nelder-Mead refinement, all seeded, so every path is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .loss import LossTerm, UndefinedEntropyError, box_bounds_term, evaluate
from .simulate import (
    DivergenceError,
    SimulationConfig,
    StateGradientSeed,
    adjoint_gradient,
    integrate,
    tail_point_cloud,
)
from .tda import SingularEdgeError, diagram_gradient, pullback, rips_persistence

__all__ = [
    "AdamState",
    "GDConfig",
    "PathRecord",
    "TrustRegionConfig",
    "adam_step",
    "clip_gradient",
    "global_sampling_path",
    "gradient_descent_path",
    "grid_feature",
    "local_sampling_path",
    "path_to_csv",
    "region_argmax",
    "topological_loss_gradient",
]

Box = Sequence[Optional[Tuple[float, float]]]

# walls sit this fraction of the box width inside the hard limits, the
# buffer that keeps optimizer momentum from carrying the path out
_BOX_BUFFER = 0.02


@dataclass(frozen=True)
class GDConfig:
    """Gradient-descent hyperparameters; stop_lr_floor None means 1e-4 lr."""

    learning_rate: float
    decay_per_epoch: float = 0.99
    clip_norm: Optional[float] = 1.0
    max_epochs: int = 300
    adam: Tuple[float, float, float] = (0.9, 0.999, 1e-8)
    stop_lr_floor: Optional[float] = None
    stop_step_tol: float = 1e-6

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.decay_per_epoch <= 1.0:
            raise ValueError("decay_per_epoch must be in (0, 1]")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive or None")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.stop_lr_floor is not None and self.stop_lr_floor < 0:
            raise ValueError("stop_lr_floor must be non-negative")
        if self.stop_step_tol < 0:
            raise ValueError("stop_step_tol must be non-negative")
        b1, b2, eps = self.adam
        if not (0 <= b1 < 1 and 0 <= b2 < 1 and eps > 0):
            raise ValueError("adam moments need 0 <= beta < 1 and eps > 0")


@dataclass(frozen=True)
class TrustRegionConfig:
    """Derivative-free navigation knobs shared by both sampling modes."""

    steps: int = 2500
    step_size: float = 0.1
    confidence_window: int = 5
    mode: str = "global"
    inner_budget: int = 64
    seed: int = 0
    gamma_init: float = 0.95

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.confidence_window < 2:
            raise ValueError("confidence_window must be at least 2")
        if self.mode not in ("global", "local"):
            raise ValueError("mode must be 'global' or 'local'")
        if self.inner_budget < 1:
            raise ValueError("inner_budget must be at least 1")
        if not 0.0 <= self.gamma_init <= 1.0:
            raise ValueError("gamma_init must be in [0, 1]")


@dataclass(frozen=True)
class PathRecord:
    """Everything a path run produced, histories row-aligned by epoch.

    mu_history has one more row than the others (the start point).
    loss_history is NaN on degenerate epochs. region_history, used by
    the sampling schemes, stacks (lower, upper) bounds per step.
    """

    epochs: np.ndarray
    mu_history: np.ndarray
    loss_history: np.ndarray
    feature_history: np.ndarray
    grad_norm_history: np.ndarray
    termination: str
    outside_box: np.ndarray
    degenerate_epochs: Tuple[int, ...] = ()
    region_history: Optional[np.ndarray] = None

    @property
    def final_mu(self) -> np.ndarray:
        return self.mu_history[-1]

    def total_region_area(self) -> float:
        """Sum over steps of the sampled region volume (free axes only)."""
        if self.region_history is None:
            return 0.0
        widths = self.region_history[:, 1, :] - self.region_history[:, 0, :]
        free = np.any(widths > 0, axis=0)
        if not np.any(free):
            return 0.0
        return float(np.sum(np.prod(widths[:, free], axis=1)))


@dataclass
class AdamState:
    """Adam first/second moments plus the parameter vector they drive."""

    mu: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def at(cls, mu, adam=(0.9, 0.999, 1e-8)) -> "AdamState":
        mu = np.asarray(mu, dtype=np.float64).copy()
        return cls(
            mu=mu,
            m=np.zeros_like(mu),
            v=np.zeros_like(mu),
            beta1=adam[0],
            beta2=adam[1],
            eps=adam[2],
        )


def adam_step(state: AdamState, gradient, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; mutates state, returns the new mu."""
    g = np.asarray(gradient, dtype=np.float64)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    state.mu = state.mu - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state.mu.copy()


def clip_gradient(g, max_norm: float) -> np.ndarray:
    """Rescale g onto the max_norm ball; shorter vectors pass through."""
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm <= max_norm:
        return g.copy()
    return g * (max_norm / norm)


def _free_mask(box: Optional[Box], dim: int) -> np.ndarray:
    if box is None:
        return np.ones(dim, dtype=bool)
    if len(box) != dim:
        raise ValueError(f"box covers {len(box)} parameters, expected {dim}")
    return np.array(
        [b is None or b[0] != b[1] for b in box], dtype=bool
    )


def _inside_box(mu: np.ndarray, box: Optional[Box]) -> bool:
    if box is None:
        return True
    for v, b in zip(mu, box):
        if b is not None and not (b[0] <= v <= b[1]):
            return False
    return True


def _buffered(box: Box) -> Tuple[Optional[Tuple[float, float]], ...]:
    """Penalty walls pulled inside the hard box by the buffer margin."""
    out = []
    for b in box:
        if b is None or b[0] == b[1]:
            out.append(b)
        else:
            pad = _BOX_BUFFER * (b[1] - b[0])
            out.append((b[0] + pad, b[1] - pad))
    return tuple(out)


def topological_loss_gradient(
    model,
    x0,
    simcfg: SimulationConfig,
    terms: Sequence[LossTerm],
    mu,
    balance: bool = True,
):
    """One evaluation of the full differentiable chain at mu.

    Returns (evaluation, dL_dmu): the loss breakdown and the parameter
    gradient, i.e. the adjoint pullback of the diagram seeds plus the
    direct penalty gradients.
    """
    mu = np.asarray(mu, dtype=np.float64)
    traj = integrate(model, mu, x0, simcfg)
    cloud = tail_point_cloud(traj, simcfg.tail_count)
    diag = rips_persistence(cloud)
    ev = evaluate(terms, diag, mu, balance=balance)
    grad = ev.dL_dmu_direct.copy()
    if np.any(ev.dL_dpairs):
        point_grad = pullback(diagram_gradient(cloud, diag), ev.dL_dpairs)
        seed = StateGradientSeed(cloud.source_indices, point_grad)
        grad += adjoint_gradient(model, traj, mu, seed)
    return ev, grad


def gradient_descent_path(
    model,
    x0,
    simcfg: SimulationConfig,
    terms: Sequence[LossTerm],
    mu0,
    gd: GDConfig,
    box: Optional[Box] = None,
    balance: bool = True,
) -> PathRecord:
    """Adam descent on the composed topological loss from mu0.

    The box enters as exp-wall penalties a fraction inside the hard
    bounds, never as a projection; frozen components (equal bounds)
    are masked out of the gradient. Epochs whose geometry breaks the
    diagram derivative (singular edges, undefined entropy) contribute
    a zero step and are flagged; a diverging simulation ends the path.
    """
    mu = np.asarray(mu0, dtype=np.float64).copy()
    if not _inside_box(mu, box):
        raise ValueError("mu0 is outside the box")
    all_terms = list(terms)
    if box is not None:
        all_terms.append(box_bounds_term(_buffered(box)))
    free = _free_mask(box, mu.shape[0])
    state = AdamState.at(mu, gd.adam)
    lr = gd.learning_rate
    lr_floor = (
        gd.stop_lr_floor
        if gd.stop_lr_floor is not None
        else 1e-4 * gd.learning_rate
    )

    epochs, mu_rows, losses, features, grad_norms = [], [mu.copy()], [], [], []
    degenerate = []
    termination = "max_epochs"
    n_terms = len(all_terms)
    for epoch in range(gd.max_epochs):
        degenerate_epoch = False
        try:
            ev, grad = topological_loss_gradient(
                model, x0, simcfg, all_terms, mu, balance=balance
            )
            loss_value = ev.total
            per_term = ev.per_term
        except (SingularEdgeError, UndefinedEntropyError):
            degenerate_epoch = True
            grad = np.zeros_like(mu)
            loss_value = math.nan
            per_term = np.full(n_terms, math.nan)
        except DivergenceError:
            termination = "divergence"
            break

        grad = np.where(free, grad, 0.0)
        epochs.append(epoch)
        losses.append(loss_value)
        features.append(per_term)
        grad_norms.append(float(np.linalg.norm(grad)))
        if degenerate_epoch:
            degenerate.append(epoch)
            mu_rows.append(mu.copy())
        else:
            if gd.clip_norm is not None:
                grad = clip_gradient(grad, gd.clip_norm)
            prev = mu.copy()
            mu = adam_step(state, grad, lr)
            mu_rows.append(mu.copy())
            step = float(np.linalg.norm(mu - prev))
            if step < gd.stop_step_tol:
                termination = "step_tol"
                break
        lr *= gd.decay_per_epoch
        if lr < lr_floor:
            termination = "lr_floor"
            break

    mu_hist = np.array(mu_rows)
    return PathRecord(
        epochs=np.array(epochs, dtype=np.int64),
        mu_history=mu_hist,
        loss_history=np.array(losses),
        feature_history=np.array(features).reshape(len(epochs), n_terms),
        grad_norm_history=np.array(grad_norms),
        termination=termination,
        outside_box=np.array([not _inside_box(row, box) for row in mu_hist]),
        degenerate_epochs=tuple(degenerate),
    )


def region_argmax(
    feature: Callable[[np.ndarray], float],
    lower,
    upper,
    budget: int,
    sampler: qmc.Halton,
) -> np.ndarray:
    """Best point of the feature inside the box, deterministically.

    The budget counts feature evaluations: one for the region center,
    half the remainder on scrambled low-discrepancy samples, the rest
    on a Nelder-Mead polish of the incumbent over the free axes. Ties
    keep the earlier candidate, so a constant feature returns the
    center exactly.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    center = 0.5 * (lower + upper)
    best_x, best_v = center, feature(center)

    n_samples = (budget - 1) // 2
    if n_samples > 0:
        unit = sampler.random(n_samples)
        pts = lower + unit * (upper - lower)
        for x in pts:
            v = feature(x)
            if v > best_v:
                best_x, best_v = x, v

    polish_budget = budget - 1 - n_samples
    free = upper > lower
    if polish_budget >= 2 and np.any(free):
        idx = np.flatnonzero(free)

        def negated(z):
            x = best_x.copy()
            x[idx] = np.clip(z, lower[idx], upper[idx])
            return -feature(x)

        res = minimize(
            negated,
            best_x[idx],
            method="Nelder-Mead",
            bounds=list(zip(lower[idx], upper[idx])),
            options={"maxfev": polish_budget, "xatol": 1e-10, "fatol": 1e-12},
        )
        if -res.fun > best_v:
            best_x = best_x.copy()
            best_x[idx] = np.clip(res.x, lower[idx], upper[idx])
            best_v = -res.fun
    return np.asarray(best_x, dtype=np.float64)


def _domain_arrays(domain: Box) -> Tuple[np.ndarray, np.ndarray]:
    if any(b is None for b in domain):
        raise ValueError("sampling schemes need finite bounds on every axis")
    lower = np.array([b[0] for b in domain])
    upper = np.array([b[1] for b in domain])
    if np.any(lower > upper):
        raise ValueError("domain bounds are inverted")
    return lower, upper


def _sampling_path(
    feature: Callable[[np.ndarray], float],
    domain: Box,
    mu0,
    cfg: TrustRegionConfig,
    region_of,
) -> PathRecord:
    """Shared walk loop: region -> argmax -> unit step, fully recorded."""
    lower, upper = _domain_arrays(domain)
    mu = np.asarray(mu0, dtype=np.float64).copy()
    if np.any(mu < lower) or np.any(mu > upper):
        raise ValueError("mu0 is outside the domain")
    free = upper > lower
    sampler = qmc.Halton(d=mu.shape[0], scramble=True, seed=cfg.seed)
    directions = []  # last confidence_window unit steps, zeros when parked

    mu_rows = [mu.copy()]
    values, regions = [], []
    f_cur = feature(mu)
    for k in range(1, cfg.steps + 1):
        lo_k, hi_k = region_of(k, mu, lower, upper, directions)
        regions.append(np.stack([lo_k, hi_k]))
        best = region_argmax(feature, lo_k, hi_k, cfg.inner_budget, sampler)
        f_best = feature(best)
        gap = best - mu
        norm = float(np.linalg.norm(gap))
        if f_best > f_cur and norm > 0.0:
            direction = gap / norm
            mu = np.clip(mu + cfg.step_size * direction, lower, upper)
            f_cur = feature(mu)
        else:
            # parked: the region holds nothing better than where we stand
            direction = np.zeros_like(mu)
        directions.append(direction)
        if len(directions) > cfg.confidence_window:
            directions.pop(0)
        mu_rows.append(mu.copy())
        values.append(f_cur)

    values = np.array(values)
    return PathRecord(
        epochs=np.arange(1, cfg.steps + 1, dtype=np.int64),
        mu_history=np.array(mu_rows),
        loss_history=values,
        feature_history=values.reshape(-1, 1),
        grad_norm_history=np.zeros(cfg.steps),
        termination="max_epochs",
        outside_box=np.zeros(cfg.steps + 1, dtype=bool),
        region_history=np.array(regions),
    )


def global_sampling_path(
    feature: Callable[[np.ndarray], float],
    domain: Box,
    mu0,
    cfg: TrustRegionConfig,
) -> PathRecord:
    """Walk toward argmaxes of boxes growing from mu0 to the full domain.

    Step k searches the interpolation ((steps-k) mu0 + k domain)/steps,
    widened if needed so the current point stays inside.
    """
    start = np.asarray(mu0, dtype=np.float64).copy()
    N = cfg.steps

    def region(k, mu, lower, upper, _directions):
        lo = ((N - k) * start + k * lower) / N
        hi = ((N - k) * start + k * upper) / N
        return np.minimum(lo, mu), np.maximum(hi, mu)

    return _sampling_path(feature, domain, mu0, cfg, region)


def local_sampling_path(
    feature: Callable[[np.ndarray], float],
    domain: Box,
    mu0,
    cfg: TrustRegionConfig,
) -> PathRecord:
    """Trust-region walk sized by agreement of recent step directions.

    The region reaches (1 - gamma) of the way from the current point to
    each domain wall, with gamma = 1 - prod_i sigma_i over the free
    components' direction standard deviations in the last window; until
    the window fills, gamma stays at gamma_init.
    """
    lower_d, upper_d = _domain_arrays(domain)
    free = upper_d > lower_d

    def region(_k, mu, lower, upper, directions):
        if len(directions) >= cfg.confidence_window:
            sig = np.std(np.array(directions), axis=0)
            gamma = 1.0 - float(np.prod(sig[free])) if np.any(free) else 1.0
            gamma = min(max(gamma, 0.0), 1.0)
        else:
            gamma = cfg.gamma_init
        reach = 1.0 - gamma
        return mu - reach * (mu - lower), mu + reach * (upper - mu)

    return _sampling_path(feature, domain, mu0, cfg, region)


def grid_feature(
    axis_values: Sequence[np.ndarray],
    grid: np.ndarray,
    frozen: Optional[Sequence[Optional[float]]] = None,
) -> Callable[[np.ndarray], float]:
    """Multilinear interpolator over a sampled feature grid.

    axis_values are the sorted coordinates per free axis and grid holds
    the feature sampled on their product. NaN cells (divergent or
    otherwise masked) dominate any interpolation they touch and come
    back as -inf so an argmax never lands there. frozen, when given,
    marks full-mu components: entries with a value are dropped from mu
    before interpolation, None entries line up with axis_values.
    """
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(
        tuple(np.asarray(a, dtype=np.float64) for a in axis_values),
        np.asarray(grid, dtype=np.float64),
        method="linear",
        bounds_error=False,
        fill_value=None,
    )
    keep = None
    if frozen is not None:
        keep = np.array([v is None for v in frozen], dtype=bool)
        if int(keep.sum()) != len(axis_values):
            raise ValueError("frozen mask does not match the grid axes")

    def feature(mu: np.ndarray) -> float:
        mu = np.asarray(mu, dtype=np.float64).ravel()
        x = mu[keep] if keep is not None else mu
        v = float(interp(x)[0])
        return -math.inf if math.isnan(v) else v

    return feature


def path_to_csv(record: PathRecord, param_names: Sequence[str], term_labels: Sequence[str]) -> str:
    """CSV rows per epoch: index, parameters after the step, loss, terms, grad norm."""
    names = ",".join(param_names)
    labels = ",".join(f"term_{t}" for t in term_labels)
    lines = [f"epoch,{names},loss,{labels},grad_norm"]
    for i, ep in enumerate(record.epochs):
        mu = ",".join(f"{v:.17g}" for v in record.mu_history[i + 1])
        terms = ",".join(f"{v:.17g}" for v in record.feature_history[i])
        lines.append(
            f"{ep},{mu},{record.loss_history[i]:.17g},{terms},"
            f"{record.grad_norm_history[i]:.17g}"
        )
    return "\n".join(lines) + "\n"
