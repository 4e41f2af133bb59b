"""Topological cost functions over persistence diagrams.

Feature terms (max/total/average/top-n persistence, persistent entropy)
map a diagram to a scalar plus seed weights (d/dbirth, d/ddeath) on every
pair, aligned with the diagram's pair order so they chain straight into
the attaching-edge pullback. Penalty terms (forbidden regions, box
bounds) act on the parameter vector or the birth-death plane and carry
their own gradients.

evaluate() composes a list of weighted terms. With balancing on, each
topological term is divided by the magnitude of its current value, the
divisor treated as a constant: every balanced term then reads +-1 and
the summed objective stays scale-free while gradients keep direction
and relative size. Penalties are never balanced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .tda import PersistenceDiagram

__all__ = [
    "LossEvaluation",
    "LossTerm",
    "UndefinedEntropyError",
    "average_persistence",
    "box_bounds_term",
    "entropy_term",
    "evaluate",
    "forbidden_pairs_term",
    "forbidden_params_term",
    "forbidden_penalty",
    "max_persistence",
    "max_pers_term",
    "persistent_entropy",
    "top_n_persistence",
    "top_n_term",
    "total_persistence",
    "avg_pers_term",
    "total_pers_term",
]

# exp argument beyond which the penalty saturates instead of overflowing
_EXP_CAP = 700.0

_FEATURE_KINDS = frozenset({"max_pers", "total_pers", "avg_pers", "top_n", "entropy"})
_PENALTY_KINDS = frozenset({"forbidden_params", "forbidden_pairs", "box_bounds"})


class UndefinedEntropyError(ValueError):
    """Entropy was requested for a dimension with no finite pairs."""


@dataclass(frozen=True)
class LossTerm:
    """One weighted objective term.

    kind selects the formula; dim, count, normalized, f/grad_f, a and
    bounds are consumed only by the kinds that need them. sign is +1 to
    minimize the feature and -1 to maximize it.
    """

    kind: str
    weight: float = 1.0
    dim: int = 1
    sign: float = 1.0
    count: int = 1
    normalized: bool = True
    f: Optional[Callable] = None
    grad_f: Optional[Callable] = None
    a: float = 100.0
    bounds: Optional[Tuple[Optional[Tuple[float, float]], ...]] = None

    def __post_init__(self):
        if self.kind not in _FEATURE_KINDS and self.kind not in _PENALTY_KINDS:
            raise ValueError(f"unknown loss term kind {self.kind!r}")
        if not math.isfinite(self.weight):
            raise ValueError("weight must be finite")
        if self.sign not in (1.0, -1.0, 1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.dim < 0:
            raise ValueError("dim must be non-negative")
        if self.kind == "top_n" and self.count < 1:
            raise ValueError("top_n needs count >= 1")
        if self.kind in _PENALTY_KINDS and not self.a > 0:
            raise ValueError("penalty sharpness a must be positive")
        if self.kind in ("forbidden_params", "forbidden_pairs"):
            if self.f is None or self.grad_f is None:
                raise ValueError(f"{self.kind} needs both f and grad_f")
        if self.kind == "box_bounds" and self.bounds is None:
            raise ValueError("box_bounds needs the bounds tuple")


@dataclass(frozen=True)
class LossEvaluation:
    """Composed objective value and every gradient needed downstream.

    per_term holds each term's signed (and, when requested, balanced)
    value before weighting; total is the weighted sum. dL_dpairs rows
    align with the diagram's pairs; dL_dmu_direct is the penalty-only
    parameter gradient. saturated flags any capped penalty exponent.
    """

    total: float
    per_term: np.ndarray
    dL_dpairs: np.ndarray
    dL_dmu_direct: np.ndarray
    saturated: bool


def _finite_indexed(diag: PersistenceDiagram, dim: int):
    """(global index, pair) for finite pairs of one dimension."""
    return [
        (i, p)
        for i, p in enumerate(diag.pairs)
        if p.dim == dim and np.isfinite(p.death)
    ]


def max_persistence(diag: PersistenceDiagram, dim: int):
    """Largest lifetime and a subgradient on the pair realizing it.

    An empty dimension contributes 0 with a zero seed; ties go to the
    first pair in diagram order.
    """
    seed = np.zeros((len(diag.pairs), 2))
    picked = _finite_indexed(diag, dim)
    if not picked:
        return 0.0, seed
    best_i, best = max(picked, key=lambda ip: ip[1].lifetime)
    # max() keeps the first maximum, matching the tie rule
    seed[best_i] = (-1.0, 1.0)
    return float(best.lifetime), seed


def total_persistence(diag: PersistenceDiagram, dim: int):
    """Sum of finite lifetimes; every pair gets the (-1, +1) seed."""
    seed = np.zeros((len(diag.pairs), 2))
    total = 0.0
    for i, p in _finite_indexed(diag, dim):
        seed[i] = (-1.0, 1.0)
        total += p.lifetime
    return float(total), seed


def average_persistence(diag: PersistenceDiagram, dim: int):
    """Total persistence divided by the pair count; 0 when empty."""
    seed = np.zeros((len(diag.pairs), 2))
    picked = _finite_indexed(diag, dim)
    if not picked:
        return 0.0, seed
    inv = 1.0 / len(picked)
    total = 0.0
    for i, p in picked:
        seed[i] = (-inv, inv)
        total += p.lifetime
    return float(total * inv), seed


def top_n_persistence(diag: PersistenceDiagram, dim: int, count: int):
    """Sum of the count largest lifetimes (all of them if fewer exist)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    seed = np.zeros((len(diag.pairs), 2))
    picked = _finite_indexed(diag, dim)
    picked.sort(key=lambda ip: ip[1].lifetime, reverse=True)
    total = 0.0
    for i, p in picked[:count]:
        seed[i] = (-1.0, 1.0)
        total += p.lifetime
    return float(total), seed


def persistent_entropy(diag: PersistenceDiagram, dim: int, normalized: bool = True):
    """Shannon entropy of the lifetime distribution, optionally / log2(N).

    With L the lifetime sum and p_i = l_i / L, the raw entropy is
    E = -sum p_i log2 p_i and its lifetime derivative is
    dE/dl_i = -(log2 p_i + E) / L, a formula gated by finite-difference
    tests. A single pair gives 0 in both conventions.
    """
    picked = _finite_indexed(diag, dim)
    if not picked:
        raise UndefinedEntropyError(f"no finite pairs in dimension {dim}")
    seed = np.zeros((len(diag.pairs), 2))
    n = len(picked)
    lifetimes = np.array([p.lifetime for _, p in picked])
    L = float(lifetimes.sum())
    p = lifetimes / L
    log_p = np.log2(p)
    raw = float(-np.sum(p * log_p))
    dE_dl = -(log_p + raw) / L
    scale = 1.0
    if normalized:
        if n == 1:
            return 0.0, seed
        scale = 1.0 / math.log2(n)
    for (i, _), g in zip(picked, dE_dl * scale):
        seed[i] = (-g, g)
    return raw * scale, seed


def forbidden_penalty(f_value: float, f_gradient: np.ndarray, a: float):
    """exp(a f) with the chained gradient a exp(a f) df.

    Exponents past the overflow cap are clamped; the returned flag says
    the value saturated so a long run can log it instead of dying.
    """
    if not a > 0:
        raise ValueError("penalty sharpness a must be positive")
    z = a * float(f_value)
    saturated = z > _EXP_CAP
    e = math.exp(min(z, _EXP_CAP))
    return e, a * e * np.asarray(f_gradient, dtype=np.float64), saturated


def max_pers_term(dim=1, sign=1.0, weight=1.0) -> LossTerm:
    return LossTerm(kind="max_pers", dim=dim, sign=sign, weight=weight)


def total_pers_term(dim=1, sign=1.0, weight=1.0) -> LossTerm:
    return LossTerm(kind="total_pers", dim=dim, sign=sign, weight=weight)


def avg_pers_term(dim=1, sign=1.0, weight=1.0) -> LossTerm:
    return LossTerm(kind="avg_pers", dim=dim, sign=sign, weight=weight)


def top_n_term(count, dim=1, sign=1.0, weight=1.0) -> LossTerm:
    return LossTerm(kind="top_n", count=count, dim=dim, sign=sign, weight=weight)


def entropy_term(dim=1, normalized=True, sign=1.0, weight=1.0) -> LossTerm:
    return LossTerm(kind="entropy", dim=dim, normalized=normalized, sign=sign, weight=weight)


def forbidden_params_term(f, grad_f, a=100.0, weight=1.0) -> LossTerm:
    """Penalty exp(a f(mu)); f positive inside the forbidden region."""
    return LossTerm(kind="forbidden_params", f=f, grad_f=grad_f, a=a, weight=weight)


def forbidden_pairs_term(f, grad_f, dim=1, a=100.0, weight=1.0) -> LossTerm:
    """Penalty sum over finite pairs of exp(a f(birth, death))."""
    return LossTerm(kind="forbidden_pairs", f=f, grad_f=grad_f, dim=dim, a=a, weight=weight)


def box_bounds_term(bounds, a=100.0, weight=1.0) -> LossTerm:
    """Keep each parameter inside [lower, upper] via paired exp penalties.

    Components with no bounds, or frozen ones (lower == upper), are
    skipped; there is nothing to regularize when nothing can move.
    """
    return LossTerm(kind="box_bounds", bounds=tuple(bounds), a=a, weight=weight)


def _feature(term: LossTerm, diag: PersistenceDiagram):
    if term.kind == "max_pers":
        return max_persistence(diag, term.dim)
    if term.kind == "total_pers":
        return total_persistence(diag, term.dim)
    if term.kind == "avg_pers":
        return average_persistence(diag, term.dim)
    if term.kind == "top_n":
        return top_n_persistence(diag, term.dim, term.count)
    return persistent_entropy(diag, term.dim, term.normalized)


def _penalty(term: LossTerm, diag: PersistenceDiagram, mu: np.ndarray):
    """(value, dmu, dpairs, saturated) for one penalty term."""
    D = mu.shape[0]
    dpairs = np.zeros((len(diag.pairs), 2))
    if term.kind == "forbidden_params":
        value, dmu, sat = forbidden_penalty(term.f(mu), term.grad_f(mu), term.a)
        return value, dmu, dpairs, sat
    if term.kind == "forbidden_pairs":
        total, sat = 0.0, False
        for i, p in _finite_indexed(diag, term.dim):
            v, g, s = forbidden_penalty(
                term.f(p.birth, p.death), term.grad_f(p.birth, p.death), term.a
            )
            total += v
            dpairs[i] += g
            sat = sat or s
        return total, np.zeros(D), dpairs, sat
    # box_bounds: one exp wall per free, bounded side
    if len(term.bounds) != D:
        raise ValueError(f"box bounds cover {len(term.bounds)} parameters, mu has {D}")
    total, dmu, sat = 0.0, np.zeros(D), False
    for c, b in enumerate(term.bounds):
        if b is None or b[0] == b[1]:
            continue
        lo, hi = b
        v, g, s = forbidden_penalty(mu[c] - hi, 1.0, term.a)
        total += v
        dmu[c] += float(g)
        sat = sat or s
        v, g, s = forbidden_penalty(lo - mu[c], -1.0, term.a)
        total += v
        dmu[c] += float(g)
        sat = sat or s
    return total, dmu, dpairs, sat


def evaluate(
    terms: Sequence[LossTerm],
    diag: PersistenceDiagram,
    mu,
    balance: bool = False,
) -> LossEvaluation:
    """Weighted sum of terms with all gradients, ready for the pullback.

    Balancing divides each topological term (value and seed) by
    |value| floored at 1e-12, treated as a constant, so balanced terms
    evaluate to sign * 1 while penalties pass through untouched.
    """
    mu = np.asarray(mu, dtype=np.float64).ravel()
    m = len(diag.pairs)
    dL_dpairs = np.zeros((m, 2))
    dL_dmu = np.zeros(mu.shape[0])
    per_term = np.empty(len(terms))
    total = 0.0
    saturated = False
    for k, term in enumerate(terms):
        if term.kind in _FEATURE_KINDS:
            value, seed = _feature(term, diag)
            sgn = float(term.sign)
            if balance:
                scale = sgn / max(abs(value), 1e-12)
            else:
                scale = sgn
            per_term[k] = scale * value
            dL_dpairs += (term.weight * scale) * seed
        else:
            value, dmu, dpairs, sat = _penalty(term, diag, mu)
            saturated = saturated or sat
            per_term[k] = value
            dL_dmu += term.weight * dmu
            dL_dpairs += term.weight * dpairs
        total += term.weight * per_term[k]
    if not (np.all(np.isfinite(dL_dpairs)) and np.all(np.isfinite(dL_dmu))):
        raise FloatingPointError("loss gradients are not finite")
    return LossEvaluation(
        total=float(total),
        per_term=per_term,
        dL_dpairs=dL_dpairs,
        dL_dmu_direct=dL_dmu,
        saturated=saturated,
    )
