"""Vietoris-Rips persistent homology (H0, H1) with attaching-edge derivatives.

Filtration convention: a simplex enters at its diameter, the largest pairwise
distance among its vertices, so an edge enters at its own length. Tools that
filter by ball radius report values half of these.

H0 comes from a union-find pass over edges sorted ascending; the finite deaths
are exactly the minimum-spanning-tree edge lengths. H1 pairs are the standard
Z/2 boundary-matrix reduction over edges and triangles, organized as a lazy
persistent-cohomology sweep from the top of the filtration down: the only
columns ever materialized are the few whose pairing is not forced by a
same-value cofacet. Simplices above the enclosing radius (the smallest
max-distance from any single vertex to the rest) are never enumerated, since
past that scale the complex is a cone and every loop is dead. Ties anywhere
are broken by (value, dim, lexicographic vertex tuple), so the reduction and
the reported attaching edges are deterministic.

Pairs with zero lifetime (birth == death exactly) carry no information and
are dropped from diagrams in every dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ._reduction_kernels import empty_lune_mask, kruskal_positions, reduce_h1_columns


class SingularEdgeError(RuntimeError):
    """A critical edge has zero length, so its direction is undefined."""


@dataclass(frozen=True)
class PointCloud:
    """N points in R^n, optionally remembering which trajectory samples they came from."""

    points: np.ndarray
    source_indices: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("point cloud must be a nonempty N x n array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if self.source_indices is not None:
            idx = np.asarray(self.source_indices, dtype=np.int64)
            if idx.shape != (pts.shape[0],):
                raise ValueError("source_indices must have one entry per point")
            object.__setattr__(self, "source_indices", idx)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class PersistencePair:
    dim: int
    birth: float
    death: float
    birth_edge: tuple[int, int] | None
    death_edge: tuple[int, int] | None

    @property
    def lifetime(self) -> float:
        return self.death - self.birth

    @property
    def essential(self) -> bool:
        return not np.isfinite(self.death)


@dataclass(frozen=True)
class PersistenceDiagram:
    pairs: tuple[PersistencePair, ...]
    homology_dims_computed: frozenset

    def finite_pairs(self, dim: int) -> list[PersistencePair]:
        return [p for p in self.pairs if p.dim == dim and np.isfinite(p.death)]

    def lifetimes(self, dim: int) -> np.ndarray:
        return np.array([p.lifetime for p in self.finite_pairs(dim)], dtype=np.float64)


@dataclass(frozen=True)
class PairGradient:
    """Sparse derivative of one pair: (vertex, vector) entries per side."""

    birth: tuple[tuple[int, np.ndarray], ...]
    death: tuple[tuple[int, np.ndarray], ...]


@dataclass(frozen=True)
class DiagramGradient:
    n_points: int
    ambient_dim: int
    entries: tuple[PairGradient, ...]


def _pair_sort_key(pair: PersistencePair):
    return (
        pair.dim,
        pair.birth,
        pair.death,
        pair.birth_edge if pair.birth_edge is not None else (-1, -1),
        pair.death_edge if pair.death_edge is not None else (-1, -1),
    )


def _longest_edge(tri: tuple[int, int, int], dm: np.ndarray) -> tuple[int, int]:
    """Edge realizing the triangle's diameter; lexicographic tie-break."""
    a, b, c = tri
    edges = [(a, b), (a, c), (b, c)]
    best = max(dm[i, j] for i, j in edges)
    return min((i, j) for i, j in edges if dm[i, j] == best)


def rips_persistence(cloud: PointCloud, max_dim: int = 1) -> PersistenceDiagram:
    """Persistence diagram of the Rips filtration, diameter convention.

    Every finite pair records the edge whose insertion created it and, for
    H1, the longest edge of the triangle that killed it; those attaching
    edges are where diagram derivatives live.
    """
    if max_dim not in (0, 1):
        raise ValueError("only H0 and H1 are computed")
    pts = cloud.points
    n = pts.shape[0]
    dims = frozenset(range(max_dim + 1))
    essential = PersistencePair(0, 0.0, np.inf, None, None)
    if n == 1:
        return PersistenceDiagram((essential,), dims)

    dm = squareform(pdist(pts))
    iu, ju = np.triu_indices(n, 1)
    lengths = dm[iu, ju]
    order = np.lexsort((ju, iu, lengths))
    ei = np.ascontiguousarray(iu[order])
    ej = np.ascontiguousarray(ju[order])
    ev = np.ascontiguousarray(lengths[order])

    mst = kruskal_positions(ei, ej, n)
    pairs = [
        PersistencePair(0, 0.0, float(ev[p]), None, (int(ei[p]), int(ej[p])))
        for p in mst
        if ev[p] > 0.0
    ]

    if max_dim == 1 and n >= 3:
        r_enc = float(dm.max(axis=1).min())
        positive = np.ones(ev.shape[0], dtype=bool)
        positive[mst] = False
        candidate = positive & (ev <= r_enc)
        lune_empty = empty_lune_mask(dm, ei, ej, ev, candidate)
        dup = np.zeros(ev.shape[0], dtype=bool)
        eq = ev[1:] == ev[:-1]
        dup[1:] |= eq
        dup[:-1] |= eq
        process = np.flatnonzero(candidate & (lune_empty | dup))
        if process.size:
            # packed (edge rank, triangle code) keys must fit one int64
            shift = int(n**3 - 1).bit_length()
            if (ev.shape[0] - 1) >> (63 - shift):
                raise ValueError(f"cloud too large for the packed reduction: {n} points")
            rank_of = np.zeros((n, n), dtype=np.int64)
            ranks = np.arange(ev.shape[0])
            rank_of[ei, ej] = ranks
            rank_of[ej, ei] = ranks
            processed_mask = np.zeros(ev.shape[0], dtype=bool)
            processed_mask[process] = True
            birth_ranks, death_vals, death_codes, cnt, status = reduce_h1_columns(
                dm, ei, ej, ev, rank_of, positive, processed_mask, process[::-1].copy(), r_enc
            )
            if status != 0:
                raise AssertionError("Rips reduction reached an impossible state")
            for t in range(cnt):
                r = int(birth_ranks[t])
                code = int(death_codes[t])
                t2 = code % n
                rest = code // n
                tri = (int(rest // n), int(rest % n), int(t2))
                pairs.append(
                    PersistencePair(
                        dim=1,
                        birth=float(ev[r]),
                        death=float(death_vals[t]),
                        birth_edge=(int(ei[r]), int(ej[r])),
                        death_edge=_longest_edge(tri, dm),
                    )
                )

    pairs.append(essential)
    pairs.sort(key=_pair_sort_key)
    return PersistenceDiagram(tuple(pairs), dims)


def check_general_position(cloud: PointCloud, tol: float = 1e-9) -> dict:
    """Advisory report of coincident points and near-equal pairwise distances.

    Either degeneracy makes some critical edge non-unique, so diagram
    derivatives become a subgradient choice rather than a derivative.
    """
    pts = cloud.points
    n = pts.shape[0]
    report = {"coincident": [], "equidistant": [], "clean": True}
    if n < 2:
        return report
    dm = squareform(pdist(pts))
    iu, ju = np.triu_indices(n, 1)
    lengths = dm[iu, ju]
    close = np.flatnonzero(lengths < tol)
    report["coincident"] = [(int(iu[k]), int(ju[k])) for k in close]
    order = np.argsort(lengths, kind="stable")
    sv = lengths[order]
    near = np.flatnonzero(np.diff(sv) < tol)
    report["equidistant"] = [
        ((int(iu[order[k]]), int(ju[order[k]])), (int(iu[order[k + 1]]), int(ju[order[k + 1]])))
        for k in near
    ]
    report["clean"] = not report["coincident"] and not report["equidistant"]
    return report


def _edge_gradient(pts, edge):
    i, j = edge
    diff = pts[i] - pts[j]
    norm = float(np.linalg.norm(diff))
    if norm == 0.0:
        raise SingularEdgeError(f"critical edge ({i}, {j}) has zero length")
    direction = diff / norm
    return ((i, direction), (j, -direction))


def diagram_gradient(cloud: PointCloud, diag: PersistenceDiagram) -> DiagramGradient:
    """Sparse derivatives of every pair's birth and death w.r.t. the points.

    The derivative of an edge length |p_i - p_j| is (p_i - p_j)/|p_i - p_j|
    at p_i and its negation at p_j; each pair touches at most four points.
    Essential pairs and H0 births (fixed at zero) get empty entries.
    """
    pts = cloud.points
    entries = []
    for pair in diag.pairs:
        birth = _edge_gradient(pts, pair.birth_edge) if pair.birth_edge is not None else ()
        death = _edge_gradient(pts, pair.death_edge) if pair.death_edge is not None else ()
        entries.append(PairGradient(birth=birth, death=death))
    return DiagramGradient(cloud.n_points, cloud.ambient_dim, tuple(entries))


def pullback(dgrad: DiagramGradient, dL_dpairs: np.ndarray) -> np.ndarray:
    """Accumulate per-pair (d/dbirth, d/ddeath) weights into a point gradient."""
    dL = np.asarray(dL_dpairs, dtype=np.float64)
    if dL.shape != (len(dgrad.entries), 2):
        raise ValueError(f"expected weights of shape ({len(dgrad.entries)}, 2), got {dL.shape}")
    grad = np.zeros((dgrad.n_points, dgrad.ambient_dim))
    for weights, pair_grad in zip(dL, dgrad.entries):
        for vertex, vec in pair_grad.birth:
            grad[vertex] += weights[0] * vec
        for vertex, vec in pair_grad.death:
            grad[vertex] += weights[1] * vec
    return grad


def diagram_to_csv(diag: PersistenceDiagram) -> str:
    """CSV text: dim, birth, death, birth_i, birth_j, death_k, death_l."""
    lines = ["dim,birth,death,birth_i,birth_j,death_k,death_l"]
    for p in diag.pairs:
        be = ("", "") if p.birth_edge is None else (str(p.birth_edge[0]), str(p.birth_edge[1]))
        de = ("", "") if p.death_edge is None else (str(p.death_edge[0]), str(p.death_edge[1]))
        death = "inf" if not np.isfinite(p.death) else f"{p.death:.17g}"
        lines.append(f"{p.dim},{p.birth:.17g},{death},{be[0]},{be[1]},{de[0]},{de[1]}")
    return "\n".join(lines) + "\n"


def diagram_to_json(diag: PersistenceDiagram) -> dict:
    return {
        "schema_version": 1,
        "dims": sorted(diag.homology_dims_computed),
        "pairs": [
            {
                "dim": p.dim,
                "birth": p.birth,
                "death": None if not np.isfinite(p.death) else p.death,
                "birth_edge": list(p.birth_edge) if p.birth_edge else None,
                "death_edge": list(p.death_edge) if p.death_edge else None,
            }
            for p in diag.pairs
        ],
    }
