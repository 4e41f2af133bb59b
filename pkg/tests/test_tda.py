"""Rips persistence against independent oracles, plus gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topopath.tda import (
    PersistencePair,
    PersistenceDiagram,
    PointCloud,
    SingularEdgeError,
    check_general_position,
    diagram_gradient,
    diagram_to_csv,
    diagram_to_json,
    pullback,
    rips_persistence,
)

from oracles import full_reduction_diagram, matched_fd_directional, mst_edge_lengths

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def diagram_table(diag):
    return {dim: sorted((p.birth, p.death) for p in diag.finite_pairs(dim)) for dim in (0, 1)}


def rips_of(points):
    return rips_persistence(PointCloud(np.asarray(points, dtype=float)))


def assert_tables_match(got, want, atol=1e-12):
    for dim in (0, 1):
        a = np.asarray(got[dim], dtype=float).reshape(-1, 2)
        b = np.asarray(want[dim], dtype=float).reshape(-1, 2)
        assert a.shape == b.shape
        np.testing.assert_allclose(a, b, atol=atol)


class TestAgainstOracle:
    def test_unit_square(self):
        diag = rips_of(SQUARE)
        h1 = diag.finite_pairs(1)
        assert len(h1) == 1
        assert h1[0].birth == pytest.approx(1.0, abs=1e-15)
        assert h1[0].death == pytest.approx(np.sqrt(2.0), abs=1e-15)
        h0 = diag.finite_pairs(0)
        assert len(h0) == 3
        assert all(p.death == pytest.approx(1.0, abs=1e-15) for p in h0)

    def test_collinear_points_have_no_loops(self):
        diag = rips_of([[0.0, 0.0], [1.0, 0.0], [2.5, 0.0]])
        assert diag.finite_pairs(1) == []

    def test_random_clouds_match_full_reduction(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            n = int(rng.integers(2, 9))
            pts = rng.uniform(size=(n, 2))
            assert_tables_match(diagram_table(rips_of(pts)), full_reduction_diagram(pts))

    def test_midsize_loop_clouds_match_full_reduction(self):
        rng = np.random.default_rng(11)
        theta = np.linspace(0, 2 * np.pi, 40, endpoint=False)
        one_circle = np.c_[np.cos(theta), np.sin(theta)] + rng.normal(0, 0.03, (40, 2))
        two_circles = np.vstack(
            [
                np.c_[np.cos(theta), np.sin(theta)] * 0.5,
                np.c_[np.cos(theta), np.sin(theta)] * 0.8 + np.array([2.2, 0.0]),
            ]
        )
        for pts in (one_circle, two_circles):
            assert_tables_match(diagram_table(rips_of(pts)), full_reduction_diagram(pts))

    def test_exact_tie_clouds_match_full_reduction(self):
        grid = np.array([[x, y] for x in range(3) for y in range(3)], dtype=float)
        square_center = np.vstack([SQUARE, [[0.5, 0.5]]])
        hexagon = np.array(
            [[np.cos(k * np.pi / 3), np.sin(k * np.pi / 3)] for k in range(6)]
        )
        double_square = np.array(
            [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]], dtype=float
        )
        for pts in (SQUARE, grid, square_center, hexagon, double_square):
            assert_tables_match(diagram_table(rips_of(pts)), full_reduction_diagram(pts))

    def test_h0_deaths_are_mst_lengths(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(2, 51))
            pts = rng.uniform(size=(n, 3))
            deaths = np.sort([p.death for p in rips_of(pts).finite_pairs(0)])
            np.testing.assert_allclose(deaths, mst_edge_lengths(pts), atol=1e-12)


class TestDiagramShape:
    def test_single_point(self):
        diag = rips_of([[0.0, 0.0]])
        assert len(diag.pairs) == 1
        assert diag.pairs[0].essential

    def test_one_essential_h0(self):
        diag = rips_of(np.random.default_rng(0).uniform(size=(20, 2)))
        essentials = [p for p in diag.pairs if p.essential]
        assert len(essentials) == 1
        assert essentials[0].dim == 0 and essentials[0].birth == 0.0

    def test_birth_edge_death_edge_lengths_match(self):
        pts = np.random.default_rng(5).uniform(size=(30, 2))
        cloud = PointCloud(pts)
        for p in rips_persistence(cloud).finite_pairs(1):
            bi, bj = p.birth_edge
            dk, dl = p.death_edge
            assert p.birth == pytest.approx(np.linalg.norm(pts[bi] - pts[bj]), rel=1e-12)
            assert p.death == pytest.approx(np.linalg.norm(pts[dk] - pts[dl]), rel=1e-12)

    def test_coincident_points_tolerated(self):
        diag = rips_of([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        deaths = [p.death for p in diag.finite_pairs(0)]
        assert deaths == [1.0]

    def test_max_dim_zero_skips_h1(self):
        diag = rips_persistence(PointCloud(SQUARE), max_dim=0)
        assert diag.homology_dims_computed == frozenset({0})
        assert diag.finite_pairs(1) == []

    def test_max_dim_two_rejected(self):
        with pytest.raises(ValueError):
            rips_persistence(PointCloud(SQUARE), max_dim=2)

    def test_empty_cloud_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((0, 2)))

    def test_non_finite_cloud_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, np.nan]]))

    def test_determinism(self):
        pts = np.random.default_rng(9).uniform(size=(50, 3))
        assert rips_of(pts) == rips_of(pts)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=2, max_value=12),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_pair_order_and_bounds_property(n, seed):
    pts = np.random.default_rng(seed).uniform(size=(n, 2))
    diag = rips_of(pts)
    diameter = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            diameter = max(diameter, float(np.linalg.norm(pts[i] - pts[j])))
    for p in diag.pairs:
        assert p.birth <= p.death
        if p.dim == 1:
            assert np.isfinite(p.death)
            assert p.death <= diameter + 1e-12


class TestStabilityAndInvariance:
    @pytest.mark.parametrize("eps", [1e-3, 1e-2])
    def test_perturbation_moves_pairs_at_most_2eps(self, eps):
        rng = np.random.default_rng(17)
        for _ in range(5):
            pts = rng.uniform(size=(25, 2))
            base = rips_of(pts)
            bump = rng.normal(size=pts.shape)
            bump *= eps / np.linalg.norm(bump, axis=1, keepdims=True)
            moved = diagram_table(rips_of(pts + bump))
            for dim in (0, 1):
                candidates = np.asarray(moved[dim], dtype=float).reshape(-1, 2)
                for p in base.finite_pairs(dim):
                    if p.lifetime <= 4 * eps:
                        continue
                    gap = np.abs(candidates - [p.birth, p.death]).max(axis=1).min()
                    assert gap <= 2 * eps + 1e-12

    def test_translation_invariance(self):
        pts = np.random.default_rng(23).uniform(size=(40, 3))
        base = rips_of(pts)
        shifted = rips_of(pts + np.array([12.0, -4.0, 0.5]))
        assert len(base.pairs) == len(shifted.pairs)
        for a, b in zip(base.pairs, shifted.pairs):
            assert a.dim == b.dim
            assert a.birth == pytest.approx(b.birth, abs=2e-12)
            assert a.death == pytest.approx(b.death, abs=2e-12) or (a.essential and b.essential)


class TestGeneralPosition:
    def test_coincident_flagged(self):
        report = check_general_position(PointCloud([[0.0, 0.0], [0.0, 0.0]]), tol=1e-9)
        assert report["coincident"] == [(0, 1)]
        assert not report["clean"]

    def test_square_equidistance_flagged(self):
        report = check_general_position(PointCloud(SQUARE), tol=1e-9)
        assert report["equidistant"]
        assert not report["clean"]

    def test_random_cloud_clean(self):
        pts = np.random.default_rng(31).uniform(size=(60, 2))
        assert check_general_position(PointCloud(pts), tol=1e-12)["clean"]


class TestDiagramGradient:
    def test_square_death_gradient_on_diagonal(self):
        cloud = PointCloud(SQUARE)
        diag = rips_persistence(cloud)
        h1 = diag.finite_pairs(1)[0]
        dgrad = diagram_gradient(cloud, diag)
        entry = dgrad.entries[diag.pairs.index(h1)]
        vecs = dict(entry.death)
        assert set(vecs) == set(h1.death_edge)
        k, l = h1.death_edge
        np.testing.assert_allclose(vecs[k], (SQUARE[k] - SQUARE[l]) / np.sqrt(2.0), atol=1e-15)
        np.testing.assert_allclose(vecs[k] + vecs[l], 0.0, atol=1e-15)
        assert abs(vecs[k][0]) == pytest.approx(1 / np.sqrt(2.0))

    def test_entries_sum_to_zero(self):
        pts = np.random.default_rng(41).uniform(size=(25, 3))
        cloud = PointCloud(pts)
        diag = rips_persistence(cloud)
        for entry in diagram_gradient(cloud, diag).entries:
            for side in (entry.birth, entry.death):
                if side:
                    np.testing.assert_allclose(side[0][1] + side[1][1], 0.0, atol=1e-15)

    def test_degenerate_edge_raises(self):
        cloud = PointCloud([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        fake = PersistenceDiagram(
            (PersistencePair(1, 0.0, 1.0, (0, 1), (0, 2)),), frozenset({0, 1})
        )
        with pytest.raises(SingularEdgeError):
            diagram_gradient(cloud, fake)

    def test_directional_derivatives_match_fd(self):
        rng = np.random.default_rng(53)
        checked = 0
        while checked < 12:
            n = int(rng.integers(6, 16))
            pts = rng.uniform(size=(n, 2))
            direction = rng.normal(size=pts.shape)
            direction /= np.linalg.norm(direction)
            fd = matched_fd_directional(rips_of, pts, direction)
            if fd is None:
                continue
            cloud = PointCloud(pts)
            diag = rips_persistence(cloud)
            dgrad = diagram_gradient(cloud, diag)
            for dim in (0, 1):
                rows = [
                    (p, dgrad.entries[diag.pairs.index(p)])
                    for p in sorted(diag.finite_pairs(dim), key=lambda q: (q.birth, q.death))
                ]
                assert len(rows) == len(fd[dim])
                for (pair, entry), (fd_birth, fd_death) in zip(rows, fd[dim]):
                    got_birth = sum(np.dot(v, direction[i]) for i, v in entry.birth)
                    got_death = sum(np.dot(v, direction[i]) for i, v in entry.death)
                    assert got_birth == pytest.approx(fd_birth, abs=2e-5)
                    assert got_death == pytest.approx(fd_death, abs=2e-5)
            checked += 1


class TestPullback:
    def test_zero_weights_zero_gradient(self):
        cloud = PointCloud(SQUARE)
        diag = rips_persistence(cloud)
        dgrad = diagram_gradient(cloud, diag)
        grad = pullback(dgrad, np.zeros((len(diag.pairs), 2)))
        assert grad.shape == SQUARE.shape
        assert not grad.any()

    def test_single_pair_touches_two_points(self):
        cloud = PointCloud(SQUARE)
        diag = rips_persistence(cloud)
        dgrad = diagram_gradient(cloud, diag)
        weights = np.zeros((len(diag.pairs), 2))
        h1_index = next(i for i, p in enumerate(diag.pairs) if p.dim == 1)
        weights[h1_index, 1] = 1.0
        grad = pullback(dgrad, weights)
        touched = np.flatnonzero(np.abs(grad).sum(axis=1) > 0)
        assert set(touched) == set(diag.pairs[h1_index].death_edge)

    def test_shape_mismatch_rejected(self):
        cloud = PointCloud(SQUARE)
        diag = rips_persistence(cloud)
        dgrad = diagram_gradient(cloud, diag)
        with pytest.raises(ValueError):
            pullback(dgrad, np.zeros((1, 2)))


class TestExport:
    def test_csv_and_json_roundtrip_fields(self):
        diag = rips_of(SQUARE)
        text = diagram_to_csv(diag)
        assert text.splitlines()[0] == "dim,birth,death,birth_i,birth_j,death_k,death_l"
        assert len(text.splitlines()) == len(diag.pairs) + 1
        doc = diagram_to_json(diag)
        assert doc["schema_version"] == 1
        assert len(doc["pairs"]) == len(diag.pairs)
        assert any(row["death"] is None for row in doc["pairs"])
