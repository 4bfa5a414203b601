"""Unit tests for the Laplacian and chamfer energies."""

import numpy as np
import pytest

from artifield.energies import (
    chamfer_point_to_face,
    laplacian_energy,
    point_triangle_distances,
)
from artifield.errors import InvalidArgumentError, TopologyError
from artifield.mesh import TriMesh


@pytest.fixture
def unit_tri():
    return TriMesh(
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        np.array([[0, 1, 2]]),
    )


class TestLaplacian:
    def test_hand_computed_triangle(self, unit_tri):
        # Each vertex has two neighbors; edge lengths 1, 1, sqrt(2).
        s = np.sqrt(2.0)
        expected = np.mean([(1 + s) / 2, (1 + s) / 2, (1 + 1) / 2])
        assert np.isclose(laplacian_energy(unit_tri), expected)

    def test_scales_linearly(self, unit_tri):
        scaled = unit_tri.with_vertices(unit_tri.vertices * 3.0)
        assert np.isclose(laplacian_energy(scaled), 3.0 * laplacian_energy(unit_tri))

    def test_isolated_vertex_rejected(self):
        mesh = TriMesh(np.zeros((4, 3)) + np.arange(4)[:, None], np.array([[0, 1, 2]]))
        with pytest.raises(TopologyError):
            laplacian_energy(mesh)


class TestPointTriangle:
    def test_interior_projection(self, unit_tri):
        tri = unit_tri.vertices[unit_tri.faces]
        d = point_triangle_distances(np.array([[0.25, 0.25, 2.0]]), tri)
        assert np.isclose(d[0, 0], 2.0)

    def test_closest_vertex(self, unit_tri):
        tri = unit_tri.vertices[unit_tri.faces]
        d = point_triangle_distances(np.array([[-1.0, -1.0, 0.0]]), tri)
        assert np.isclose(d[0, 0], np.sqrt(2.0))

    def test_closest_edge(self, unit_tri):
        tri = unit_tri.vertices[unit_tri.faces]
        d = point_triangle_distances(np.array([[0.5, -0.5, 0.0]]), tri)
        assert np.isclose(d[0, 0], 0.5)

    def test_point_on_surface_is_zero(self, unit_tri):
        tri = unit_tri.vertices[unit_tri.faces]
        d = point_triangle_distances(np.array([[0.2, 0.2, 0.0]]), tri)
        assert np.isclose(d[0, 0], 0.0, atol=1e-12)

    def test_matches_dense_sampling_oracle(self, unit_tri):
        # Brute-force oracle: distance to a dense barycentric sampling.
        rng = np.random.default_rng(0)
        tri = unit_tri.vertices[unit_tri.faces]
        u = rng.random(20000)
        v = rng.random(20000)
        flip = u + v > 1
        u[flip] = 1 - u[flip]
        v[flip] = 1 - v[flip]
        dense = (
            tri[0, 0] * (1 - u - v)[:, None] + tri[0, 1] * u[:, None] + tri[0, 2] * v[:, None]
        )
        pts = rng.normal(size=(10, 3))
        exact = point_triangle_distances(pts, tri)[:, 0]
        approx = np.min(np.linalg.norm(pts[:, None] - dense[None], axis=2), axis=1)
        assert np.allclose(exact, approx, atol=2e-2)
        assert (exact <= approx + 1e-12).all()


class TestChamfer:
    def test_zero_for_surface_points(self, unit_tri):
        pts = np.array([[0.2, 0.2, 0.0], [0.5, 0.25, 0.0]])
        assert np.isclose(chamfer_point_to_face(pts, unit_tri), 0.0, atol=1e-12)

    def test_known_offset(self, unit_tri):
        pts = np.array([[0.25, 0.25, 0.5], [0.25, 0.25, -1.5]])
        assert np.isclose(chamfer_point_to_face(pts, unit_tri), 1.0)

    def test_empty_points_rejected(self, unit_tri):
        with pytest.raises(InvalidArgumentError):
            chamfer_point_to_face(np.zeros((0, 3)), unit_tri)
