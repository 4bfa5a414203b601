"""Unit tests for mesh storage, topology, subdivision, and OBJ I/O."""

import numpy as np
import pytest

from artifield.errors import InvalidArgumentError, TopologyError
from artifield.mesh import (
    TriMesh,
    load_obj,
    save_obj,
    subdivide_midpoint,
    subdivision_counts,
    synthetic_open_mesh,
)


@pytest.fixture
def tetra():
    vertices = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(vertices, faces)


class TestTriMesh:
    def test_rejects_bad_shapes(self):
        with pytest.raises(InvalidArgumentError):
            TriMesh(np.zeros((3, 2)), np.zeros((1, 3), dtype=int))
        with pytest.raises(InvalidArgumentError):
            TriMesh(np.zeros((3, 3)), np.zeros((1, 4), dtype=int))

    def test_rejects_out_of_range_and_degenerate_faces(self):
        v = np.eye(3)
        with pytest.raises(InvalidArgumentError):
            TriMesh(v, np.array([[0, 1, 5]]))
        with pytest.raises(InvalidArgumentError):
            TriMesh(v, np.array([[0, 1, 1]]))

    def test_rejects_non_finite_vertices(self):
        v = np.array([[0.0, 0.0, np.nan], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        with pytest.raises(InvalidArgumentError):
            TriMesh(v, np.array([[0, 1, 2]]))

    def test_tetra_counts_and_euler(self, tetra):
        assert tetra.num_vertices == 4
        assert tetra.num_faces == 4
        assert tetra.num_edges == 6
        assert tetra.euler_characteristic() == 2

    def test_tetra_is_edge_manifold(self, tetra):
        tetra.require_edge_manifold()
        _, counts = tetra.edge_face_counts()
        assert (counts == 2).all()

    def test_non_manifold_detected(self):
        v = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1.0]]
        )
        f = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
        with pytest.raises(TopologyError):
            TriMesh(v, f).require_edge_manifold()

    def test_face_areas_unit_triangle(self):
        mesh = TriMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))
        assert np.allclose(mesh.face_areas(), [0.5])

    def test_face_normals_by_winding(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
        up = TriMesh(v, np.array([[0, 1, 2]])).face_normals()
        down = TriMesh(v, np.array([[0, 2, 1]])).face_normals()
        assert np.allclose(up, [[0, 0, 1.0]])
        assert np.allclose(down, [[0, 0, -1.0]])

    def test_vertex_neighbors_symmetric(self, tetra):
        adj = tetra.vertex_neighbors()
        for i, nbrs in enumerate(adj):
            for j in nbrs:
                assert i in adj[j]

    def test_bounds(self, tetra):
        lo, hi = tetra.bounds()
        assert np.array_equal(lo, [0, 0, 0])
        assert np.array_equal(hi, [1, 1, 1])


class TestSubdivision:
    def test_counts_one_level(self, tetra):
        out, _ = subdivide_midpoint(tetra)
        assert out.num_vertices == 4 + 6
        assert out.num_faces == 16
        assert out.num_edges == 2 * 6 + 3 * 4
        assert out.euler_characteristic() == 2

    def test_midpoints_are_edge_means(self, tetra):
        out, _ = subdivide_midpoint(tetra)
        edges = tetra.edges()
        mids = 0.5 * (tetra.vertices[edges[:, 0]] + tetra.vertices[edges[:, 1]])
        assert np.array_equal(out.vertices[4:], mids)

    def test_weights_interpolated_and_renormalized(self, tetra):
        w = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.25, 0.75]])
        out, w2 = subdivide_midpoint(tetra, w)
        assert w2.shape == (out.num_vertices, 2)
        assert np.allclose(w2.sum(axis=1), 1.0)
        assert np.array_equal(w2[:4], w)

    def test_weight_row_count_mismatch_rejected(self, tetra):
        with pytest.raises(InvalidArgumentError):
            subdivide_midpoint(tetra, np.ones((3, 2)))

    def test_closed_form_matches_actual(self, tetra):
        mesh = tetra
        v, e, f = mesh.num_vertices, mesh.num_edges, mesh.num_faces
        for level in range(1, 4):
            mesh, _ = subdivide_midpoint(mesh)
            assert (mesh.num_vertices, mesh.num_edges, mesh.num_faces) == subdivision_counts(
                v, e, f, level
            )

    def test_surface_area_preserved(self, tetra):
        out, _ = subdivide_midpoint(tetra)
        assert np.isclose(out.face_areas().sum(), tetra.face_areas().sum())


class TestSyntheticOpenMesh:
    def test_exact_counts(self):
        mesh = synthetic_open_mesh(778, 1538)
        assert mesh.num_vertices == 778
        assert mesh.num_faces == 1538

    def test_disk_topology(self):
        mesh = synthetic_open_mesh(778, 1538)
        assert mesh.euler_characteristic() == 1
        mesh.require_edge_manifold()

    def test_small_strip(self):
        mesh = synthetic_open_mesh(5, 3)
        assert mesh.num_vertices == 5 and mesh.num_faces == 3

    def test_infeasible_rejected(self):
        with pytest.raises(InvalidArgumentError):
            synthetic_open_mesh(10, 4)


class TestObjIO:
    def test_round_trip_exact(self, tetra, tmp_path):
        path = tmp_path / "mesh.obj"
        save_obj(path, tetra)
        back = load_obj(path)
        assert np.array_equal(back.vertices, tetra.vertices)
        assert np.array_equal(back.faces, tetra.faces)

    def test_non_triangular_rejected(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(InvalidArgumentError):
            load_obj(path)
