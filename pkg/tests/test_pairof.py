"""Unit tests for the local-pair occupancy field."""

import numpy as np
import pytest

from artifield import autodiff as ad
from artifield import pairof, synth
from artifield.autodiff import Tensor
from artifield.errors import InvalidArgumentError
from artifield.kinematics import KinematicTree, rodrigues
from artifield.mesh import TriMesh


@pytest.fixture(scope="module")
def spec():
    return synth.CapsuleHandSpec.default()


@pytest.fixture(scope="module")
def template(spec):
    return synth.generate_template(spec)


@pytest.fixture(scope="module")
def model():
    return pairof.PairOF.create(KinematicTree.hand(), seed=0)


def random_rigid(rng):
    t = np.eye(4)
    t[:3, :3] = rodrigues(rng.normal(size=3))
    t[:3, 3] = rng.normal(scale=0.1, size=3)
    return t


class TestCanonicalization:
    def test_rest_pose_is_identity(self, spec):
        tf = synth.pose_transforms(spec, synth.flat_pose())
        rng = np.random.default_rng(0)
        pts = rng.normal(scale=0.05, size=(20, 3))
        canon = pairof.canonicalize_points(tf, pts)
        for b in range(16):
            assert np.allclose(canon[b], pts, atol=1e-12)

    def test_inverts_the_bone_motion(self, spec):
        pose = synth.sample_poses(spec, 1, seed=1)[0]
        tf = synth.pose_transforms(spec, pose)
        rel = tf.relative()
        rng = np.random.default_rng(2)
        rest_pts = rng.normal(scale=0.05, size=(10, 3))
        for b in (0, 5, 12):
            posed = rest_pts @ rel[b, :3, :3].T + rel[b, :3, 3]
            canon = pairof.canonicalize_points(tf, posed)
            assert np.allclose(canon[b], rest_pts, atol=1e-10)

    def test_directions_rotate_only(self, spec):
        pose = synth.sample_poses(spec, 1, seed=3)[0]
        tf = synth.pose_transforms(spec, pose)
        dirs = np.array([[1.0, 0.0, 0.0], [0.0, 0.7, 0.7]])
        out = pairof.canonicalize_directions(tf, dirs)
        assert np.allclose(np.linalg.norm(out, axis=2), np.linalg.norm(dirs, axis=1), atol=1e-12)


class TestPartSamples:
    def test_shape_and_determinism(self, spec, template):
        mesh, weights, tree, joints = template
        tf = synth.pose_transforms(spec, synth.flat_pose())
        a = pairof.part_surface_samples(mesh, weights, tf, seed=11)
        b = pairof.part_surface_samples(mesh, weights, tf, seed=11)
        assert a.shape == (16, pairof.PART_SAMPLES, 6)
        assert np.array_equal(a, b)

    def test_canonical_samples_pose_invariant(self, spec, template):
        # Pulled back to rest frames, samples from any pose lie near the
        # rest-pose surface of their own part.
        mesh, weights, tree, joints = template
        pose = synth.sample_poses(spec, 1, seed=4)[0]
        tf = synth.pose_transforms(spec, pose)
        samples = pairof.part_surface_samples(mesh, weights, tf, seed=11)
        for b in (1, 7, 14):
            d = synth.part_sdf_rest(spec, b, samples[b, :, :3])
            assert np.abs(d).max() < 0.03
            assert np.median(np.abs(d)) < 0.005

    def test_rest_bounds_cover_part_vertices(self, template):
        mesh, weights, _, _ = template
        lo, hi = pairof.part_rest_bounds(mesh, weights, margin=0.0)
        from artifield.sampling import face_part_labels

        labels = face_part_labels(mesh.faces, weights)
        for b in range(16):
            verts = np.unique(mesh.faces[labels == b])
            if len(verts) == 0:
                continue
            v = mesh.vertices[verts]
            assert (v >= lo[b] - 1e-12).all() and (v <= hi[b] + 1e-12).all()


@pytest.fixture(scope="module")
def setup(spec, template, model):
    mesh, weights, tree, joints = template
    tf = synth.pose_transforms(spec, synth.flat_pose())
    samples = pairof.part_surface_samples(mesh, weights, tf, seed=11)
    with ad.no_grad():
        codes = model.codes(samples)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.08, 0.13, size=(64, 3))
    canon = pairof.canonicalize_points(tf, pts)
    band = pairof.part_rest_bounds(mesh, weights)
    return codes, canon, band


class TestLogits:
    def test_band_matches_exact_inside(self, model, setup):
        codes, canon, band = setup
        with ad.no_grad():
            full = model.part_logits(codes, canon).data
            banded = model.part_logits(codes, canon, band=band).data
        lo, hi = band
        for b in range(16):
            inside = ((canon[b] >= lo[b]) & (canon[b] <= hi[b])).all(axis=1)
            assert np.allclose(banded[inside, b], full[inside, b], rtol=1e-12, atol=1e-12)
            assert (banded[~inside, b] == pairof.BAND_FILL_LOGIT).all()

    def test_pair_logits_are_member_max(self, model, setup):
        codes, canon, _ = setup
        with ad.no_grad():
            part = model.part_logits(codes, canon)
            pair = model.pair_logits(part).data
        for j, (a, b) in enumerate(model.tree.local_pairs):
            assert np.array_equal(pair[:, j], np.maximum(part.data[:, a], part.data[:, b]))

    def test_global_is_max_over_parts(self, model, setup):
        codes, canon, _ = setup
        with ad.no_grad():
            part = model.part_logits(codes, canon).data
            glob = model.global_logit(codes, canon).data
        assert np.allclose(glob, part.max(axis=1), atol=1e-12)

    def test_occupancy_in_unit_interval(self, model, setup):
        codes, canon, band = setup
        with ad.no_grad():
            hard = model.occupancy(codes, canon, band=band).data
            soft = model.occupancy(codes, canon, soft=True, band=band).data
        for occ in (hard, soft):
            assert (occ >= 0).all() and (occ <= 1).all()


class TestPersistence:
    def test_meta_state_round_trip(self, model, spec, template):
        mesh, weights, tree, joints = template
        clone = pairof.PairOF.from_meta(model.meta())
        clone.load_state_arrays(model.state_arrays())
        tf = synth.pose_transforms(spec, synth.flat_pose())
        samples = pairof.part_surface_samples(mesh, weights, tf, seed=11)
        canon = pairof.canonicalize_points(tf, samples[0, :8, :3])
        with ad.no_grad():
            a = model.global_logit(model.codes(samples), canon).data
            b = clone.global_logit(clone.codes(samples), canon).data
        assert np.array_equal(a, b)

    def test_missing_parameter_rejected(self, model):
        arrays = model.state_arrays()
        arrays.pop("q_tail.w0")
        with pytest.raises(InvalidArgumentError):
            model.load_state_arrays(arrays)


class TestExtraction:
    def test_sphere_extraction_accuracy(self):
        def occ(points):
            return (np.linalg.norm(points, axis=1) < 0.5).astype(np.float64)

        lo = np.full(3, -0.8)
        hi = np.full(3, 0.8)
        mesh = pairof.extract_mesh(occ, lo, hi, resolution=48)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        cell = 1.6 / 47
        assert np.abs(radii - 0.5).max() < cell

    def test_level_never_crossed_rejected(self):
        with pytest.raises(InvalidArgumentError):
            pairof.extract_mesh(
                lambda p: np.zeros(len(p)), np.zeros(3), np.ones(3), resolution=8
            )

    def test_mesh_parity_labels_match_analytic(self, spec, template):
        mesh, _, _, _ = template
        rng = np.random.default_rng(6)
        pts = rng.uniform(-0.07, 0.13, size=(400, 3))
        parity = pairof.mesh_occupancy_labels(mesh, pts)
        sdf = synth.part_sdfs_rest(spec, pts).min(axis=1)
        # Ignore points within one marching-cubes cell of the surface.
        far = np.abs(sdf) > 0.005
        agreement = (parity[far] == (sdf[far] < 0)).mean()
        assert agreement > 0.99
