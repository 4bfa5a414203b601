"""Unit tests for label shards, frame directories, and template artifacts."""

import numpy as np
import pytest

from artifield import datasets, synth
from artifield.camera import default_camera
from artifield.errors import InvalidArgumentError, MissingArtifactError
from artifield.kinematics import Pose
from artifield.synth import CapsuleHandSpec


@pytest.fixture(scope="module")
def spec():
    return CapsuleHandSpec.default()


class TestLabelDataset:
    def test_round_trip_bit_exact(self, spec, tmp_path_factory):
        path = tmp_path_factory.mktemp("lbl") / "labels.bin"
        poses = synth.sample_poses(spec, 3, seed=0)
        rng = np.random.default_rng(1)
        queries = rng.uniform(-0.1, 0.15, size=(3, 64, 3))
        labels = (rng.random((3, 64)) > 0.5).astype(np.float64)
        datasets.write_label_dataset(path, poses, queries, labels)
        rposes, rqueries, rlabels = datasets.read_label_dataset(path)
        assert np.array_equal(rqueries, queries)
        assert np.array_equal(rlabels, labels)
        for a, b in zip(rposes, poses):
            assert np.array_equal(a.theta, b.theta)

    def test_shape_mismatch_rejected(self, spec, tmp_path):
        poses = synth.sample_poses(spec, 2, seed=0)
        with pytest.raises(InvalidArgumentError):
            datasets.write_label_dataset(
                tmp_path / "x.bin", poses, np.zeros((2, 4, 3)), np.zeros((2, 5))
            )

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            datasets.read_label_dataset(tmp_path / "absent.bin")

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTLBL\n" + b"\x00" * 16)
        with pytest.raises(InvalidArgumentError):
            datasets.read_label_dataset(path)

    def test_generated_labels_match_analytic(self, spec, tmp_path):
        path = tmp_path / "labels.bin"
        poses, queries, labels = datasets.make_label_dataset(path, spec, 2, 256, seed=3)
        for i, pose in enumerate(poses):
            tf = synth.pose_transforms(spec, pose)
            expect, _ = synth.analytic_occupancy(spec, tf, queries[i])
            assert np.array_equal(labels[i], expect)
        # Both classes should be represented.
        assert 0.0 < labels.mean() < 1.0

    def test_deterministic_bytes(self, spec, tmp_path):
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        datasets.make_label_dataset(p1, spec, 2, 32, seed=4)
        datasets.make_label_dataset(p2, spec, 2, 32, seed=4)
        assert p1.read_bytes() == p2.read_bytes()


@pytest.fixture(scope="module")
def small(spec, tmp_path_factory):
    out = tmp_path_factory.mktemp("frames")
    datasets.make_frame_dataset(out, spec, num_train=2, num_val=1, width=24, height=24, seed=5)
    return out


class TestFrameDataset:
    def test_manifest_and_split(self, small):
        manifest, frames = datasets.load_frame_dataset(small)
        assert manifest["width"] == 24 and manifest["height"] == 24
        assert len(frames) == 3
        assert manifest["split"]["train"] == [0, 1]
        assert manifest["split"]["val"] == [2]

    def test_canonical_poses_prepended(self, spec, small):
        _, frames = datasets.load_frame_dataset(small)
        assert np.array_equal(frames[0].pose.theta, synth.flat_pose().theta)
        assert np.array_equal(frames[1].pose.theta, synth.fist_pose(spec).theta)

    def test_images_match_rerender_within_quantization(self, spec, small):
        _, frames = datasets.load_frame_dataset(small)
        f = frames[0]
        ref = synth.render_reference(spec, f.pose, f.camera, 24, 24)
        assert np.abs(f.rgb - ref.rgb).max() <= 0.5 / 255.0 + 1e-12
        assert np.array_equal(f.mask, ref.mask)

    def test_split_must_cover_frames(self, spec, tmp_path):
        poses = [synth.flat_pose()]
        cams = [default_camera(8, 8, 0.38, np.zeros(3))]
        with pytest.raises(InvalidArgumentError):
            datasets.write_frame_dataset(
                tmp_path, spec, poses, cams, 8, 8, split={"train": []}
            )

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            datasets.load_frame_dataset(tmp_path)


class TestTemplateArtifacts:
    def test_round_trip(self, spec, tmp_path):
        mesh, weights, tree, joints = synth.generate_template(spec)
        datasets.write_template_artifacts(tmp_path, mesh, weights, tree, joints)
        rmesh, rweights, rtree, rjoints = datasets.load_template_dir(tmp_path)
        assert np.array_equal(rmesh.vertices, mesh.vertices)
        assert np.array_equal(rmesh.faces, mesh.faces)
        assert np.array_equal(rweights, weights)
        assert np.array_equal(rjoints, joints)
        assert rtree.local_pairs == tree.local_pairs

    def test_missing_artifact(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            datasets.load_template_dir(tmp_path)
