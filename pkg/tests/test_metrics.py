"""Unit tests for image metrics, field IoU, chamfer, and the eval report."""

import csv

import numpy as np
import pytest

from artifield import autodiff as ad
from artifield.autodiff import Tensor
from artifield.errors import InvalidArgumentError
from artifield.mesh import TriMesh
from artifield.metrics import (
    PSNR_EXACT_SENTINEL,
    EvalReport,
    chamfer_distance,
    field_iou,
    psnr,
    ssim,
    ssim_loss_term,
)


class TestPsnr:
    def test_known_value(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 0.1)
        # MSE 0.01 at unit range gives exactly 20 dB.
        assert np.isclose(psnr(a, b), 20.0)

    def test_exact_match_sentinel(self):
        img = np.random.default_rng(0).random((4, 4, 3))
        assert psnr(img, img) == PSNR_EXACT_SENTINEL

    def test_data_range(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 25.5)
        assert np.isclose(psnr(a, b, data_range=255.0), 20.0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            psnr(np.zeros((2, 2)), np.zeros((3, 3)))


class TestSsim:
    def test_identical_is_one(self):
        img = np.random.default_rng(1).random((32, 32))
        assert np.isclose(ssim(img, img), 1.0)

    def test_matches_skimage(self):
        skimage = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(2)
        a = rng.random((48, 48))
        b = np.clip(a + rng.normal(0.0, 0.1, a.shape), 0.0, 1.0)
        ours = ssim(a, b)
        ref = skimage.structural_similarity(
            a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False,
        )
        assert abs(ours - ref) < 5e-3

    def test_color_averages_channels(self):
        rng = np.random.default_rng(3)
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        per = [ssim(a[..., c], b[..., c]) for c in range(3)]
        assert np.isclose(ssim(a, b), np.mean(per))


class TestSsimLossTerm:
    def test_tracks_metric(self):
        rng = np.random.default_rng(4)
        a = rng.random((20, 20, 3))
        b = np.clip(a + rng.normal(0.0, 0.05, a.shape), 0.0, 1.0)
        with ad.no_grad():
            loss = float(ssim_loss_term(Tensor(a), b).data)
        assert abs(loss - (1.0 - ssim(a, b))) < 0.05

    def test_identical_near_zero(self):
        img = np.random.default_rng(5).random((16, 16, 3))
        with ad.no_grad():
            loss = float(ssim_loss_term(Tensor(img), img).data)
        assert abs(loss) < 1e-10

    def test_gradient_against_finite_differences(self):
        rng = np.random.default_rng(6)
        a = rng.random((8, 8, 1))
        b = rng.random((8, 8, 1))
        t = Tensor(a.copy(), requires_grad=True)
        loss = ssim_loss_term(t, b)
        loss.backward()
        worst = 0.0
        for _ in range(5):
            i = int(rng.integers(0, a.size))
            h = 1e-6
            pert = a.reshape(-1).copy()
            pert[i] += h
            with ad.no_grad():
                up = float(ssim_loss_term(Tensor(pert.reshape(a.shape)), b).data)
            pert[i] -= 2 * h
            with ad.no_grad():
                dn = float(ssim_loss_term(Tensor(pert.reshape(a.shape)), b).data)
            fd = (up - dn) / (2 * h)
            g = t.grad.reshape(-1)[i]
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1.0))
        assert worst < 1e-4


class TestFieldIou:
    def test_identical_fields(self):
        occ = lambda p: (np.linalg.norm(p, axis=1) < 0.5).astype(float)
        lo, hi = np.full(3, -1.0), np.full(3, 1.0)
        assert field_iou(occ, occ, lo, hi, resolution=24) == 1.0

    def test_nested_spheres(self):
        big = lambda p: (np.linalg.norm(p, axis=1) < 0.5).astype(float)
        small = lambda p: (np.linalg.norm(p, axis=1) < 0.25).astype(float)
        lo, hi = np.full(3, -1.0), np.full(3, 1.0)
        iou = field_iou(big, small, lo, hi, resolution=48)
        # Volume ratio of nested spheres is (1/2)^3.
        assert abs(iou - 0.125) < 0.02

    def test_empty_union(self):
        zero = lambda p: np.zeros(len(p))
        assert field_iou(zero, zero, np.zeros(3), np.ones(3), resolution=8) == 1.0


class TestChamfer:
    @staticmethod
    def octahedron(scale=1.0, offset=0.0):
        v = scale * np.array(
            [
                [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0, 0, 1.0], [0, 0, -1.0],
            ]
        ) + offset
        f = np.array(
            [
                [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
            ]
        )
        return TriMesh(v, f)

    def test_identical_meshes_small(self):
        m = self.octahedron()
        assert chamfer_distance(m, m, n_samples=2000, seed=0) < 0.05

    def test_translation_shows_up(self):
        a = self.octahedron()
        b = self.octahedron(offset=2.0)
        d = chamfer_distance(a, b, n_samples=2000, seed=0)
        assert d > 1.0

    def test_deterministic(self):
        a = self.octahedron()
        b = self.octahedron(scale=1.1)
        assert chamfer_distance(a, b, seed=3) == chamfer_distance(a, b, seed=3)


class TestEvalReport:
    def test_json_round_trip(self, tmp_path):
        rep = EvalReport()
        rep.add("psnr_train", 25.1234)
        rep.add("iou", 0.9)
        path = tmp_path / "report.json"
        rep.write_json(path)
        back = EvalReport.read_json(path)
        assert back.metrics == rep.metrics

    def test_csv_layout(self, tmp_path):
        rep = EvalReport({"b": 2.0, "a": 1.5})
        path = tmp_path / "report.csv"
        rep.write_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["metric", "value"]
        assert rows[1] == ["a", "1.5"] and rows[2] == ["b", "2.0"]

    def test_csv_preserves_full_precision(self, tmp_path):
        value = 1.0 / 3.0
        rep = EvalReport({"x": value})
        path = tmp_path / "r.csv"
        rep.write_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert float(rows[1][1]) == value
