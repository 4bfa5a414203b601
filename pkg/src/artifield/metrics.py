"""Image and geometry metrics plus the delimited evaluation report."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError
from .mesh import TriMesh
from .sampling import resample_anchors, sample_barycentric

PSNR_EXACT_SENTINEL = 99.0
SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(pred: np.ndarray, gt: np.ndarray, data_range: float = 1.0) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {gt.shape}")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return PSNR_EXACT_SENTINEL
    return float(10.0 * np.log10(data_range * data_range / mse))


def _ssim_channel(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def blur(x):
        return gaussian_filter(x, SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="nearest")

    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(pred: np.ndarray, gt: np.ndarray, data_range: float = 1.0) -> float:
    """Gaussian-weighted structural similarity, averaged over channels."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        return _ssim_channel(pred, gt, data_range)
    return float(np.mean([_ssim_channel(pred[..., c], gt[..., c], data_range) for c in range(pred.shape[-1])]))


def _gaussian_band_matrix(n: int, sigma: float = SSIM_SIGMA, radius: int = 5) -> np.ndarray:
    """Row-normalized truncated Gaussian smoothing operator (n, n)."""
    idx = np.arange(n)
    diff = idx[None, :] - idx[:, None]
    g = np.exp(-0.5 * (diff / sigma) ** 2) * (np.abs(diff) <= radius)
    return g / g.sum(axis=1, keepdims=True)


def ssim_loss_term(pred: Tensor, gt: np.ndarray, data_range: float = 1.0) -> Tensor:
    """Differentiable 1 - SSIM over an (H, W, C) tensor image.

    Smoothing uses separable row-normalized Gaussian matrices, so the term
    is a close but not bit-equal relative of the numpy metric.
    """
    h, w = pred.shape[0], pred.shape[1]
    c = pred.shape[2] if len(pred.shape) == 3 else 1
    gh = _gaussian_band_matrix(h)
    gw = _gaussian_band_matrix(w)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    gt = np.asarray(gt, dtype=np.float64).reshape(h, w, c)
    pred3 = ad.reshape(pred, (h, w, c))
    terms = []
    for ch in range(c):
        a = ad.reshape(ad.take(pred3, (slice(None), slice(None), slice(ch, ch + 1))), (h, w))
        b = gt[:, :, ch]

        def blur_t(x: Tensor) -> Tensor:
            return ad.matmul(ad.matmul(Tensor(gh), x), Tensor(gw.T))

        def blur_c(x: np.ndarray) -> np.ndarray:
            return gh @ x @ gw.T

        mu_a = blur_t(a)
        mu_b = blur_c(b)
        var_a = blur_t(a * a) - mu_a * mu_a
        var_b = blur_c(b * b) - mu_b * mu_b
        cov = blur_t(a * Tensor(b)) - mu_a * Tensor(mu_b)
        num = (mu_a * Tensor(2.0 * mu_b) + c1) * (cov * 2.0 + c2)
        den = (mu_a * mu_a + Tensor(mu_b * mu_b) + c1) * (var_a + Tensor(var_b) + c2)
        terms.append(ad.tmean(num / den))
    mean_ssim = terms[0]
    for t in terms[1:]:
        mean_ssim = mean_ssim + t
    mean_ssim = mean_ssim * (1.0 / len(terms))
    return 1.0 - mean_ssim


def field_iou(occ_a, occ_b, lo: np.ndarray, hi: np.ndarray, resolution: int = 64,
              threshold: float = 0.5, chunk: int = 16384) -> float:
    """IoU of two occupancy functions thresholded on a regular grid."""
    xs = [np.linspace(lo[k], hi[k], resolution) for k in range(3)]
    grid = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1).reshape(-1, 3)
    inter = 0
    union = 0
    for s in range(0, len(grid), chunk):
        block = grid[s : s + chunk]
        a = np.asarray(occ_a(block)) > threshold
        b = np.asarray(occ_b(block)) > threshold
        inter += int((a & b).sum())
        union += int((a | b).sum())
    if union == 0:
        return 1.0
    return inter / union


def chamfer_distance(mesh_a: TriMesh, mesh_b: TriMesh, n_samples: int = 10000, seed: int = 0) -> float:
    """Symmetric mean nearest-neighbor distance between surface samples."""
    aa = sample_barycentric(mesh_a, n_samples, seed)
    bb = sample_barycentric(mesh_b, n_samples, seed + 1)
    pa = resample_anchors(aa, mesh_a.vertices, mesh_a.faces)
    pb = resample_anchors(bb, mesh_b.vertices, mesh_b.faces)
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    return float(0.5 * (da.mean() + db.mean()))


@dataclass
class EvalReport:
    """Flat metric mapping serialized as JSON and as key,value CSV."""

    metrics: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, value: float):
        self.metrics[name] = float(value)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump({"metrics": self.metrics}, fh, indent=2, sort_keys=True)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for name in sorted(self.metrics):
                writer.writerow([name, repr(self.metrics[name])])

    @classmethod
    def read_json(cls, path) -> "EvalReport":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(metrics={k: float(v) for k, v in doc["metrics"].items()})
