"""Differentiable soft silhouette rendering and the soft IoU loss.

Per pixel the coverage is a probabilistic union over faces,
1 - prod_f (1 - sigmoid(sign_f * d_f^2 / gamma)), with d_f the distance in
normalized device coordinates from the pixel center to the projected
triangle, and sign positive inside.  Faces whose soft contribution is
below saturation at the pixel are culled exactly (their sigmoid term
underflows the clamp), keeping the cost near-linear in covered pixels.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .camera import PinholeCamera
from .errors import InvalidArgumentError

DEFAULT_GAMMA = 1e-5
LOGIT_CLAMP = 60.0
NEAR_Z = 1e-6


def _pair_candidates(uv: np.ndarray, faces: np.ndarray, valid: np.ndarray,
                     width: int, height: int, cut: float) -> tuple[np.ndarray, np.ndarray]:
    """(pixel, face) candidate pairs from inflated projected face bboxes."""
    pix_ids = []
    face_ids = []
    fx = uv[faces]  # (F, 3, 2) in NDC
    lo = fx.min(axis=1) - cut
    hi = fx.max(axis=1) + cut
    for f in np.flatnonzero(valid):
        j0 = max(int(np.floor(lo[f, 0] * width - 0.5)), 0)
        j1 = min(int(np.ceil(hi[f, 0] * width - 0.5)), width - 1)
        i0 = max(int(np.floor(lo[f, 1] * height - 0.5)), 0)
        i1 = min(int(np.ceil(hi[f, 1] * height - 0.5)), height - 1)
        if j1 < j0 or i1 < i0:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
        pix_ids.append((ii * width + jj).reshape(-1))
        face_ids.append(np.full(pix_ids[-1].shape, f, dtype=np.int64))
    if not pix_ids:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(pix_ids), np.concatenate(face_ids)


def _segment_dist2(p: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Squared distance from constant 2-d points to differentiable segments."""
    d = b - a
    ap = Tensor(p) - a
    l2 = ad.tsum(d * d, axis=1)
    l2_safe = ad.maximum(l2, ad.Tensor(np.full(l2.shape, 1e-30)))
    t = ad.clip(ad.tsum(ap * d, axis=1) / l2_safe, 0.0, 1.0)
    q = a + ad.reshape(t, (-1, 1)) * d
    r = Tensor(p) - q
    return ad.tsum(r * r, axis=1)


def soft_silhouette(
    vertices,
    faces: np.ndarray,
    camera: PinholeCamera,
    width: int,
    height: int,
    gamma: float = DEFAULT_GAMMA,
) -> Tensor:
    """Soft coverage image (height, width) in [0, 1]; differentiable in vertices.

    Faces with any vertex behind the camera are dropped; a mesh entirely
    behind the camera yields an all-zero image.
    """
    v = ad.as_tensor(vertices)
    faces = np.asarray(faces, dtype=np.int64)
    n_pix = width * height

    r = camera.rotation
    t = camera.translation
    cam = ad.matmul(v, Tensor(r.T)) + Tensor(t)
    z = cam.data[:, 2]
    valid_face = (z[faces] > NEAR_Z).all(axis=1)
    if not valid_face.any():
        return Tensor(np.zeros((height, width)))

    # NDC projection (u, v) in [0, 1] across the image.
    zt = ad.take(cam, (slice(None), slice(2, 3)))
    xy = ad.take(cam, (slice(None), slice(0, 2)))
    scale = Tensor(np.array([camera.fx / width, camera.fy / height]))
    offset = Tensor(np.array([camera.cx / width, camera.cy / height]))
    uv = xy / zt * scale + offset

    cut = np.sqrt(2.0 * LOGIT_CLAMP * gamma)  # sigmoid fully saturated beyond
    pix, fid = _pair_candidates(uv.data, faces, valid_face, width, height, cut)
    if len(pix) == 0:
        return Tensor(np.zeros((height, width)))

    jj = pix % width
    ii = pix // width
    centers = np.stack([(jj + 0.5) / width, (ii + 0.5) / height], axis=1)

    a = ad.take(uv, faces[fid, 0])
    b = ad.take(uv, faces[fid, 1])
    c = ad.take(uv, faces[fid, 2])

    # Inside test by edge functions (orientation-independent): constant mask.
    def edge_sign(p, q, x):
        return (q[:, 0] - p[:, 0]) * (x[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (x[:, 0] - p[:, 0])

    s0 = edge_sign(a.data, b.data, centers)
    s1 = edge_sign(b.data, c.data, centers)
    s2 = edge_sign(c.data, a.data, centers)
    inside = ((s0 >= 0) & (s1 >= 0) & (s2 >= 0)) | ((s0 <= 0) & (s1 <= 0) & (s2 <= 0))
    sign = np.where(inside, 1.0, -1.0)

    d2 = ad.minimum(
        ad.minimum(_segment_dist2(centers, a, b), _segment_dist2(centers, b, c)),
        _segment_dist2(centers, c, a),
    )
    logit = ad.clip(Tensor(sign) * d2 * (1.0 / gamma), -LOGIT_CLAMP, LOGIT_CLAMP)
    one_minus = ad.sigmoid(-logit)  # 1 - sigma(logit), stable near saturation
    log_terms = ad.log(one_minus)
    total = ad.segment_sum(ad.reshape(log_terms, (-1, 1)), pix, n_pix)
    img = 1.0 - ad.exp(total)
    return ad.reshape(img, (height, width))


def hard_silhouette(
    vertices: np.ndarray, faces: np.ndarray, camera: PinholeCamera, width: int, height: int
) -> np.ndarray:
    """Binary coverage by pixel-center point-in-triangle tests (oracle/metric)."""
    uv, z = camera.project(np.asarray(vertices))
    uv = uv / np.array([width, height])
    faces = np.asarray(faces, dtype=np.int64)
    valid = (z[faces] > NEAR_Z).all(axis=1)
    jj, ii = np.meshgrid(np.arange(width), np.arange(height))
    centers = np.stack([(jj + 0.5) / width, (ii + 0.5) / height], axis=-1).reshape(-1, 2)
    out = np.zeros(width * height, dtype=bool)
    for f in np.flatnonzero(valid):
        a, b, c = uv[faces[f]]

        def es(p, q):
            return (q[0] - p[0]) * (centers[:, 1] - p[1]) - (q[1] - p[1]) * (centers[:, 0] - p[0])

        s0, s1, s2 = es(a, b), es(b, c), es(c, a)
        inside = ((s0 >= 0) & (s1 >= 0) & (s2 >= 0)) | ((s0 <= 0) & (s1 <= 0) & (s2 <= 0))
        out |= inside
    return out.reshape(height, width).astype(np.float64)


def iou_loss(pred, gt) -> Tensor:
    """Soft IoU loss 1 - sum(min) / sum(max); zero iff identical and nonzero."""
    pred = ad.as_tensor(pred)
    gt = ad.as_tensor(gt)
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {gt.shape}")
    inter = ad.tsum(ad.minimum(pred, gt))
    union = ad.tsum(ad.maximum(pred, gt))
    if union.data == 0.0:
        warnings.warn("iou_loss of two empty silhouettes is vacuous; returning 0")
        return Tensor(0.0)
    return 1.0 - inter / union


def hard_iou(a: np.ndarray, b: np.ndarray, threshold: float = 0.5) -> float:
    """Binary IoU metric after thresholding both images."""
    ah = np.asarray(a) > threshold
    bh = np.asarray(b) > threshold
    union = (ah | bh).sum()
    if union == 0:
        return 1.0
    return float((ah & bh).sum() / union)
