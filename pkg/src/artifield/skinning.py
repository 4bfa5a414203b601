"""Linear blend skinning and skinning-weight bookkeeping."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .kinematics import BoneTransforms

ROW_SUM_TOL = 1e-9


def validate_weights(weights: np.ndarray, num_parts: int | None = None) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise InvalidArgumentError(f"weights must be 2-d, got shape {w.shape}")
    if num_parts is not None and w.shape[1] != num_parts:
        raise InvalidArgumentError(
            f"weights must have {num_parts} columns, got {w.shape[1]}"
        )
    if (w < -ROW_SUM_TOL).any():
        raise InvalidArgumentError("negative skinning weights")
    err = np.abs(w.sum(axis=1) - 1.0).max() if len(w) else 0.0
    if err > ROW_SUM_TOL:
        raise InvalidArgumentError(f"weight rows must sum to 1 (max error {err:.3g})")
    return w


def blend_matrices(weights: np.ndarray, transforms: BoneTransforms) -> np.ndarray:
    """Per-vertex blended rest-to-posed 4x4 maps, sum_b W_ib G_b G_b(0)^-1."""
    w = validate_weights(weights, transforms.num_parts)
    rel = transforms.relative()  # (B, 4, 4)
    return np.einsum("vb,bij->vij", w, rel)


def lbs(
    canonical_vertices: np.ndarray,
    weights: np.ndarray,
    transforms: BoneTransforms,
) -> np.ndarray:
    """Pose vertices by weighted blending of per-bone rigid maps."""
    v = np.asarray(canonical_vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 3:
        raise InvalidArgumentError(f"vertices must be (V, 3), got {v.shape}")
    if len(v) != len(weights):
        raise InvalidArgumentError("vertex/weight row count mismatch")
    A = blend_matrices(weights, transforms)
    return np.einsum("vij,vj->vi", A[:, :3, :3], v) + A[:, :3, 3]


def simplex_project_rows(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[1]
    u = np.sort(w, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(w)), rho] / (rho + 1)
    return np.maximum(w - theta[:, None], 0.0)
