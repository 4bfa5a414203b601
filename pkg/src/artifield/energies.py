"""Geometric energies: uniform Laplacian smoothness and chamfer distance."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError, TopologyError
from .mesh import TriMesh


def laplacian_energy(mesh: TriMesh) -> float:
    """Mean per-vertex average neighbor distance (meters).

    (1/V) sum_i (1/|N(i)|) sum_{j in N(i)} ||v_i - v_j||.  Scales linearly
    with uniform mesh scaling.
    """
    edges = mesh.edges()
    v = mesh.vertices
    deg = np.zeros(len(v))
    acc = np.zeros(len(v))
    d = np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1)
    np.add.at(deg, edges[:, 0], 1.0)
    np.add.at(deg, edges[:, 1], 1.0)
    np.add.at(acc, edges[:, 0], d)
    np.add.at(acc, edges[:, 1], d)
    if (deg == 0).any():
        raise TopologyError(f"{int((deg == 0).sum())} isolated vertices")
    return float(np.mean(acc / deg))


def point_triangle_distances(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Exact distances from each point to each triangle, shape (N, M).

    The closest point may lie in the face interior, on an edge, or at a
    vertex; all candidates are evaluated and minimized.
    """
    p = np.asarray(points, dtype=np.float64)[:, None, :]  # (N, 1, 3)
    a = np.asarray(tri, dtype=np.float64)[None, :, 0, :]  # (1, M, 3)
    b = np.asarray(tri, dtype=np.float64)[None, :, 1, :]
    c = np.asarray(tri, dtype=np.float64)[None, :, 2, :]

    def seg_dist2(s0, s1):
        d = s1 - s0
        l2 = (d * d).sum(-1)
        t = ((p - s0) * d).sum(-1) / np.where(l2 > 0, l2, 1.0)
        t = np.clip(t, 0.0, 1.0)
        q = s0 + t[..., None] * d
        r = p - q
        return (r * r).sum(-1)

    e0 = b - a
    e1 = c - a
    d = p - a
    a00 = (e0 * e0).sum(-1)
    a01 = (e0 * e1).sum(-1)
    a11 = (e1 * e1).sum(-1)
    b0 = (e0 * d).sum(-1)
    b1 = (e1 * d).sum(-1)
    det = a00 * a11 - a01 * a01
    safe = np.where(np.abs(det) > 1e-300, det, 1.0)
    u = (a11 * b0 - a01 * b1) / safe
    v = (a00 * b1 - a01 * b0) / safe
    inside = (u >= 0) & (v >= 0) & (u + v <= 1) & (np.abs(det) > 1e-300)
    q = a + u[..., None] * e0 + v[..., None] * e1
    r = p - q
    interior = np.where(inside, (r * r).sum(-1), np.inf)

    d2 = np.minimum(interior, seg_dist2(a, b))
    d2 = np.minimum(d2, seg_dist2(b, c))
    d2 = np.minimum(d2, seg_dist2(c, a))
    return np.sqrt(d2)


def chamfer_point_to_face(
    points: np.ndarray, mesh: TriMesh, chunk: int = 2048
) -> float:
    """Mean distance from each point to its nearest mesh triangle (meters)."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) == 0:
        raise InvalidArgumentError("points must be a nonempty (N, 3) array")
    if mesh.num_faces == 0:
        raise InvalidArgumentError("mesh has no faces")
    tri = mesh.vertices[mesh.faces]
    best = np.empty(len(p))
    for i in range(0, len(p), chunk):
        best[i : i + chunk] = point_triangle_distances(p[i : i + chunk], tri).min(axis=1)
    return float(best.mean())
