"""Area-weighted surface sampling and barycentric anchors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .mesh import TriMesh

DEFAULT_PART_SAMPLES = 256


@dataclass(frozen=True)
class BarycentricAnchors:
    """Surface points pinned by (face index, barycentric weights).

    Pose-invariant in the template's intrinsic geometry: resampling against
    posed vertices moves the anchors with the surface.
    """

    face_index: np.ndarray  # (N,) int
    bary: np.ndarray  # (N, 3), rows nonnegative and summing to 1

    def __post_init__(self):
        fi = np.asarray(self.face_index, dtype=np.int64)
        b = np.asarray(self.bary, dtype=np.float64)
        if b.ndim != 2 or b.shape[1] != 3 or len(fi) != len(b):
            raise InvalidArgumentError("anchor arrays must be (N,) and (N, 3)")
        if (b < -1e-12).any() or np.abs(b.sum(axis=1) - 1.0).max() > 1e-12:
            raise InvalidArgumentError("barycentric rows must lie on the simplex")
        object.__setattr__(self, "face_index", fi)
        object.__setattr__(self, "bary", b)

    def __len__(self) -> int:
        return len(self.face_index)


def _uniform_simplex(rng: np.random.Generator, n: int) -> np.ndarray:
    # Square-root reflection: uniform on the triangle.
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    return np.stack([w0, w1, w2], axis=1)


def sample_barycentric(mesh: TriMesh, n: int, seed: int) -> BarycentricAnchors:
    """Draw ``n`` anchors with face probability proportional to area."""
    if n < 1:
        raise InvalidArgumentError("need at least one sample")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise InvalidArgumentError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    faces = rng.choice(len(areas), size=n, p=areas / total)
    return BarycentricAnchors(face_index=faces, bary=_uniform_simplex(rng, n))


def resample_anchors(
    anchors: BarycentricAnchors, posed_vertices: np.ndarray, faces: np.ndarray
) -> np.ndarray:
    """Anchor positions under the given (posed) vertex array."""
    faces = np.asarray(faces, dtype=np.int64)
    if anchors.face_index.size and anchors.face_index.max() >= len(faces):
        raise InvalidArgumentError("anchor face index out of range")
    tri = np.asarray(posed_vertices, dtype=np.float64)[faces[anchors.face_index]]
    return np.einsum("nk,nkc->nc", anchors.bary, tri)


def sample_part_surface(
    mesh: TriMesh,
    part_labels: np.ndarray,
    part: int,
    n: int = DEFAULT_PART_SAMPLES,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted samples restricted to faces labeled ``part``.

    Returns (points, normals); normals are the unit face normals by winding.
    """
    part_labels = np.asarray(part_labels, dtype=np.int64)
    if len(part_labels) != mesh.num_faces:
        raise InvalidArgumentError("one label per face required")
    sel = np.flatnonzero(part_labels == part)
    if sel.size == 0:
        raise InvalidArgumentError(f"part {part} has no faces")
    sub_areas = mesh.face_areas()[sel]
    total = sub_areas.sum()
    if total <= 0:
        raise InvalidArgumentError(f"part {part} has zero area")
    rng = np.random.default_rng(seed)
    pick = sel[rng.choice(len(sel), size=n, p=sub_areas / total)]
    bary = _uniform_simplex(rng, n)
    tri = mesh.vertices[mesh.faces[pick]]
    points = np.einsum("nk,nkc->nc", bary, tri)
    normals = mesh.face_normals()[pick]
    return points, normals


def face_part_labels(faces: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Assign each face to the part with the largest summed vertex weight."""
    w = np.asarray(weights, dtype=np.float64)
    per_face = w[np.asarray(faces, dtype=np.int64)].sum(axis=1)
    return np.argmax(per_face, axis=1)
