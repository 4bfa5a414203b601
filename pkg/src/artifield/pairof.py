"""Local-pair occupancy field over an articulated part hierarchy.

Every query point is expressed in the rest frame of each part (rigid
canonicalization), scored against that part's learned shape code, and the
scores of the two parts of every parent-child pair are fused by max; the
global occupancy is the max over all pairs.  Canonicalization makes the
field exactly equivariant to rigid motions applied to the whole hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError
from .kinematics import NUM_PARTS, BoneTransforms, KinematicTree
from .mesh import TriMesh
from .nn import Mlp, PointSetEncoder
from .sampling import face_part_labels, sample_part_surface
from .skinning import lbs

CODE_WIDTH = 64
PART_SAMPLES = 256
DEFAULT_TAU = 0.05
BAND_FILL_LOGIT = -200.0
# Canonical coordinates are meters (hand scale ~0.1); the networks see them
# multiplied by this so positions land in a unit-ish range.
INPUT_SCALE = 25.0


def canonicalize_points(transforms: BoneTransforms, points: np.ndarray) -> np.ndarray:
    """(B, N, 3) per-part canonical coordinates R_b^T (p - t_b)."""
    rel = transforms.relative()
    p = np.asarray(points, dtype=np.float64)
    out = np.empty((NUM_PARTS, len(p), 3))
    for b in range(NUM_PARTS):
        out[b] = (p - rel[b, :3, 3]) @ rel[b, :3, :3]
    return out


def canonicalize_directions(transforms: BoneTransforms, dirs: np.ndarray) -> np.ndarray:
    rel = transforms.relative()
    d = np.asarray(dirs, dtype=np.float64)
    return np.stack([d @ rel[b, :3, :3] for b in range(NUM_PARTS)])


def part_surface_samples(
    mesh: TriMesh,
    weights: np.ndarray,
    transforms: BoneTransforms,
    seed: int,
    samples_per_part: int = PART_SAMPLES,
) -> np.ndarray:
    """Canonical per-part surface samples with normals, shape (B, S, 6).

    The template is posed by linear blend skinning, each part's faces are
    sampled on the posed surface, and points and normals are pulled back
    into the part's rest frame.
    """
    posed = mesh.with_vertices(lbs(mesh.vertices, weights, transforms))
    labels = face_part_labels(mesh.faces, weights)
    rel = transforms.relative()
    out = np.empty((NUM_PARTS, samples_per_part, 6))
    for b in range(NUM_PARTS):
        pts, normals = sample_part_surface(posed, labels, b, samples_per_part, seed + 7919 * b)
        r = rel[b, :3, :3]
        t = rel[b, :3, 3]
        out[b, :, :3] = (pts - t) @ r
        out[b, :, 3:] = normals @ r
    return out


def part_rest_bounds(mesh: TriMesh, weights: np.ndarray, margin: float = 0.015):
    """Per-part axis-aligned bounds of the rest-pose template, inflated."""
    labels = face_part_labels(mesh.faces, weights)
    lo = np.empty((NUM_PARTS, 3))
    hi = np.empty((NUM_PARTS, 3))
    for b in range(NUM_PARTS):
        verts = np.unique(mesh.faces[labels == b])
        if len(verts) == 0:
            # A part with no faces still gets a degenerate band at its origin.
            lo[b] = -margin
            hi[b] = margin
            continue
        v = mesh.vertices[verts]
        lo[b] = v.min(axis=0) - margin
        hi[b] = v.max(axis=0) + margin
    return lo, hi


@dataclass
class PairOF:
    """Part encoder plus pair decoder; all parameters live in named Mlps."""

    tree: KinematicTree
    q_part: PointSetEncoder
    q_front: Mlp
    q_tail: Mlp
    tau: float = DEFAULT_TAU

    @classmethod
    def create(cls, tree: KinematicTree, seed: int = 0, width: int = CODE_WIDTH) -> "PairOF":
        rng = np.random.default_rng(seed)
        q_part = PointSetEncoder(
            Mlp.create([6, width, width, CODE_WIDTH], ["relu", "relu", "none"], rng),
            final_maxpool=True,
        )
        q_front = Mlp.create([CODE_WIDTH + 3, width, width], ["relu", "none"], rng)
        q_tail = Mlp.create([width, width, 1], ["relu", "none"], rng)
        return cls(tree=tree, q_part=q_part, q_front=q_front, q_tail=q_tail)

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        params.update(self.q_part.mlp.parameters("q_part"))
        params.update(self.q_front.parameters("q_front"))
        params.update(self.q_tail.parameters("q_tail"))
        return params

    def codes(self, samples: np.ndarray) -> Tensor:
        """Shape codes (B, CODE_WIDTH) from canonical samples (B, S, 6)."""
        scaled = np.array(samples, dtype=np.float64)
        scaled[..., :3] *= INPUT_SCALE
        return self.q_part.forward_batched(ad.as_tensor(scaled))

    def part_logits(
        self,
        codes: Tensor,
        canonical_queries: np.ndarray,
        parts: np.ndarray | None = None,
        band: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> Tensor:
        """Per-part logits (N, B); rows outside a part's band get a hard fill.

        ``band`` restricts evaluation to queries inside the part's inflated
        rest bounds; skipped entries receive BAND_FILL_LOGIT, which is far
        below any saturation threshold so downstream maxima ignore them.
        """
        n = canonical_queries.shape[1]
        part_list = range(NUM_PARTS) if parts is None else parts
        columns: list[Tensor] = []
        col_order = []
        for b in part_list:
            q = canonical_queries[b]
            if band is not None:
                lo, hi = band
                keep = ((q >= lo[b]) & (q <= hi[b])).all(axis=1)
            else:
                keep = np.ones(n, dtype=bool)
            if not keep.any():
                columns.append(Tensor(np.full((n, 1), BAND_FILL_LOGIT)))
                col_order.append(b)
                continue
            idx = np.flatnonzero(keep)
            code_row = ad.take(codes, slice(b, b + 1))  # (1, C)
            rows = ad.concat(
                [ad.broadcast_rows(code_row, len(idx)), Tensor(q[idx] * INPUT_SCALE)],
                axis=1,
            )
            h = self.q_front.forward(rows)
            logit = self.q_tail.forward(h)  # (k, 1)
            if keep.all():
                columns.append(logit)
            else:
                columns.append(
                    ad.scatter_rows(logit, idx, n, fill=BAND_FILL_LOGIT)
                )
            col_order.append(b)
        out = ad.concat(columns, axis=1)
        if parts is not None and list(col_order) != list(range(NUM_PARTS)):
            raise InvalidArgumentError("parts must be ascending and complete when given")
        return out

    def pair_logits(self, part_logits: Tensor) -> Tensor:
        """(N, P) pair scores: max of the two member parts of each pair."""
        cols = []
        for parent, child in self.tree.local_pairs:
            a = ad.take(part_logits, (slice(None), slice(parent, parent + 1)))
            b = ad.take(part_logits, (slice(None), slice(child, child + 1)))
            cols.append(ad.maximum(a, b))
        return ad.concat(cols, axis=1)

    def global_logit(
        self,
        codes: Tensor,
        canonical_queries: np.ndarray,
        band=None,
    ) -> Tensor:
        per_part = self.part_logits(codes, canonical_queries, band=band)
        per_pair = self.pair_logits(per_part)
        return ad.reshape(ad.tmax(per_pair, axis=1), (-1,))

    def occupancy(
        self,
        codes: Tensor,
        canonical_queries: np.ndarray,
        soft: bool = False,
        band=None,
    ) -> Tensor:
        """Occupancy in [0, 1]; ``soft`` applies the tempered sigmoid."""
        logit = self.global_logit(codes, canonical_queries, band=band)
        if soft:
            return ad.sigmoid(logit * self.tau)
        return ad.sigmoid(logit)

    # -- persistence ---------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        params = self.parameters()
        for k, t in params.items():
            if k not in arrays:
                raise InvalidArgumentError(f"missing parameter {k}")
            if arrays[k].shape != t.data.shape:
                raise InvalidArgumentError(f"shape mismatch for {k}")
            t.data[...] = arrays[k]

    def meta(self) -> dict:
        return {
            "tau": self.tau,
            "q_part": self.q_part.mlp.spec(),
            "q_front": self.q_front.spec(),
            "q_tail": self.q_tail.spec(),
            "parents": [int(p) for p in self.tree.parent],
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "PairOF":
        tree = KinematicTree(np.asarray(meta["parents"], dtype=np.int64))
        return cls(
            tree=tree,
            q_part=PointSetEncoder(Mlp.from_spec(meta["q_part"]), final_maxpool=True),
            q_front=Mlp.from_spec(meta["q_front"]),
            q_tail=Mlp.from_spec(meta["q_tail"]),
            tau=float(meta["tau"]),
        )


# -- mesh extraction ---------------------------------------------------------


def extract_mesh(
    occupancy_fn,
    bounds_lo: np.ndarray,
    bounds_hi: np.ndarray,
    resolution: int = 64,
    level: float = 0.5,
    chunk: int = 65536,
) -> TriMesh:
    """Marching cubes over an occupancy function sampled on a regular grid."""
    lo = np.asarray(bounds_lo, dtype=np.float64)
    hi = np.asarray(bounds_hi, dtype=np.float64)
    xs = [np.linspace(lo[k], hi[k], resolution) for k in range(3)]
    grid = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1).reshape(-1, 3)
    vals = np.empty(len(grid))
    for start in range(0, len(grid), chunk):
        vals[start : start + chunk] = occupancy_fn(grid[start : start + chunk])
    field = vals.reshape(resolution, resolution, resolution)
    if field.min() >= level or field.max() <= level:
        raise InvalidArgumentError("occupancy never crosses the extraction level")
    spacing = [(hi[k] - lo[k]) / (resolution - 1) for k in range(3)]
    verts, faces, _, _ = measure.marching_cubes(field, level=level, spacing=spacing)
    return TriMesh(verts + lo, faces.astype(np.int64))


# -- ray-parity labels for watertight meshes --------------------------------


def mesh_occupancy_labels(mesh: TriMesh, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Inside labels by ray-crossing parity along +x (watertight oracle)."""
    p = np.asarray(points, dtype=np.float64)
    v = mesh.vertices
    f = mesh.faces
    a = v[f[:, 0]]
    e1 = v[f[:, 1]] - a
    e2 = v[f[:, 2]] - a
    # Moller-Trumbore with fixed direction (1, 0, 0).
    out = np.zeros(len(p), dtype=np.float64)
    d = np.array([1.0, 0.0, 0.0])
    pvec = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    for start in range(0, len(p), chunk):
        q = p[start : start + chunk]
        tvec = q[:, None, :] - a[None, :, :]
        u = np.einsum("nfj,fj->nf", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1[None, :, :])
        w = qvec[:, :, 0] * inv_det  # d . qvec with d = +x
        t = np.einsum("nfj,fj->nf", qvec, e2) * inv_det
        hits = ok[None, :] & (u >= 0) & (w >= 0) & (u + w <= 1) & (t > 1e-12)
        out[start : start + chunk] = hits.sum(axis=1) % 2
    return out
