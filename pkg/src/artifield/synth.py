"""Procedural articulated hand: template mesh, rig, analytic oracle, shader.

A palm box plus fifteen finger capsules, rigged to the 16-part tree.  The
signed distance of the posed primitive union serves as the ground-truth
occupancy oracle, and a deterministic ray-marched shader produces training
frames whose shading carries pose-dependent self-occlusion (ambient
occlusion), the phenomenon the learned fields must reproduce.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .camera import PinholeCamera
from .errors import GenerationError, InvalidArgumentError
from .kinematics import (
    KinematicTree,
    Pose,
    BoneTransforms,
    bone_transforms,
    rodrigues,
)
from .mesh import TriMesh

NUM_FINGERS = 5
SEGMENTS_PER_FINGER = 3


@dataclass(frozen=True)
class CapsuleHandSpec:
    """Geometry of the synthetic hand; bone b=0 is the palm, 1..15 phalanges."""

    palm_center: np.ndarray
    palm_half_extents: np.ndarray
    palm_round: float
    finger_base: np.ndarray  # (5, 3)
    finger_dir: np.ndarray  # (5, 3), unit
    segment_lengths: np.ndarray  # (5, 3)
    segment_radii: np.ndarray  # (5, 3)
    palette: np.ndarray = field(default=None)  # (16, 3) albedo colors

    def __post_init__(self):
        if (np.asarray(self.segment_lengths) <= 0).any() or (
            np.asarray(self.segment_radii) <= 0
        ).any():
            raise InvalidArgumentError("segment lengths and radii must be positive")
        if self.palette is None:
            object.__setattr__(self, "palette", _default_palette())

    @classmethod
    def default(cls) -> "CapsuleHandSpec":
        bases = np.array(
            [
                [0.045, 0.030, 0.0],  # thumb
                [-0.036, 0.082, 0.0],
                [-0.012, 0.086, 0.0],
                [0.012, 0.086, 0.0],
                [0.036, 0.082, 0.0],
            ]
        )
        dirs = np.array(
            [
                [0.80, 0.60, 0.0],
                [-0.08, 1.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.08, 1.0, 0.0],
            ]
        )
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        lengths = np.array(
            [
                [0.030, 0.024, 0.020],
                [0.030, 0.020, 0.016],
                [0.034, 0.024, 0.018],
                [0.032, 0.022, 0.017],
                [0.026, 0.018, 0.015],
            ]
        )
        radii = np.array(
            [
                [0.0090, 0.0082, 0.0075],
                [0.0072, 0.0066, 0.0060],
                [0.0075, 0.0068, 0.0062],
                [0.0073, 0.0067, 0.0061],
                [0.0068, 0.0062, 0.0057],
            ]
        )
        return cls(
            palm_center=np.array([0.0, 0.042, 0.0]),
            palm_half_extents=np.array([0.040, 0.042, 0.011]),
            palm_round=0.005,
            finger_base=bases,
            finger_dir=dirs,
            segment_lengths=lengths,
            segment_radii=radii,
        )


def _default_palette() -> np.ndarray:
    base = np.array([0.78, 0.58, 0.48])
    rng = np.random.default_rng(7)
    pal = base[None, :] + rng.uniform(-0.16, 0.16, size=(16, 3))
    return np.clip(pal, 0.05, 0.95)


def bone_index(finger: int, segment: int) -> int:
    return 1 + SEGMENTS_PER_FINGER * finger + segment


def rest_joints(spec: CapsuleHandSpec) -> np.ndarray:
    """Absolute rest joint positions for the 16-part tree."""
    joints = np.zeros((16, 3))
    for f in range(NUM_FINGERS):
        pos = spec.finger_base[f].copy()
        for s in range(SEGMENTS_PER_FINGER):
            joints[bone_index(f, s)] = pos
            pos = pos + spec.finger_dir[f] * spec.segment_lengths[f, s]
    return joints


def core_segments(spec: CapsuleHandSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-bone core segment endpoints (16, 2, 3) and radii (16,)."""
    segs = np.zeros((16, 2, 3))
    radii = np.zeros(16)
    top = spec.palm_center + np.array([0.0, spec.palm_half_extents[1], 0.0])
    segs[0] = [np.zeros(3), top]
    radii[0] = spec.palm_half_extents[2]
    joints = rest_joints(spec)
    for f in range(NUM_FINGERS):
        for s in range(SEGMENTS_PER_FINGER):
            b = bone_index(f, s)
            a = joints[b]
            segs[b] = [a, a + spec.finger_dir[f] * spec.segment_lengths[f, s]]
            radii[b] = spec.segment_radii[f, s]
    return segs, radii


def check_spec(spec: CapsuleHandSpec, min_gap: float = 0.002):
    """Reject specs whose distinct fingers intersect beyond tolerance."""
    segs, radii = core_segments(spec)
    for f in range(NUM_FINGERS):
        for g in range(f + 1, NUM_FINGERS):
            for s in range(SEGMENTS_PER_FINGER):
                for t in range(SEGMENTS_PER_FINGER):
                    a = segs[bone_index(f, s)]
                    b = segs[bone_index(g, t)]
                    d = _segment_segment_distance(a[0], a[1], b[0], b[1])
                    clearance = d - radii[bone_index(f, s)] - radii[bone_index(g, t)]
                    if clearance < min_gap:
                        raise GenerationError(
                            f"fingers {f} and {g} overlap (clearance {clearance:.4f} m)"
                        )


def _segment_segment_distance(p1, q1, p2, q2) -> float:
    # Closest distance between two 3-d segments (standard clamped solve).
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    c = d1 @ r
    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0, 1) if denom > 1e-18 else 0.0
    t = (b * s + f) / e
    if t < 0:
        t = 0.0
        s = np.clip(-c / a, 0, 1)
    elif t > 1:
        t = 1.0
        s = np.clip((b - c) / a, 0, 1)
    return float(np.linalg.norm((p1 + s * d1) - (p2 + t * d2)))


# -- signed distances --------------------------------------------------------


def _capsule_sdf(p: np.ndarray, a: np.ndarray, b: np.ndarray, r: float) -> np.ndarray:
    pa = p - a
    ba = b - a
    h = np.clip((pa @ ba) / (ba @ ba), 0.0, 1.0)
    return np.linalg.norm(pa - h[:, None] * ba, axis=1) - r


def _rounded_box_sdf(p: np.ndarray, center: np.ndarray, half: np.ndarray, r: float) -> np.ndarray:
    q = np.abs(p - center) - (half - r)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside - r


def part_sdf_rest(spec: CapsuleHandSpec, b: int, points: np.ndarray) -> np.ndarray:
    """Rest-pose signed distance of the single primitive belonging to part b."""
    p = np.asarray(points, dtype=np.float64)
    if b == 0:
        return _rounded_box_sdf(p, spec.palm_center, spec.palm_half_extents, spec.palm_round)
    f, s = divmod(b - 1, SEGMENTS_PER_FINGER)
    a = rest_joints(spec)[b]
    end = a + spec.finger_dir[f] * spec.segment_lengths[f, s]
    return _capsule_sdf(p, a, end, spec.segment_radii[f, s])


def part_sdfs_rest(spec: CapsuleHandSpec, points: np.ndarray) -> np.ndarray:
    """(N, 16) rest-pose signed distances, one column per part."""
    p = np.asarray(points, dtype=np.float64)
    out = np.empty((len(p), 16))
    for b in range(16):
        out[:, b] = part_sdf_rest(spec, b, p)
    return out


def part_sdfs_posed(
    spec: CapsuleHandSpec, transforms: BoneTransforms, points: np.ndarray
) -> np.ndarray:
    """(N, 16) posed signed distances; each primitive rides its bone rigidly."""
    p = np.asarray(points, dtype=np.float64)
    rel = transforms.relative()
    out = np.empty((len(p), 16))
    for b in range(16):
        r = rel[b, :3, :3]
        t = rel[b, :3, 3]
        local = (p - t) @ r  # rigid inverse: R^T (p - t)
        out[:, b] = part_sdf_rest(spec, b, local)
    return out


def hand_sdf(spec: CapsuleHandSpec, transforms: BoneTransforms, points: np.ndarray) -> np.ndarray:
    return part_sdfs_posed(spec, transforms, points).min(axis=1)


def analytic_occupancy(
    spec: CapsuleHandSpec, transforms: BoneTransforms, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Hard inside labels {0,1} and the union signed distance."""
    sdf = hand_sdf(spec, transforms, points)
    return (sdf < 0.0).astype(np.float64), sdf


def hand_tree() -> KinematicTree:
    return KinematicTree.hand()


def hand_bounds(spec: CapsuleHandSpec, margin: float = 0.015) -> tuple[np.ndarray, np.ndarray]:
    segs, radii = core_segments(spec)
    lo = (segs.reshape(-1, 3) - radii.repeat(2)[:, None]).min(axis=0)
    hi = (segs.reshape(-1, 3) + radii.repeat(2)[:, None]).max(axis=0)
    lo = np.minimum(lo, spec.palm_center - spec.palm_half_extents)
    hi = np.maximum(hi, spec.palm_center + spec.palm_half_extents)
    return lo - margin, hi + margin


# -- template generation -----------------------------------------------------


def generate_template(
    spec: CapsuleHandSpec, cell: float = 0.0045
) -> tuple[TriMesh, np.ndarray, KinematicTree, np.ndarray]:
    """Triangulate the rest-pose union and rig it.

    Returns (mesh, skinning weights, tree, rest joints).  Weights use
    normalized inverse-square distance to the two nearest bone cores,
    capped at two nonzero entries, with a dominance shortcut that binds
    clearly interior vertices rigidly to their bone.
    """
    check_spec(spec)
    lo, hi = hand_bounds(spec)
    dims = np.maximum(np.ceil((hi - lo) / cell).astype(int) + 1, 8)
    xs = [np.linspace(lo[k], hi[k], dims[k]) for k in range(3)]
    grid = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1).reshape(-1, 3)
    sdf = part_sdfs_rest(spec, grid).min(axis=1).reshape(dims)
    spacing = [(hi[k] - lo[k]) / (dims[k] - 1) for k in range(3)]
    verts, faces, _, _ = measure.marching_cubes(sdf, level=0.0, spacing=spacing)
    verts = verts + lo
    mesh = TriMesh(verts, faces.astype(np.int64))
    # Consistent outward orientation: positive enclosed volume.
    vol = _signed_volume(mesh)
    if vol < 0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, [0, 2, 1]])
    weights = skinning_weights_for_points(spec, mesh.vertices)
    return mesh, weights, hand_tree(), rest_joints(spec)


def _signed_volume(mesh: TriMesh) -> float:
    v = mesh.vertices
    f = mesh.faces
    return float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)


def skinning_weights_for_points(
    spec: CapsuleHandSpec, points: np.ndarray, soften: float = 0.002, dominance: float = 3.0
) -> np.ndarray:
    """Two-bone inverse-square weights from radius-normalized core distances."""
    segs, radii = core_segments(spec)
    p = np.asarray(points, dtype=np.float64)
    rho = np.empty((len(p), 16))
    for b in range(16):
        a, c = segs[b]
        d = _capsule_sdf(p, a, c, 0.0)  # distance to the core segment
        rho[:, b] = d / radii[b]
    order = np.argsort(rho, axis=1)
    w = np.zeros_like(rho)
    i0 = order[:, 0]
    i1 = order[:, 1]
    r0 = rho[np.arange(len(p)), i0]
    r1 = rho[np.arange(len(p)), i1]
    dominant = r1 > dominance * r0
    inv0 = 1.0 / (r0 * np.array([radii[b] for b in i0]) + soften) ** 2
    inv1 = 1.0 / (r1 * np.array([radii[b] for b in i1]) + soften) ** 2
    total = inv0 + inv1
    rows = np.arange(len(p))
    w[rows, i0] = np.where(dominant, 1.0, inv0 / total)
    w[rows, i1] = np.where(dominant, 0.0, inv1 / total)
    return w


def sample_surface(
    spec: CapsuleHandSpec, transforms: BoneTransforms, n: int, seed: int
) -> np.ndarray:
    """Points on the posed union surface, area-weighted across primitives.

    Candidates are drawn on individual primitive surfaces and rejected when
    they fall inside another primitive, so only the visible union boundary
    remains.
    """
    rng = np.random.default_rng(seed)
    segs, radii = core_segments(spec)
    lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    areas = 2.0 * np.pi * radii * lengths + 4.0 * np.pi * radii**2
    areas[0] = 2.0 * (
        spec.palm_half_extents[0] * spec.palm_half_extents[1]
        + spec.palm_half_extents[1] * spec.palm_half_extents[2]
        + spec.palm_half_extents[0] * spec.palm_half_extents[2]
    ) * 4.0
    prob = areas / areas.sum()
    rel = transforms.relative()
    out = []
    needed = n
    while needed > 0:
        batch = max(needed * 2, 256)
        bones = rng.choice(16, size=batch, p=prob)
        pts = np.empty((batch, 3))
        for b in np.unique(bones):
            sel = bones == b
            k = int(sel.sum())
            if b == 0:
                pts[sel] = _sample_box_surface(spec, rng, k)
            else:
                pts[sel] = _sample_capsule_surface(segs[b], radii[b], rng, k)
            pts[sel] = pts[sel] @ rel[b, :3, :3].T + rel[b, :3, 3]
        sd = part_sdfs_posed(spec, transforms, pts)
        # A point on its own primitive has sdf ~ 0 there; points strictly
        # inside some primitive are interior to the union and dropped.
        keep = sd.min(axis=1) > -1e-4
        got = pts[keep]
        out.append(got[: min(len(got), needed)])
        needed = n - sum(len(o) for o in out)
    return np.concatenate(out)[:n]


def _sample_capsule_surface(seg: np.ndarray, r: float, rng, k: int) -> np.ndarray:
    a, b = seg
    axis = b - a
    length = np.linalg.norm(axis)
    axis = axis / length
    side = 2.0 * np.pi * r * length
    caps = 4.0 * np.pi * r * r
    on_side = rng.random(k) < side / (side + caps)
    # Orthonormal frame around the axis.
    up = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(axis, up)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(axis, t1)
    pts = np.empty((k, 3))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=k)
    ring = np.cos(phi)[:, None] * t1 + np.sin(phi)[:, None] * t2
    h = rng.uniform(0.0, length, size=k)
    pts[on_side] = a + h[on_side, None] * axis + r * ring[on_side]
    n_cap = int((~on_side).sum())
    if n_cap:
        d = rng.normal(size=(n_cap, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        along = d @ axis
        ends = np.where(along[:, None] >= 0, b, a)
        pts[~on_side] = ends + r * d
    return pts


def _sample_box_surface(spec: CapsuleHandSpec, rng, k: int) -> np.ndarray:
    he = spec.palm_half_extents
    face_areas = np.array([he[1] * he[2], he[1] * he[2], he[0] * he[2],
                           he[0] * he[2], he[0] * he[1], he[0] * he[1]])
    face = rng.choice(6, size=k, p=face_areas / face_areas.sum())
    uv = rng.uniform(-1.0, 1.0, size=(k, 2))
    pts = np.empty((k, 3))
    for f in range(6):
        sel = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [i for i in range(3) if i != axis]
        pts[sel, axis] = sign * he[axis]
        pts[sel, others[0]] = uv[sel, 0] * he[others[0]]
        pts[sel, others[1]] = uv[sel, 1] * he[others[1]]
    return pts + spec.palm_center


# -- canonical poses and pose sampling --------------------------------------


def flex_axis(spec: CapsuleHandSpec, finger: int) -> np.ndarray:
    """Rotation axis that curls the finger toward +z (palm side)."""
    d = spec.finger_dir[finger]
    axis = np.cross(d, np.array([0.0, 0.0, 1.0]))
    axis /= np.linalg.norm(axis)
    # Pick the sign that rotates the finger direction toward +z.
    rotated = rodrigues(axis * 0.5) @ d
    if rotated[2] < 0:
        axis = -axis
    return axis


def flat_pose() -> Pose:
    return Pose.zero()


def fist_pose(spec: CapsuleHandSpec | None = None, amount: float = 1.25) -> Pose:
    spec = spec or CapsuleHandSpec.default()
    theta = np.zeros((16, 3))
    per_segment = (1.15, 1.25, 0.85)
    for f in range(NUM_FINGERS):
        axis = flex_axis(spec, f)
        scale = 0.7 if f == 0 else 1.0  # thumb curls less
        for s in range(SEGMENTS_PER_FINGER):
            theta[bone_index(f, s)] = axis * (amount * scale * per_segment[s])
    return Pose(theta)


def sample_poses(
    spec: CapsuleHandSpec, n: int, seed: int, max_curl: float = 1.45, wrist: float = 0.25
) -> list[Pose]:
    """Deterministic random curls per finger plus a small wrist rotation."""
    rng = np.random.default_rng(seed)
    poses = []
    for _ in range(n):
        theta = np.zeros((16, 3))
        theta[0] = rng.uniform(-wrist, wrist, size=3)
        for f in range(NUM_FINGERS):
            axis = flex_axis(spec, f)
            curl = rng.uniform(0.0, max_curl)
            shares = rng.dirichlet(np.ones(3)) * 3.0 * curl / 3.0
            for s in range(SEGMENTS_PER_FINGER):
                jitter = rng.uniform(-0.05, 0.05, size=3)
                theta[bone_index(f, s)] = axis * shares[s] + jitter
        poses.append(Pose(theta))
    return poses


def pose_transforms(spec: CapsuleHandSpec, pose: Pose) -> BoneTransforms:
    return bone_transforms(pose, rest_joints(spec), hand_tree())


# -- reference shader --------------------------------------------------------

AO_DIRECTIONS = 32
AO_STEPS = 8
AO_RANGE = 0.05  # meters of march per direction
AO_SURFACE_OFFSET = 0.0015


def _hemisphere_dirs(n: int = AO_DIRECTIONS) -> np.ndarray:
    """Fixed Fibonacci hemisphere directions in the local (t, b, n) frame."""
    i = np.arange(n) + 0.5
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = i / n  # cos(theta) in (0, 1): upper hemisphere
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


_HEMI = _hemisphere_dirs()


def _sdf_normals(spec, transforms, points: np.ndarray, h: float = 5e-4) -> np.ndarray:
    grads = np.empty_like(points)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grads[:, k] = hand_sdf(spec, transforms, points + e) - hand_sdf(spec, transforms, points - e)
    n = np.linalg.norm(grads, axis=1, keepdims=True)
    return grads / np.where(n > 0, n, 1.0)


def _albedo_at(spec: CapsuleHandSpec, transforms, points: np.ndarray, blend: float = 0.005) -> np.ndarray:
    sd = part_sdfs_posed(spec, transforms, points)
    w = np.exp(-np.maximum(sd, 0.0) / blend)
    w /= w.sum(axis=1, keepdims=True)
    return w @ spec.palette


def ambient_occlusion(spec, transforms, points: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Fraction of the fixed hemisphere fan whose short march stays outside."""
    n = len(points)
    if n == 0:
        return np.zeros(0)
    # Build a tangent frame per point.
    up = np.where(np.abs(normals[:, 2:3]) < 0.9, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    t = np.cross(normals, up)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    b = np.cross(normals, t)
    dirs = (
        _HEMI[None, :, 0:1] * t[:, None, :]
        + _HEMI[None, :, 1:2] * b[:, None, :]
        + _HEMI[None, :, 2:3] * normals[:, None, :]
    )  # (N, D, 3)
    starts = points + AO_SURFACE_OFFSET * normals
    ts = (np.arange(AO_STEPS) + 1.0) * (AO_RANGE / AO_STEPS)
    samples = starts[:, None, None, :] + dirs[:, :, None, :] * ts[None, None, :, None]
    sd = hand_sdf(spec, transforms, samples.reshape(-1, 3)).reshape(n, AO_DIRECTIONS, AO_STEPS)
    occluded = (sd < 0.0).any(axis=2)
    return 1.0 - occluded.mean(axis=1)


@dataclass
class ReferenceFrame:
    pose: Pose
    camera: PinholeCamera
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray  # (H, W) in {0, 1}
    albedo: np.ndarray  # (H, W, 3)
    ao: np.ndarray  # (H, W)


def render_reference(
    spec: CapsuleHandSpec,
    pose: Pose,
    camera: PinholeCamera,
    width: int,
    height: int,
    max_steps: int = 64,
    hit_eps: float = 2e-4,
) -> ReferenceFrame:
    """Deterministic ray-marched ground truth with rgb = albedo * ao."""
    transforms = pose_transforms(spec, pose)
    origins, dirs = camera.rays(width, height)
    lo, hi = hand_bounds(spec, margin=0.08)
    t = np.full(len(dirs), 0.0)
    # Start at the bounding sphere to save steps.
    center = 0.5 * (lo + hi)
    radius = 0.5 * np.linalg.norm(hi - lo)
    oc = origins - center
    bq = np.einsum("ij,ij->i", oc, dirs)
    disc = bq * bq - (np.einsum("ij,ij->i", oc, oc) - radius * radius)
    may_hit = disc > 0
    t[may_hit] = np.maximum(-bq[may_hit] - np.sqrt(disc[may_hit]), 0.0)
    t_far = np.where(may_hit, -bq + np.sqrt(np.maximum(disc, 0.0)), 0.0)

    active = may_hit.copy()
    hit = np.zeros(len(dirs), dtype=bool)
    for _ in range(max_steps):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        p = origins[idx] + t[idx, None] * dirs[idx]
        sd = hand_sdf(spec, transforms, p)
        newly_hit = sd < hit_eps
        hit[idx[newly_hit]] = True
        active[idx[newly_hit]] = False
        t[idx] += np.maximum(sd, hit_eps * 0.5)
        overran = t > t_far + 1e-9
        active &= ~overran

    rgb = np.zeros((len(dirs), 3))
    albedo = np.zeros((len(dirs), 3))
    ao = np.zeros(len(dirs))
    if hit.any():
        idx = np.flatnonzero(hit)
        p = origins[idx] + t[idx, None] * dirs[idx]
        normals = _sdf_normals(spec, transforms, p)
        alb = _albedo_at(spec, transforms, p)
        occ = ambient_occlusion(spec, transforms, p, normals)
        albedo[idx] = alb
        ao[idx] = occ
        rgb[idx] = alb * occ[:, None]
    shape2 = (height, width)
    return ReferenceFrame(
        pose=pose,
        camera=camera,
        rgb=rgb.reshape(height, width, 3),
        mask=hit.reshape(shape2).astype(np.float64),
        albedo=albedo.reshape(height, width, 3),
        ao=ao.reshape(shape2),
    )
