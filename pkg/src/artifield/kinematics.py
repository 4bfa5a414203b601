"""Kinematic tree, axis-angle poses, and per-bone rigid transforms."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

NUM_PARTS = 16  # wrist + 3 phalanges x 5 fingers
ROOT_SENTINEL = -1


def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Rotation matrix from an axis-angle 3-vector.

    The rotation angle is the vector norm and the axis its direction;
    the zero vector maps to the identity.
    """
    v = np.asarray(axis_angle, dtype=np.float64)
    if v.shape != (3,):
        raise InvalidArgumentError(f"axis-angle must be a 3-vector, got {v.shape}")
    if not np.isfinite(v).all():
        raise InvalidArgumentError("non-finite axis-angle input")
    theta = np.linalg.norm(v)
    if theta < 1e-300:
        return np.eye(3)
    k = v / theta
    kx = np.array(
        [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]
    )
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def canonicalize_axis_angle(theta: np.ndarray) -> np.ndarray:
    """Wrap rotation magnitudes into (-pi, pi] so rodrigues stays well-conditioned."""
    theta = np.asarray(theta, dtype=np.float64)
    out = theta.copy()
    mags = np.linalg.norm(out.reshape(-1, 3), axis=1)
    flat = out.reshape(-1, 3)
    for i, m in enumerate(mags):
        if m > np.pi:
            wrapped = np.mod(m + np.pi, 2.0 * np.pi) - np.pi
            flat[i] *= wrapped / m
    return out


@dataclass(frozen=True)
class Pose:
    """Axis-angle joint rotations, one 3-vector per part (radians)."""

    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=np.float64)
        if t.shape != (NUM_PARTS, 3):
            raise InvalidArgumentError(f"pose must be ({NUM_PARTS}, 3), got {t.shape}")
        if not np.isfinite(t).all():
            raise InvalidArgumentError("non-finite pose")
        object.__setattr__(self, "theta", canonicalize_axis_angle(t))

    @classmethod
    def zero(cls) -> "Pose":
        return cls(np.zeros((NUM_PARTS, 3)))

    def flat(self) -> np.ndarray:
        return self.theta.reshape(-1)


@dataclass(frozen=True)
class KinematicTree:
    """Parent array plus the set of locally paired parts.

    Part 0 is the wrist/root.  Local pairs default to (and must be a subset
    of) the parent-child edges of the tree.
    """

    parent: np.ndarray
    local_pairs: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        p = np.asarray(self.parent, dtype=np.int64)
        if p.ndim != 1 or len(p) < 1:
            raise InvalidArgumentError("parent must be a 1-d array")
        if p[0] != ROOT_SENTINEL or (p[1:] == ROOT_SENTINEL).any():
            raise InvalidArgumentError("exactly part 0 must be the root")
        # Acyclic and connected to the root: walking up must terminate at 0.
        for b in range(len(p)):
            seen = set()
            j = b
            while j != 0:
                if j in seen or not (0 <= j < len(p)):
                    raise InvalidArgumentError(f"kinematic tree has a cycle at part {b}")
                seen.add(j)
                j = int(p[j])
        object.__setattr__(self, "parent", p)
        edges = {(int(p[b]), b) for b in range(1, len(p))}
        pairs = self.local_pairs or tuple(sorted(edges))
        norm = tuple(sorted(tuple(sorted(pp)) for pp in pairs))
        for a, b in norm:
            if (a, b) not in edges and (b, a) not in edges:
                raise InvalidArgumentError(
                    f"local pair ({a}, {b}) is not a parent-child edge"
                )
        missing = edges - {tuple(pp) for pp in norm}
        if missing:
            raise InvalidArgumentError(f"local pairs must cover tree edges; missing {missing}")
        object.__setattr__(self, "local_pairs", norm)

    @property
    def num_parts(self) -> int:
        return len(self.parent)

    def chain(self, b: int) -> list[int]:
        """Root-to-b list of part indices."""
        out = [b]
        while b != 0:
            b = int(self.parent[b])
            out.append(b)
        return out[::-1]

    def pairs_of(self, b: int) -> list[int]:
        return [q if p == b else p for p, q in self.local_pairs if b in (p, q)]

    @classmethod
    def hand(cls) -> "KinematicTree":
        """Default 16-part hand: wrist root, five 3-bone finger chains."""
        parent = [ROOT_SENTINEL]
        for f in range(5):
            base = 1 + 3 * f
            parent += [0, base, base + 1]
        return cls(np.array(parent))


@dataclass(frozen=True)
class BoneTransforms:
    """Posed bone transforms ``G`` plus their rest-pose inverses."""

    G: np.ndarray  # (B, 4, 4)
    G_rest_inv: np.ndarray  # (B, 4, 4)

    @property
    def R(self) -> np.ndarray:
        return self.G[:, :3, :3]

    @property
    def num_parts(self) -> int:
        return len(self.G)

    def relative(self) -> np.ndarray:
        """Per-bone rest-to-posed maps G_b @ G_b(0)^-1, the LBS ingredients."""
        return self.G @ self.G_rest_inv


def _chain_product(theta: np.ndarray, rel_joints: np.ndarray, chain: list[int]) -> np.ndarray:
    g = np.eye(4)
    for j in chain:
        t = np.eye(4)
        t[:3, :3] = rodrigues(theta[j])
        t[:3, 3] = rel_joints[j]
        g = g @ t
    return g


def bone_transforms(pose: Pose, joints: np.ndarray, tree: KinematicTree) -> BoneTransforms:
    """Forward kinematics along the tree.

    ``joints`` are absolute rest joint positions; each chain factor uses the
    joint offset relative to its parent, so the zero pose yields pure
    translations by the accumulated offsets (i.e. the absolute joints).
    """
    joints = np.asarray(joints, dtype=np.float64)
    if joints.shape != (tree.num_parts, 3):
        raise InvalidArgumentError(
            f"joints must be ({tree.num_parts}, 3), got {joints.shape}"
        )
    rel = joints.copy()
    for b in range(1, tree.num_parts):
        rel[b] = joints[b] - joints[int(tree.parent[b])]

    B = tree.num_parts
    G = np.empty((B, 4, 4))
    G_rest = np.empty((B, 4, 4))
    # Build incrementally: G_b = G_parent(b) @ local factor.
    order = sorted(range(B), key=lambda b: len(tree.chain(b)))
    for b in order:
        loc = np.eye(4)
        loc[:3, :3] = rodrigues(pose.theta[b])
        loc[:3, 3] = rel[b]
        loc0 = np.eye(4)
        loc0[:3, 3] = rel[b]
        if b == 0:
            G[b] = loc
            G_rest[b] = loc0
        else:
            p = int(tree.parent[b])
            G[b] = G[p] @ loc
            G_rest[b] = G_rest[p] @ loc0
    G_rest_inv = np.linalg.inv(G_rest)
    return BoneTransforms(G=G, G_rest_inv=G_rest_inv)


def transform_points(mat4: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a homogeneous 4x4 to an (N, 3) point array."""
    return points @ mat4[:3, :3].T + mat4[:3, 3]


def rigid_inverse(mat4: np.ndarray) -> np.ndarray:
    r = mat4[:3, :3]
    t = mat4[:3, 3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ t
    return out


def save_rig(path, joints: np.ndarray, weights: np.ndarray, tree: KinematicTree):
    doc = {
        "parents": [int(x) for x in tree.parent],
        "joints": [[float(c) for c in j] for j in np.asarray(joints)],
        "weights": [[float(c) for c in row] for row in np.asarray(weights)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_rig(path) -> tuple[np.ndarray, np.ndarray, KinematicTree]:
    with open(path) as fh:
        doc = json.load(fh)
    tree = KinematicTree(np.array(doc["parents"], dtype=np.int64))
    joints = np.array(doc["joints"], dtype=np.float64)
    weights = np.array(doc["weights"], dtype=np.float64)
    return joints, weights, tree
