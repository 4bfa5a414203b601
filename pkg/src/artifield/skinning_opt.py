"""High-resolution skinning-weight optimization.

Subdividing the template multiplies its resolution but the averaged
weights it inherits are denser (more bones per vertex) and pose badly
near joints.  This module re-optimizes the weight matrix under three
energies: a sparsity proxy that counts effectively nonzero entries, a
uniform Laplacian that keeps weights smooth across the surface, and a
chamfer term that pulls the posed surface onto per-pose target scans.
Rows are re-projected onto the probability simplex after every step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError
from .kinematics import KinematicTree, Pose, bone_transforms
from .mesh import TriMesh
from .optim import Adam, ExponentialDecay
from .skinning import simplex_project_rows

ETA = 100.0
LAMBDA_L0 = 0.01
LAMBDA_LAP = 1.0
LAMBDA_SURF = 10.0
NONZERO_THRESHOLD = 1e-3


def l0_energy(w: Tensor, eta: float = ETA) -> Tensor:
    """Smooth count of nonzero entries, mean per row."""
    return ad.tmean(ad.tsum(1.0 - ad.exp(w * (-eta)), axis=1))


def nonzero_fraction(weights: np.ndarray, threshold: float = NONZERO_THRESHOLD) -> float:
    w = np.asarray(weights)
    return float((w > threshold).mean())


def _adjacency(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened neighbor lists: (src, dst, inverse degree of src)."""
    edges = mesh.edges()
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    deg = np.bincount(src, minlength=mesh.num_vertices).astype(np.float64)
    return src, dst, deg


def weight_laplacian_energy(
    w: Tensor, src: np.ndarray, dst: np.ndarray, deg: np.ndarray, rows: np.ndarray | None = None
) -> Tensor:
    """Mean over vertices of the squared deviation from neighbor weights."""
    if rows is not None:
        keep = np.isin(src, rows)
        src = src[keep]
        dst = dst[keep]
    diff = ad.take(w, src) - ad.take(w, dst)
    per_edge = ad.tsum(diff * diff, axis=1)
    scale = Tensor(1.0 / np.maximum(deg[src], 1.0))
    denom = len(rows) if rows is not None else len(deg)
    return ad.tsum(per_edge * scale) * (1.0 / max(denom, 1))


def posed_vertices(
    vertices: np.ndarray, w: Tensor, rel: np.ndarray, rows: np.ndarray | None = None
) -> Tensor:
    """Differentiable linear blend skinning in the weights.

    rel: (B, 4, 4) bone transforms relative to rest.  The per-vertex
    candidate positions under each bone are constant, so the blend is a
    batched matrix-vector product in the weight rows.
    """
    v = vertices if rows is None else vertices[rows]
    b = rel.shape[0]
    cand = np.einsum("bij,nj->nbi", rel[:, :3, :3], v) + rel[:, :3, 3][None, :, :]
    mats = cand.transpose(0, 2, 1)  # (n, 3, B)
    wr = w if rows is None else ad.take(w, rows)
    return ad.bmv(mats, wr)


def chamfer_to_targets(posed: Tensor, target_tree: cKDTree, targets: np.ndarray) -> Tensor:
    """One-sided squared chamfer; nearest targets fixed by a KD-tree query."""
    _, idx = target_tree.query(posed.data)
    diff = posed - Tensor(targets[idx])
    return ad.tmean(ad.tsum(diff * diff, axis=1))


@dataclass
class SkinningOptConfig:
    steps: int = 3000
    batch: int = 1024
    lr: float = 1e-3
    lr_decay: float = 0.1
    seed: int = 0
    lambda_l0: float = LAMBDA_L0
    lambda_lap: float = LAMBDA_LAP
    lambda_surf: float = LAMBDA_SURF
    eta: float = ETA
    log_every: int = 100


@dataclass
class SkinningOptResult:
    weights: np.ndarray
    history: list = field(default_factory=list)


def optimize_skinning(
    mesh: TriMesh,
    init_weights: np.ndarray,
    joints: np.ndarray,
    tree: KinematicTree,
    poses: list[Pose],
    target_clouds: list[np.ndarray],
    cfg: SkinningOptConfig,
    logger=None,
) -> SkinningOptResult:
    """Optimize weight rows; each step draws one pose and a vertex batch."""
    if len(poses) != len(target_clouds):
        raise InvalidArgumentError("one target cloud per pose required")
    if len(poses) == 0:
        raise InvalidArgumentError("need at least one pose")
    w = Tensor(np.array(init_weights, dtype=np.float64), requires_grad=True)
    params = {"weights": w}
    opt = Adam(params, ExponentialDecay(cfg.lr, cfg.lr_decay, cfg.steps))
    src, dst, deg = _adjacency(mesh)
    rels = [bone_transforms(p, joints, tree).relative() for p in poses]
    trees = [cKDTree(c) for c in target_clouds]
    history = []
    for step in range(cfg.steps):
        rng = np.random.default_rng((cfg.seed, step))
        i = int(rng.integers(0, len(poses)))
        rows = rng.choice(mesh.num_vertices, size=min(cfg.batch, mesh.num_vertices), replace=False)
        posed = posed_vertices(mesh.vertices, w, rels[i], rows)
        surf = chamfer_to_targets(posed, trees[i], target_clouds[i])
        lap = weight_laplacian_energy(w, src, dst, deg, rows)
        wb = ad.take(w, rows)
        sparse = l0_energy(wb, cfg.eta)
        loss = surf * cfg.lambda_surf + lap * cfg.lambda_lap + sparse * cfg.lambda_l0
        w.grad = None
        loss.backward()
        opt.step()
        w.data[...] = simplex_project_rows(w.data)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            entry = {
                "phase": "skinning",
                "step": step,
                "loss": float(loss.data),
                "surf": float(surf.data),
                "lap": float(lap.data),
                "l0": float(sparse.data),
            }
            history.append(entry)
            if logger is not None:
                logger.log(entry)
    return SkinningOptResult(weights=w.data.copy(), history=history)


def held_out_laplacian(
    mesh: TriMesh, weights: np.ndarray, joints: np.ndarray, tree: KinematicTree, poses: list[Pose]
) -> float:
    """Mean posed-surface Laplacian energy over evaluation poses."""
    from .energies import laplacian_energy
    from .skinning import lbs

    vals = []
    for pose in poses:
        transforms = bone_transforms(pose, joints, tree)
        posed = lbs(mesh.vertices, weights, transforms)
        vals.append(laplacian_energy(mesh.with_vertices(posed)))
    return float(np.mean(vals))


# -- pose augmentation and pose files ---------------------------------------


def augment_poses(poses: list[Pose], n_extra: int, seed: int) -> list[Pose]:
    """Enrich a pose set by finger-channel swaps and convex interpolation."""
    if len(poses) < 2:
        return list(poses)
    rng = np.random.default_rng(seed)
    out = list(poses)
    for _ in range(n_extra):
        a, b = rng.choice(len(poses), size=2, replace=False)
        ta = poses[a].theta.copy()
        tb = poses[b].theta
        if rng.random() < 0.5:
            finger = int(rng.integers(0, 5))
            lo = 1 + 3 * finger
            ta[lo : lo + 3] = tb[lo : lo + 3]
        else:
            t = rng.uniform(0.2, 0.8)
            ta = (1.0 - t) * ta + t * tb
        out.append(Pose(ta))
    return out


def save_poses(path, poses: list[Pose]):
    doc = {"poses": [[float(x) for x in p.theta.reshape(-1)] for p in poses]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_poses(path) -> list[Pose]:
    with open(path) as fh:
        doc = json.load(fh)
    return [Pose(np.array(row, dtype=np.float64).reshape(16, 3)) for row in doc["poses"]]


# -- vertex displacement refinement -----------------------------------------

DISPLACEMENT_CLAMP = 0.005


@dataclass
class ShapeRefineConfig:
    steps: int = 500
    lr: float = 2e-3
    seed: int = 0
    lambda_lap: float = 0.1
    clamp: float = DISPLACEMENT_CLAMP
    log_every: int = 50


def refine_shape(
    mesh: TriMesh,
    weights: np.ndarray,
    joints: np.ndarray,
    tree: KinematicTree,
    poses: list[Pose],
    target_clouds: list[np.ndarray],
    cfg: ShapeRefineConfig,
    logger=None,
) -> tuple[np.ndarray, list]:
    """Optimize a clamped per-vertex rest displacement against target scans."""
    disp = Tensor(np.zeros_like(mesh.vertices), requires_grad=True)
    opt = Adam({"disp": disp}, ExponentialDecay(cfg.lr, 0.1, cfg.steps))
    src, dst, deg = _adjacency(mesh)
    rels = [bone_transforms(p, joints, tree).relative() for p in poses]
    trees = [cKDTree(c) for c in target_clouds]
    wt = Tensor(np.asarray(weights, dtype=np.float64))
    history = []
    for step in range(cfg.steps):
        rng = np.random.default_rng((cfg.seed, step))
        i = int(rng.integers(0, len(poses)))
        clamped = ad.clip(disp, -cfg.clamp, cfg.clamp)
        rest = Tensor(mesh.vertices) + clamped
        b = rels[i].shape[0]
        # Skin the displaced rest shape: candidates depend on the variable,
        # so expand the blend explicitly per bone.
        posed = None
        for bone in range(b):
            r = rels[i][bone, :3, :3]
            t = rels[i][bone, :3, 3]
            cand = ad.matmul(rest, Tensor(r.T)) + Tensor(t)
            col = ad.take(wt, (slice(None), slice(bone, bone + 1)))
            term = cand * col
            posed = term if posed is None else posed + term
        surf = chamfer_to_targets(posed, trees[i], target_clouds[i])
        ddiff = ad.take(clamped, src) - ad.take(clamped, dst)
        lap = ad.tmean(ad.tsum(ddiff * ddiff, axis=1))
        loss = surf + lap * cfg.lambda_lap
        disp.grad = None
        loss.backward()
        opt.step()
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            entry = {"phase": "shape", "step": step, "loss": float(loss.data)}
            history.append(entry)
            if logger is not None:
                logger.log(entry)
    return np.clip(disp.data, -cfg.clamp, cfg.clamp), history
