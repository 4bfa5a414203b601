"""Training loops: occupancy pretraining and end-to-end shading.

All stochastic choices inside a loop derive from ``default_rng((seed, step))``
so a run is a pure function of (config, seed, step range); resuming from a
checkpoint replays the exact remaining steps bit for bit.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import pairof as pairof_mod
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InvalidArgumentError, TrainingError
from .kinematics import Pose
from .mesh import TriMesh
from .optim import Adam, ExponentialDecay


class RunLogger:
    """JSONL event log; one object per line, flushed eagerly."""

    def __init__(self, path=None, echo_every: int = 0):
        self._fh = open(path, "a") if path else None
        self._echo = echo_every if echo_every > 0 else int(
            os.environ.get("ARTIFIELD_LOG", "0") or 0
        )

    def log(self, event: dict):
        record = {"time": time.time(), **event}
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()
        step = event.get("step")
        if self._echo and step is not None and step % self._echo == 0:
            print(json.dumps(record, sort_keys=True), flush=True)

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


@dataclass
class PretrainConfig:
    steps: int = 4000
    batch: int = 512
    lr: float = 5e-4
    lr_decay: float = 0.1
    seed: int = 0
    part_sample_seed: int = 1234
    checkpoint_every: int = 1000
    log_every: int = 50


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng((seed, step))


@dataclass
class PretrainState:
    model: "pairof_mod.PairOF"
    optimizer: Adam
    step: int = 0
    history: list = field(default_factory=list)


def pretrain_pairof(
    model,
    mesh: TriMesh,
    weights: np.ndarray,
    joints: np.ndarray,
    poses: list[Pose],
    queries: np.ndarray,
    labels: np.ndarray,
    cfg: PretrainConfig,
    logger: RunLogger | None = None,
    checkpoint_path=None,
    resume: bool = False,
) -> PretrainState:
    """MSE-fit the occupancy field to binary labels, one pose per step."""
    if len(poses) == 0:
        raise InvalidArgumentError("need at least one training pose")
    logger = logger or RunLogger()
    params = model.parameters()
    schedule = ExponentialDecay(cfg.lr, cfg.lr_decay, cfg.steps)
    opt = Adam(params, schedule)
    state = PretrainState(model=model, optimizer=opt)

    if resume:
        meta, arrays = load_checkpoint(checkpoint_path)
        model.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("adam.")})
        state.step = int(meta["step"])
        opt.load_state_arrays(arrays, state.step)

    # Per-pose caches; these depend on the pose only, never the parameters.
    from .kinematics import bone_transforms

    lo, hi = pairof_mod.part_rest_bounds(mesh, weights)
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def pose_data(i: int) -> tuple[np.ndarray, np.ndarray]:
        if i not in cache:
            transforms = bone_transforms(poses[i], joints, model.tree)
            samples = pairof_mod.part_surface_samples(
                mesh, weights, transforms, seed=cfg.part_sample_seed + i
            )
            canon = pairof_mod.canonicalize_points(transforms, queries[i])
            cache[i] = (samples, canon)
        return cache[i]

    t0 = time.time()
    while state.step < cfg.steps:
        step = state.step
        rng = _step_rng(cfg.seed, step)
        i = int(rng.integers(0, len(poses)))
        samples, canon = pose_data(i)
        pick = rng.choice(queries.shape[1], size=min(cfg.batch, queries.shape[1]), replace=False)
        codes = model.codes(samples)
        occ = model.occupancy(codes, canon[:, pick], band=(lo, hi))
        target = Tensor(labels[i, pick])
        err = occ - target
        loss = ad.tmean(err * err)
        for t in params.values():
            t.grad = None
        loss.backward()
        opt.step()
        state.step = step + 1
        if step % cfg.log_every == 0 or state.step == cfg.steps:
            entry = {
                "phase": "pretrain",
                "step": step,
                "loss": float(loss.data),
                "lr": schedule.at(step),
                "elapsed": time.time() - t0,
            }
            state.history.append(entry)
            logger.log(entry)
        if checkpoint_path and cfg.checkpoint_every and (
            state.step % cfg.checkpoint_every == 0 or state.step == cfg.steps
        ):
            save_pretrain_checkpoint(checkpoint_path, model, opt, state.step, cfg)
    return state


def save_pretrain_checkpoint(path, model, opt: Adam, step: int, cfg: PretrainConfig):
    arrays = model.state_arrays()
    arrays.update(opt.state_arrays())
    meta = {"kind": "pairof-pretrain", "step": step, "model": model.meta(),
            "config": {"steps": cfg.steps, "batch": cfg.batch, "lr": cfg.lr,
                       "lr_decay": cfg.lr_decay, "seed": cfg.seed}}
    save_checkpoint(path, meta, arrays)


def load_pairof_checkpoint(path):
    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "pairof-pretrain":
        raise InvalidArgumentError(f"{path} is not an occupancy checkpoint")
    model = pairof_mod.PairOF.from_meta(meta["model"])
    model.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("adam.")})
    return model, meta, arrays


# -- end-to-end shading training --------------------------------------------


@dataclass
class E2EConfig:
    steps: int = 2500
    patch: int = 16
    n_samples: int = 24
    lr: float = 5e-4
    lr_decay: float = 0.1
    seed: int = 0
    ssim_weight: float = 0.2
    mask_weight: float = 0.1
    decoder_lr_scale: float = 0.1
    checkpoint_every: int = 500
    log_every: int = 50


@dataclass
class E2EState:
    shading: object
    occ_model: object
    optimizer: Adam
    step: int = 0
    history: list = field(default_factory=list)


def train_selfield(
    occ_model,
    shading,
    mesh: TriMesh,
    weights: np.ndarray,
    joints: np.ndarray,
    frames,
    cfg: E2EConfig,
    logger: RunLogger | None = None,
    checkpoint_path=None,
    resume: bool = False,
) -> E2EState:
    """Joint photometric training of the shading field and the pair decoder.

    The part encoder stays frozen so per-frame shape codes can be cached;
    the pair decoder trains at a reduced learning rate.  Each step renders
    one square patch centered on a random foreground pixel of one frame.
    """
    from . import selfield as selfield_mod
    from .kinematics import bone_transforms
    from .metrics import ssim_loss_term

    if len(frames) == 0:
        raise InvalidArgumentError("need at least one training frame")
    logger = logger or RunLogger()
    params = dict(shading.parameters())
    scales = {}
    for k, t in occ_model.parameters().items():
        if k.startswith("q_part"):
            continue
        params[k] = t
        scales[k] = cfg.decoder_lr_scale
    schedule = ExponentialDecay(cfg.lr, cfg.lr_decay, cfg.steps)
    opt = Adam(params, schedule, lr_scale=scales)
    state = E2EState(shading=shading, occ_model=occ_model, optimizer=opt)

    if resume:
        meta, arrays = load_checkpoint(checkpoint_path)
        shading.load_state_arrays({k: v for k, v in arrays.items() if k in params})
        occ_model.load_state_arrays(
            {k: v for k, v in arrays.items() if k.startswith(("q_part", "q_front", "q_tail"))}
        )
        state.step = int(meta["step"])
        opt.load_state_arrays(arrays, state.step)

    band = pairof_mod.part_rest_bounds(mesh, weights)
    cache: dict[int, tuple] = {}

    def frame_data(i: int):
        if i not in cache:
            frame = frames[i]
            transforms = bone_transforms(frame.pose, joints, occ_model.tree)
            samples = pairof_mod.part_surface_samples(mesh, weights, transforms, seed=1234)
            with ad.no_grad():
                codes = occ_model.codes(samples)
            fg = np.argwhere(frame.mask > 0.5)
            cache[i] = (transforms, Tensor(codes.data.copy()), fg)
        return cache[i]

    t0 = time.time()
    while state.step < cfg.steps:
        step = state.step
        rng = _step_rng(cfg.seed, step)
        i = int(rng.integers(0, len(frames)))
        frame = frames[i]
        transforms, codes, fg = frame_data(i)
        h, w = frame.mask.shape
        if len(fg) == 0:
            center = np.array([h // 2, w // 2])
        else:
            center = fg[int(rng.integers(0, len(fg)))]
        p = cfg.patch
        row0 = int(np.clip(center[0] - p // 2, 0, h - p))
        col0 = int(np.clip(center[1] - p // 2, 0, w - p))
        result = selfield_mod.render(
            occ_model,
            shading,
            mesh,
            weights,
            transforms,
            frame.pose,
            frame.camera,
            w,
            h,
            n_samples=cfg.n_samples,
            band=band,
            codes=codes,
            patch=(row0, col0, p, p),
            differentiable=True,
        )
        gt = frame.rgb[row0 : row0 + p, col0 : col0 + p].reshape(-1, 3)
        gt_mask = frame.mask[row0 : row0 + p, col0 : col0 + p].reshape(-1, 1)
        pred = result.rgb_tensor
        if pred is None:
            # Patch missed the bounding box entirely; skip the step cheaply.
            state.step = step + 1
            continue
        l1 = ad.tmean(ad.absolute(pred - Tensor(gt)))
        loss = l1
        if cfg.ssim_weight > 0.0:
            img = ad.reshape(pred, (p, p, 3))
            loss = loss + ssim_loss_term(img, gt.reshape(p, p, 3)) * cfg.ssim_weight
        if cfg.mask_weight > 0.0 and result.alpha_tensor is not None:
            loss = loss + ad.tmean(ad.absolute(result.alpha_tensor - Tensor(gt_mask))) * cfg.mask_weight
        for t in params.values():
            t.grad = None
        loss.backward()
        opt.step()
        state.step = step + 1
        if step % cfg.log_every == 0 or state.step == cfg.steps:
            entry = {
                "phase": "e2e",
                "step": step,
                "loss": float(loss.data),
                "l1": float(l1.data),
                "lr": schedule.at(step),
                "elapsed": time.time() - t0,
            }
            state.history.append(entry)
            logger.log(entry)
        if checkpoint_path and cfg.checkpoint_every and (
            state.step % cfg.checkpoint_every == 0 or state.step == cfg.steps
        ):
            save_e2e_checkpoint(checkpoint_path, shading, occ_model, opt, state.step, cfg)
    return state


def save_e2e_checkpoint(path, shading, occ_model, opt: Adam, step: int, cfg: E2EConfig):
    arrays = shading.state_arrays()
    arrays.update(occ_model.state_arrays())
    arrays.update(opt.state_arrays())
    meta = {
        "kind": "self-e2e",
        "step": step,
        "shading": shading.meta(),
        "occupancy": occ_model.meta(),
        "config": {
            "steps": cfg.steps,
            "patch": cfg.patch,
            "n_samples": cfg.n_samples,
            "lr": cfg.lr,
            "lr_decay": cfg.lr_decay,
            "seed": cfg.seed,
            "ssim_weight": cfg.ssim_weight,
            "mask_weight": cfg.mask_weight,
            "decoder_lr_scale": cfg.decoder_lr_scale,
        },
    }
    save_checkpoint(path, meta, arrays)


def load_e2e_checkpoint(path):
    from . import selfield as selfield_mod

    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "self-e2e":
        raise InvalidArgumentError(f"{path} is not a shading checkpoint")
    occ_model = pairof_mod.PairOF.from_meta(meta["occupancy"])
    occ_model.load_state_arrays(
        {k: v for k, v in arrays.items() if k.startswith(("q_part", "q_front", "q_tail"))}
    )
    shading = selfield_mod.SelF.from_state(meta["shading"], arrays)
    return shading, occ_model, meta, arrays
