"""Run configuration: one JSON file, schema-validated, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass

import jsonschema

from .errors import ConfigError

_NUM = {"type": "number"}
_INT = {"type": "integer", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "template": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cell": {"type": "number", "exclusiveMinimum": 0},
                "subdivision_levels": _INT,
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num_poses": _POS_INT,
                "queries_per_pose": _POS_INT,
                "num_train": _POS_INT,
                "num_val": _POS_INT,
                "width": _POS_INT,
                "height": _POS_INT,
                "distance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "skinning": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": _POS_INT,
                "batch": _POS_INT,
                "lr": _NUM,
                "lr_decay": _NUM,
                "lambda_l0": _NUM,
                "lambda_lap": _NUM,
                "lambda_surf": _NUM,
                "eta": _NUM,
                "num_poses": _POS_INT,
                "targets_per_pose": _POS_INT,
            },
        },
        "pretrain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": _POS_INT,
                "batch": _POS_INT,
                "lr": _NUM,
                "lr_decay": _NUM,
                "checkpoint_every": _POS_INT,
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": _POS_INT,
                "patch": _POS_INT,
                "n_samples": _POS_INT,
                "lr": _NUM,
                "lr_decay": _NUM,
                "ssim_weight": _NUM,
                "mask_weight": _NUM,
                "decoder_lr_scale": _NUM,
                "checkpoint_every": _POS_INT,
                "n_anchors": _POS_INT,
                "code_dim": _POS_INT,
                "width": _POS_INT,
            },
        },
        "render": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "width": _POS_INT,
                "height": _POS_INT,
                "n_samples": _POS_INT,
                "pose": {"type": ["string", "integer"]},
                "angle": _NUM,
                "elevation": _NUM,
                "distance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "extract": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resolution": _POS_INT,
                "pose": {"type": ["string", "integer"]},
            },
        },
        "edit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "illum_scale": _NUM,
                "albedo_shift": {
                    "type": "array",
                    "items": _NUM,
                    "minItems": 3,
                    "maxItems": 3,
                },
                "zero_directed": {"type": "boolean"},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resolution": _POS_INT,
                "n_samples": _POS_INT,
                "max_frames": _POS_INT,
            },
        },
    },
}

DEFAULTS = {
    "template": {"cell": 0.0045, "subdivision_levels": 1},
    "data": {
        "num_poses": 48,
        "queries_per_pose": 4096,
        "num_train": 8,
        "num_val": 2,
        "width": 128,
        "height": 128,
        "distance": 0.38,
    },
    "skinning": {
        "steps": 1500,
        "batch": 1024,
        "lr": 5e-3,
        "lr_decay": 0.1,
        "lambda_l0": 0.005,
        "lambda_lap": 2.0,
        "lambda_surf": 10.0,
        "eta": 100.0,
        "num_poses": 6,
        "targets_per_pose": 8192,
    },
    "pretrain": {
        "steps": 8000,
        "batch": 1024,
        "lr": 1e-3,
        "lr_decay": 0.05,
        "checkpoint_every": 2000,
    },
    "train": {
        "steps": 3000,
        "patch": 16,
        "n_samples": 24,
        "lr": 5e-4,
        "lr_decay": 0.1,
        "ssim_weight": 0.2,
        "mask_weight": 0.1,
        "decoder_lr_scale": 0.1,
        "checkpoint_every": 1000,
        "n_anchors": 1024,
        "code_dim": 32,
        "width": 64,
    },
    "render": {
        "width": 128,
        "height": 128,
        "n_samples": 24,
        "pose": "flat",
        "angle": 0.0,
        "elevation": 0.35,
        "distance": 0.38,
    },
    "extract": {"resolution": 64, "pose": "flat"},
    "edit": {"illum_scale": 1.0, "albedo_shift": [0.0, 0.0, 0.0], "zero_directed": False},
    "eval": {"resolution": 64, "n_samples": 24, "max_frames": 4},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with per-section default merging."""

    seed: int
    raw: dict

    def section(self, name: str) -> dict:
        merged = dict(DEFAULTS[name])
        merged.update(self.raw.get(name, {}))
        return merged


def load_config(path, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        path_str = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path_str}: {exc.message}") from exc
    seed = int(doc["seed"]) if seed_override is None else int(seed_override)
    return RunConfig(seed=seed, raw=doc)
