"""Pinhole camera: projection, ray generation, manifest (de)serialization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class PinholeCamera:
    """Intrinsics plus a 4x4 world-to-camera extrinsic (camera looks down +z)."""

    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.extrinsic, dtype=np.float64)
        if e.shape != (4, 4):
            raise InvalidArgumentError("extrinsic must be 4x4")
        if not np.isfinite(e).all() or self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("invalid camera parameters")
        object.__setattr__(self, "extrinsic", e)

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsic[:3, 3]

    @property
    def position(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates and camera-space depth for (N, 3) world points."""
        cam = self.to_camera(points)
        z = cam[:, 2]
        u = self.fx * cam[:, 0] / z + self.cx
        v = self.fy * cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    def rays(self, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel world-space ray origins and unit directions.

        Row-major pixel order; directions pass through pixel centers.
        """
        j, i = np.meshgrid(np.arange(width), np.arange(height))
        x = (j.reshape(-1) + 0.5 - self.cx) / self.fx
        y = (i.reshape(-1) + 0.5 - self.cy) / self.fy
        dirs_cam = np.stack([x, y, np.ones_like(x)], axis=1)
        dirs = dirs_cam @ self.rotation
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(self.position, dirs.shape).copy()
        return origins, dirs

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "extrinsic": [[float(x) for x in row] for row in self.extrinsic],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PinholeCamera":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            extrinsic=np.array(d["extrinsic"], dtype=np.float64),
        )


def look_at(
    eye: np.ndarray, target: np.ndarray, up=(0.0, 1.0, 0.0)
) -> np.ndarray:
    """World-to-camera extrinsic with +z pointing from eye to target."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-12:
        up = np.array([1.0, 0.0, 0.0])
        right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd])
    e = np.eye(4)
    e[:3, :3] = r
    e[:3, 3] = -r @ eye
    return e


def default_camera(width: int, height: int, distance: float, target: np.ndarray, angle: float = 0.0, elevation: float = 0.35) -> PinholeCamera:
    """Camera orbiting ``target`` at the given distance, looking at it."""
    target = np.asarray(target, dtype=np.float64)
    eye = target + distance * np.array(
        [np.sin(angle) * np.cos(elevation), np.sin(elevation), np.cos(angle) * np.cos(elevation)]
    )
    f = 1.2 * max(width, height)
    return PinholeCamera(
        fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, extrinsic=look_at(eye, target)
    )
