"""On-disk datasets: occupancy label shards and rendered frame directories.

Label datasets are a single binary file (magic, JSON header, fixed-stride
records).  Frame datasets are a directory of PPM/PGM images indexed by a
JSON manifest that also carries poses, cameras, and the train/val split.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import imageio, synth
from .camera import PinholeCamera, default_camera
from .errors import InvalidArgumentError, MissingArtifactError
from .kinematics import Pose, save_rig
from .mesh import TriMesh, save_obj
from .synth import CapsuleHandSpec

LABEL_MAGIC = b"AFLBL1\n"


def write_label_dataset(path, poses: list[Pose], queries: np.ndarray, labels: np.ndarray):
    """queries: (P, N, 3), labels: (P, N) in {0, 1}."""
    queries = np.asarray(queries, dtype=np.float64)
    labels = np.asarray(labels)
    if queries.ndim != 3 or queries.shape[0] != len(poses):
        raise InvalidArgumentError("queries must be (num_poses, N, 3)")
    if labels.shape != queries.shape[:2]:
        raise InvalidArgumentError("labels must be (num_poses, N)")
    n = queries.shape[1]
    header = json.dumps(
        {"num_poses": len(poses), "queries_per_pose": n}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for i, pose in enumerate(poses):
            fh.write(pose.theta.astype("<f8").tobytes())
            fh.write(queries[i].astype("<f8").tobytes())
            fh.write((labels[i] > 0.5).astype(np.uint8).tobytes())


def read_label_dataset(path) -> tuple[list[Pose], np.ndarray, np.ndarray]:
    try:
        fh = open(path, "rb")
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"label dataset not found: {path}") from exc
    with fh:
        if fh.read(len(LABEL_MAGIC)) != LABEL_MAGIC:
            raise InvalidArgumentError(f"{path} is not a label dataset")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        p = int(header["num_poses"])
        n = int(header["queries_per_pose"])
        poses = []
        queries = np.empty((p, n, 3))
        labels = np.empty((p, n))
        for i in range(p):
            theta = np.frombuffer(fh.read(48 * 8), dtype="<f8").reshape(16, 3)
            poses.append(Pose(theta.copy()))
            queries[i] = np.frombuffer(fh.read(n * 3 * 8), dtype="<f8").reshape(n, 3)
            labels[i] = np.frombuffer(fh.read(n), dtype=np.uint8)
    return poses, queries, labels


def sample_occupancy_queries(
    spec: CapsuleHandSpec, pose: Pose, n: int, seed: int, near_frac: float = 0.6, near_sigma: float = 0.008
) -> tuple[np.ndarray, np.ndarray]:
    """Mixed near-surface and uniform queries with analytic labels.

    Near-surface queries keep the label boundary well represented; the
    uniform remainder anchors the empty space.
    """
    rng = np.random.default_rng(seed)
    transforms = synth.pose_transforms(spec, pose)
    lo, hi = synth.hand_bounds(spec, margin=0.025)
    n_near = int(round(n * near_frac))
    uniform = rng.uniform(lo, hi, size=(n - n_near, 3))
    # Seed points for the near-surface set: uniform points pulled to the
    # surface by the signed distance, then jittered.
    seeds = rng.uniform(lo, hi, size=(n_near, 3))
    for _ in range(3):
        sd = synth.hand_sdf(spec, transforms, seeds)
        grad = synth._sdf_normals(spec, transforms, seeds)
        seeds = seeds - sd[:, None] * grad
    near = seeds + rng.normal(0.0, near_sigma, size=seeds.shape)
    queries = np.concatenate([near, uniform])
    labels, _ = synth.analytic_occupancy(spec, transforms, queries)
    return queries, labels


def make_label_dataset(
    path, spec: CapsuleHandSpec, num_poses: int, queries_per_pose: int, seed: int
) -> tuple[list[Pose], np.ndarray, np.ndarray]:
    poses = synth.sample_poses(spec, num_poses, seed=seed)
    queries = np.empty((num_poses, queries_per_pose, 3))
    labels = np.empty((num_poses, queries_per_pose))
    for i, pose in enumerate(poses):
        queries[i], labels[i] = sample_occupancy_queries(
            spec, pose, queries_per_pose, seed=seed + 1 + i
        )
    write_label_dataset(path, poses, queries, labels)
    return poses, queries, labels


# -- frame datasets ----------------------------------------------------------


@dataclass
class Frame:
    """One rendered view: pose, camera, and ground-truth images."""

    frame_id: str
    pose: Pose
    camera: PinholeCamera
    rgb: np.ndarray
    mask: np.ndarray
    albedo: np.ndarray
    ao: np.ndarray


def write_frame_dataset(
    out_dir,
    spec: CapsuleHandSpec,
    poses: list[Pose],
    cameras: list[PinholeCamera],
    width: int,
    height: int,
    split: dict[str, list[int]],
):
    """Render every (pose, camera) pair and write images plus manifest."""
    if len(poses) != len(cameras):
        raise InvalidArgumentError("one camera per pose required")
    ids = set(i for v in split.values() for i in v)
    if ids != set(range(len(poses))):
        raise InvalidArgumentError("split must cover every frame exactly once")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, (pose, camera) in enumerate(zip(poses, cameras)):
        frame = synth.render_reference(spec, pose, camera, width, height)
        fid = f"frame_{i:04d}"
        imageio.save_ppm(os.path.join(out_dir, f"{fid}_rgb.ppm"), frame.rgb)
        imageio.save_ppm(os.path.join(out_dir, f"{fid}_albedo.ppm"), frame.albedo)
        imageio.save_pgm(os.path.join(out_dir, f"{fid}_mask.pgm"), frame.mask)
        imageio.save_pgm(os.path.join(out_dir, f"{fid}_ao.pgm"), frame.ao)
        entries.append(
            {
                "id": fid,
                "pose": [float(x) for x in pose.theta.reshape(-1)],
                "camera": camera.to_dict(),
            }
        )
    manifest = {
        "width": width,
        "height": height,
        "frames": entries,
        "split": {k: sorted(v) for k, v in split.items()},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_frame_dataset(dataset_dir) -> tuple[dict, list[Frame]]:
    manifest_path = os.path.join(dataset_dir, "manifest.json")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"no manifest at {manifest_path}") from exc
    frames = []
    for entry in manifest["frames"]:
        fid = entry["id"]
        frames.append(
            Frame(
                frame_id=fid,
                pose=Pose(np.array(entry["pose"]).reshape(16, 3)),
                camera=PinholeCamera.from_dict(entry["camera"]),
                rgb=imageio.load_ppm(os.path.join(dataset_dir, f"{fid}_rgb.ppm")),
                mask=imageio.load_pgm(os.path.join(dataset_dir, f"{fid}_mask.pgm")),
                albedo=imageio.load_ppm(os.path.join(dataset_dir, f"{fid}_albedo.ppm")),
                ao=imageio.load_pgm(os.path.join(dataset_dir, f"{fid}_ao.pgm")),
            )
        )
    return manifest, frames


def make_frame_dataset(
    out_dir,
    spec: CapsuleHandSpec,
    num_train: int,
    num_val: int,
    width: int,
    height: int,
    seed: int,
    distance: float = 0.38,
    include_fist_flat: bool = True,
):
    """Standard synthetic capture: random poses on an orbiting palm-side camera.

    The flat and fist canonical poses are prepended to the training split
    so downstream shading probes always have them available.
    """
    total = num_train + num_val
    poses = synth.sample_poses(spec, total, seed=seed)
    if include_fist_flat:
        poses = [synth.flat_pose(), synth.fist_pose(spec)] + poses[: total - 2]
    target = np.array([0.0, 0.06, 0.0])
    cameras = []
    rng = np.random.default_rng(seed + 101)
    for i in range(total):
        angle = rng.uniform(-0.7, 0.7)
        elevation = rng.uniform(0.1, 0.5)
        cameras.append(
            default_camera(width, height, distance, target, angle=angle, elevation=elevation)
        )
    split = {
        "train": list(range(num_train)),
        "val": list(range(num_train, total)),
    }
    write_frame_dataset(out_dir, spec, poses, cameras, width, height, split)


def write_template_artifacts(out_dir, mesh: TriMesh, weights: np.ndarray, tree, joints):
    os.makedirs(out_dir, exist_ok=True)
    save_obj(os.path.join(out_dir, "template.obj"), mesh)
    save_rig(os.path.join(out_dir, "rig.json"), joints, weights, tree)


def load_template_dir(path):
    """Read an OBJ + rig JSON pair; returns (mesh, weights, tree, joints).

    Any directory holding ``template.obj`` and ``rig.json`` in this layout
    works, so externally produced rigs can be dropped in unchanged.
    """
    from .kinematics import load_rig
    from .mesh import load_obj

    obj = os.path.join(path, "template.obj")
    rig = os.path.join(path, "rig.json")
    for p in (obj, rig):
        if not os.path.exists(p):
            raise MissingArtifactError(f"missing template artifact: {p}")
    mesh = load_obj(obj)
    joints, weights, tree = load_rig(rig)
    if weights.shape[0] != mesh.num_vertices:
        raise InvalidArgumentError("rig weights do not match the mesh vertex count")
    return mesh, weights, tree, joints
