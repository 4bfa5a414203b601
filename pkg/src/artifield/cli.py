"""Command-line interface.

Every subcommand takes a JSON config (--config), an output directory
(--out), and an optional --seed override.  Runs append JSONL records to
run.log inside the output directory.  On a recognized failure the last
line printed to stdout is ``ERROR <code>`` for machine consumption.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import datasets, metrics, pairof, plotting, selfield, synth, training
from . import autodiff as ad
from .camera import default_camera
from .config import RunConfig, load_config
from .errors import ArtifieldError, InvalidArgumentError, MissingArtifactError
from .imageio import save_pgm, save_ppm
from .kinematics import Pose, bone_transforms
from .mesh import save_obj, subdivide_midpoint
from .skinning_opt import (
    SkinningOptConfig,
    held_out_laplacian,
    nonzero_fraction,
    optimize_skinning,
)


def _common(fn):
    @click.option("--config", "config_path", required=True, type=click.Path(), help="JSON run config.")
    @click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
    @click.option("--seed", type=int, default=None, help="Override the config seed.")
    @click.option("--workers", type=int, default=1, show_default=True, help="Worker hint; computation is deterministic regardless.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        if kwargs.get("workers", 1) < 1:
            raise InvalidArgumentError("--workers must be at least 1")
        try:
            return fn(*args, **kwargs)
        except ArtifieldError as exc:
            click.echo(str(exc), err=True)
            click.echo(f"ERROR {exc.code}")
            sys.exit(1)

    return wrapper


def _setup(config_path, out_dir, seed) -> tuple[RunConfig, training.RunLogger]:
    cfg = load_config(config_path, seed_override=seed)
    os.makedirs(out_dir, exist_ok=True)
    logger = training.RunLogger(os.path.join(out_dir, "run.log"))
    return cfg, logger


def _load_template(template_dir):
    return datasets.load_template_dir(template_dir)


def _resolve_pose(pose_key, data_dir):
    spec = synth.CapsuleHandSpec.default()
    if pose_key == "flat":
        return synth.flat_pose()
    if pose_key == "fist":
        return synth.fist_pose(spec)
    try:
        index = int(pose_key)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"unknown pose {pose_key!r}") from exc
    if data_dir is None:
        raise MissingArtifactError("--data is required when the pose is a frame index")
    manifest, frames = datasets.load_frame_dataset(os.path.join(data_dir, "frames"))
    if not 0 <= index < len(frames):
        raise InvalidArgumentError(f"pose index {index} out of range")
    return frames[index].pose


@click.group()
def main():
    """Articulated occupancy and shading fields."""


@main.command("gen-data")
@_common
def gen_data(config_path, out_dir, seed, workers):
    """Generate the synthetic template, occupancy labels, and frames."""
    cfg, logger = _setup(config_path, out_dir, seed)
    spec = synth.CapsuleHandSpec.default()
    tpl = cfg.section("template")
    data = cfg.section("data")
    mesh, weights, tree, joints = synth.generate_template(spec, cell=tpl["cell"])
    datasets.write_template_artifacts(out_dir, mesh, weights, tree, joints)
    logger.log({"event": "template", "vertices": mesh.num_vertices, "faces": mesh.num_faces})
    datasets.make_label_dataset(
        os.path.join(out_dir, "labels.bin"),
        spec,
        data["num_poses"],
        data["queries_per_pose"],
        seed=cfg.seed,
    )
    logger.log({"event": "labels", "num_poses": data["num_poses"]})
    datasets.make_frame_dataset(
        os.path.join(out_dir, "frames"),
        spec,
        num_train=data["num_train"],
        num_val=data["num_val"],
        width=data["width"],
        height=data["height"],
        seed=cfg.seed,
        distance=data["distance"],
    )
    logger.log({"event": "frames", "train": data["num_train"], "val": data["num_val"]})
    logger.close()
    click.echo(f"wrote dataset to {out_dir}")


@main.command("optimize-skinning")
@click.option("--data", "data_dir", required=True, type=click.Path(), help="gen-data output directory.")
@_common
def optimize_skinning_cmd(config_path, out_dir, seed, workers, data_dir):
    """Subdivide the template and re-optimize its skinning weights."""
    cfg, logger = _setup(config_path, out_dir, seed)
    spec = synth.CapsuleHandSpec.default()
    mesh, weights, tree, joints = _load_template(data_dir)
    tpl = cfg.section("template")
    for _ in range(tpl["subdivision_levels"]):
        mesh, weights = subdivide_midpoint(mesh, weights)
    sk = cfg.section("skinning")
    poses = synth.sample_poses(spec, sk["num_poses"], seed=cfg.seed + 17)
    clouds = [
        synth.sample_surface(
            spec, synth.pose_transforms(spec, p), sk["targets_per_pose"], seed=cfg.seed + 31 + i
        )
        for i, p in enumerate(poses)
    ]
    opt_cfg = SkinningOptConfig(
        steps=sk["steps"],
        batch=sk["batch"],
        lr=sk["lr"],
        lr_decay=sk["lr_decay"],
        seed=cfg.seed,
        lambda_l0=sk["lambda_l0"],
        lambda_lap=sk["lambda_lap"],
        lambda_surf=sk["lambda_surf"],
        eta=sk["eta"],
    )
    result = optimize_skinning(mesh, weights, joints, tree, poses, clouds, opt_cfg, logger=logger)
    datasets.write_template_artifacts(out_dir, mesh, result.weights, tree, joints)
    plotting.plot_loss_curve(
        result.history, os.path.join(out_dir, "skinning_loss.png"), title="skinning optimization"
    )
    summary = {
        "event": "summary",
        "nonzero_fraction_before": nonzero_fraction(weights),
        "nonzero_fraction_after": nonzero_fraction(result.weights),
    }
    logger.log(summary)
    logger.close()
    click.echo(json.dumps({k: v for k, v in summary.items() if k != "event"}))


@main.command("pretrain-pairof")
@click.option("--data", "data_dir", required=True, type=click.Path(), help="gen-data output directory.")
@click.option("--template-dir", type=click.Path(), default=None, help="Template override (defaults to the data directory).")
@click.option("--resume", is_flag=True, help="Resume from the checkpoint in --out.")
@_common
def pretrain_pairof_cmd(config_path, out_dir, seed, workers, data_dir, template_dir, resume):
    """Pretrain the occupancy field on binary labels."""
    cfg, logger = _setup(config_path, out_dir, seed)
    mesh, weights, tree, joints = _load_template(template_dir or data_dir)
    poses, queries, labels = datasets.read_label_dataset(os.path.join(data_dir, "labels.bin"))
    pre = cfg.section("pretrain")
    ckpt = os.path.join(out_dir, "occupancy.ckpt")
    if resume:
        model, _, _ = training.load_pairof_checkpoint(ckpt)
    else:
        model = pairof.PairOF.create(tree, seed=cfg.seed)
    pcfg = training.PretrainConfig(
        steps=pre["steps"],
        batch=pre["batch"],
        lr=pre["lr"],
        lr_decay=pre["lr_decay"],
        seed=cfg.seed,
        checkpoint_every=pre["checkpoint_every"],
    )
    state = training.pretrain_pairof(
        model, mesh, weights, joints, poses, queries, labels, pcfg,
        logger=logger, checkpoint_path=ckpt, resume=resume,
    )
    plotting.plot_loss_curve(
        state.history, os.path.join(out_dir, "pretrain_loss.png"), title="occupancy pretraining"
    )
    logger.close()
    click.echo(f"checkpoint written to {ckpt}")


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(), help="gen-data output directory.")
@click.option("--occupancy", "occ_path", required=True, type=click.Path(), help="Pretrained occupancy checkpoint.")
@click.option("--template-dir", type=click.Path(), default=None, help="Template override (defaults to the data directory).")
@click.option("--resume", is_flag=True, help="Resume from the checkpoint in --out.")
@_common
def train_cmd(config_path, out_dir, seed, workers, data_dir, occ_path, template_dir, resume):
    """Train the shading field end to end on rendered frames."""
    cfg, logger = _setup(config_path, out_dir, seed)
    mesh, weights, tree, joints = _load_template(template_dir or data_dir)
    manifest, frames = datasets.load_frame_dataset(os.path.join(data_dir, "frames"))
    train_frames = [frames[i] for i in manifest["split"]["train"]]
    tr = cfg.section("train")
    ckpt = os.path.join(out_dir, "shading.ckpt")
    if resume:
        shading, model, _, _ = training.load_e2e_checkpoint(ckpt)
    else:
        model, _, _ = training.load_pairof_checkpoint(occ_path)
        shading = selfield.SelF.create(
            mesh,
            seed=cfg.seed,
            n_anchors=tr["n_anchors"],
            code_dim=tr["code_dim"],
            width=tr["width"],
        )
    ecfg = training.E2EConfig(
        steps=tr["steps"],
        patch=tr["patch"],
        n_samples=tr["n_samples"],
        lr=tr["lr"],
        lr_decay=tr["lr_decay"],
        seed=cfg.seed,
        ssim_weight=tr["ssim_weight"],
        mask_weight=tr["mask_weight"],
        decoder_lr_scale=tr["decoder_lr_scale"],
        checkpoint_every=tr["checkpoint_every"],
    )
    state = training.train_selfield(
        model, shading, mesh, weights, joints, train_frames, ecfg,
        logger=logger, checkpoint_path=ckpt, resume=resume,
    )
    plotting.plot_loss_curve(
        state.history, os.path.join(out_dir, "train_loss.png"), title="shading training"
    )
    logger.close()
    click.echo(f"checkpoint written to {ckpt}")


def _render_common(cfg, shading_path, template_dir, data_dir, edit_spec):
    shading, model, meta, _ = training.load_e2e_checkpoint(shading_path)
    mesh, weights, tree, joints = _load_template(template_dir)
    ren = cfg.section("render")
    pose = _resolve_pose(ren["pose"], data_dir)
    camera = default_camera(
        ren["width"],
        ren["height"],
        ren["distance"],
        np.array([0.0, 0.06, 0.0]),
        angle=ren["angle"],
        elevation=ren["elevation"],
    )
    transforms = bone_transforms(pose, joints, tree)
    band = pairof.part_rest_bounds(mesh, weights)
    result = selfield.render(
        model, shading, mesh, weights, transforms, pose, camera,
        ren["width"], ren["height"], n_samples=ren["n_samples"], band=band, edit=edit_spec,
    )
    return result, pose, camera, ren


def _write_render(out_dir, result, pose, camera, ren, edit_spec):
    save_ppm(os.path.join(out_dir, "rgb.ppm"), result.rgb)
    save_ppm(os.path.join(out_dir, "albedo.ppm"), result.albedo)
    save_pgm(os.path.join(out_dir, "alpha.pgm"), result.alpha)
    save_pgm(os.path.join(out_dir, "illum.pgm"), np.clip(result.illum, 0.0, 1.0))
    manifest = {
        "camera": camera.to_dict(),
        "pose": [float(x) for x in pose.theta.reshape(-1)],
        "n_samples": ren["n_samples"],
        "width": ren["width"],
        "height": ren["height"],
        "edit": {
            "illum_scale": edit_spec.illum_scale,
            "albedo_shift": list(edit_spec.albedo_shift),
            "zero_directed": edit_spec.zero_directed,
        },
    }
    with open(os.path.join(out_dir, "render.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


@main.command("render")
@click.option("--checkpoint", "shading_path", required=True, type=click.Path(), help="Trained shading checkpoint.")
@click.option("--template-dir", required=True, type=click.Path())
@click.option("--data", "data_dir", type=click.Path(), default=None, help="Needed when the configured pose is a frame index.")
@_common
def render_cmd(config_path, out_dir, seed, workers, shading_path, template_dir, data_dir):
    """Render the trained avatar from the configured viewpoint."""
    cfg, logger = _setup(config_path, out_dir, seed)
    edit_spec = selfield.EditSpec()
    result, pose, camera, ren = _render_common(cfg, shading_path, template_dir, data_dir, edit_spec)
    _write_render(out_dir, result, pose, camera, ren, edit_spec)
    logger.log({"event": "render", "width": ren["width"], "height": ren["height"]})
    logger.close()
    click.echo(f"render written to {out_dir}")


@main.command("edit")
@click.option("--checkpoint", "shading_path", required=True, type=click.Path(), help="Trained shading checkpoint.")
@click.option("--template-dir", required=True, type=click.Path())
@click.option("--data", "data_dir", type=click.Path(), default=None)
@_common
def edit_cmd(config_path, out_dir, seed, workers, shading_path, template_dir, data_dir):
    """Render with the configured appearance edits applied."""
    cfg, logger = _setup(config_path, out_dir, seed)
    ed = cfg.section("edit")
    edit_spec = selfield.EditSpec(
        illum_scale=float(ed["illum_scale"]),
        albedo_shift=tuple(float(x) for x in ed["albedo_shift"]),
        zero_directed=bool(ed["zero_directed"]),
    )
    result, pose, camera, ren = _render_common(cfg, shading_path, template_dir, data_dir, edit_spec)
    _write_render(out_dir, result, pose, camera, ren, edit_spec)
    logger.log({"event": "edit", "illum_scale": edit_spec.illum_scale})
    logger.close()
    click.echo(f"edited render written to {out_dir}")


@main.command("extract-mesh")
@click.option("--checkpoint", "occ_path", required=True, type=click.Path(), help="Occupancy checkpoint (pretrain or e2e).")
@click.option("--template-dir", required=True, type=click.Path())
@click.option("--data", "data_dir", type=click.Path(), default=None)
@_common
def extract_mesh_cmd(config_path, out_dir, seed, workers, occ_path, template_dir, data_dir):
    """Marching-cubes extraction of the learned occupancy at a pose."""
    cfg, logger = _setup(config_path, out_dir, seed)
    model = _load_any_occupancy(occ_path)
    mesh, weights, tree, joints = _load_template(template_dir)
    ext = cfg.section("extract")
    pose = _resolve_pose(ext["pose"], data_dir)
    transforms = bone_transforms(pose, joints, tree)
    samples = pairof.part_surface_samples(mesh, weights, transforms, seed=1234)
    band = pairof.part_rest_bounds(mesh, weights)
    with ad.no_grad():
        codes = model.codes(samples)

    def occ_fn(points):
        canon = pairof.canonicalize_points(transforms, points)
        with ad.no_grad():
            return model.occupancy(codes, canon, band=band).data

    from .skinning import lbs

    posed = lbs(mesh.vertices, weights, transforms)
    lo = posed.min(axis=0) - 0.02
    hi = posed.max(axis=0) + 0.02
    extracted = pairof.extract_mesh(occ_fn, lo, hi, resolution=ext["resolution"])
    save_obj(os.path.join(out_dir, "extracted.obj"), extracted)
    logger.log({"event": "extract", "vertices": extracted.num_vertices, "faces": extracted.num_faces})
    logger.close()
    click.echo(f"mesh written to {os.path.join(out_dir, 'extracted.obj')}")


def _load_any_occupancy(path):
    from .checkpoint import load_checkpoint

    meta, _ = load_checkpoint(path)
    if meta.get("kind") == "pairof-pretrain":
        model, _, _ = training.load_pairof_checkpoint(path)
        return model
    if meta.get("kind") == "self-e2e":
        _, model, _, _ = training.load_e2e_checkpoint(path)
        return model
    raise InvalidArgumentError(f"{path} holds no occupancy model")


@main.command("eval")
@click.option("--data", "data_dir", required=True, type=click.Path(), help="gen-data output directory.")
@click.option("--checkpoint", "shading_path", required=True, type=click.Path(), help="Trained shading checkpoint.")
@click.option("--template-dir", type=click.Path(), default=None)
@_common
def eval_cmd(config_path, out_dir, seed, workers, data_dir, shading_path, template_dir):
    """Evaluate field and image quality; write report.json, report.csv, figures."""
    cfg, logger = _setup(config_path, out_dir, seed)
    spec = synth.CapsuleHandSpec.default()
    shading, model, _, _ = training.load_e2e_checkpoint(shading_path)
    mesh, weights, tree, joints = _load_template(template_dir or data_dir)
    manifest, frames = datasets.load_frame_dataset(os.path.join(data_dir, "frames"))
    ev = cfg.section("eval")
    band = pairof.part_rest_bounds(mesh, weights)
    report = metrics.EvalReport()
    figures_dir = os.path.join(out_dir, "figures")
    os.makedirs(figures_dir, exist_ok=True)

    # Occupancy agreement with the analytic oracle at a fresh pose.
    pose = synth.sample_poses(spec, 1, seed=cfg.seed + 4242)[0]
    transforms = bone_transforms(pose, joints, tree)
    samples = pairof.part_surface_samples(mesh, weights, transforms, seed=1234)
    with ad.no_grad():
        codes = model.codes(samples)

    def learned_occ(points):
        canon = pairof.canonicalize_points(transforms, points)
        with ad.no_grad():
            return model.occupancy(codes, canon, band=band).data

    def oracle_occ(points):
        occ, _ = synth.analytic_occupancy(spec, transforms, points)
        return occ

    lo, hi = synth.hand_bounds(spec, margin=0.01)
    report.add("field_iou", metrics.field_iou(learned_occ, oracle_occ, lo, hi, ev["resolution"]))

    pairs = []
    psnrs = {"train": [], "val": []}
    for split in ("train", "val"):
        for i in manifest["split"][split][: ev["max_frames"]]:
            frame = frames[i]
            ftr = bone_transforms(frame.pose, joints, tree)
            result = selfield.render(
                model, shading, mesh, weights, ftr, frame.pose, frame.camera,
                manifest["width"], manifest["height"], n_samples=ev["n_samples"], band=band,
            )
            p = metrics.psnr(result.rgb, frame.rgb)
            s = metrics.ssim(result.rgb, frame.rgb)
            psnrs[split].append(p)
            report.add(f"psnr_{split}_{frame.frame_id}", p)
            report.add(f"ssim_{split}_{frame.frame_id}", s)
            if len(pairs) < 4:
                pairs.append((f"{split}:{frame.frame_id}", result.rgb, frame.rgb))
    for split, vals in psnrs.items():
        if vals:
            report.add(f"psnr_{split}_mean", float(np.mean(vals)))
    report.write_json(os.path.join(out_dir, "report.json"))
    report.write_csv(os.path.join(out_dir, "report.csv"))
    plotting.plot_metric_bars(report.metrics, os.path.join(figures_dir, "metrics.png"))
    plotting.plot_image_pairs(pairs, os.path.join(figures_dir, "renders.png"))
    logger.log({"event": "eval", **report.metrics})
    logger.close()
    click.echo(f"report written to {os.path.join(out_dir, 'report.json')}")


if __name__ == "__main__":
    main()
