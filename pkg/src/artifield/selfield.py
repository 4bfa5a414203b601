"""Self-occlusion-aware shading field over the articulated occupancy.

Albedo lives in a codebook pinned to barycentric surface anchors and is
interpolated by inverse-distance over the nearest anchors of the posed
template.  Illumination is a pose-conditioned MLP that additionally sees
per-part directed soft occupancy: the running maximum of each part's soft
occupancy along the camera ray, which tells the network what already
shadows a sample before the ray reaches it.  Pixels are composited with
multiplicative transmittance whose weights telescope exactly.
"""

from __future__ import annotations

from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import autodiff as ad
from . import pairof as pairof_mod
from .autodiff import Tensor
from .camera import PinholeCamera
from .encoding import encoding_width, positional_encoding
from .errors import InvalidArgumentError
from .kinematics import NUM_PARTS, BoneTransforms, Pose
from .mesh import TriMesh
from .nn import Mlp
from .sampling import BarycentricAnchors, resample_anchors, sample_barycentric
from .skinning import lbs

DEFAULT_ANCHORS = 4096
DEFAULT_CODE_DIM = 128
DEFAULT_NEIGHBORS = 4
COINCIDENCE_EPS = 1e-9
PE_LEVELS = 4
POSE_DIM = 48


@dataclass
class SelF:
    """Codebook plus the albedo and illumination heads."""

    anchors: BarycentricAnchors
    anchor_rest: np.ndarray  # (A, 3) rest-pose anchor positions
    anchor_pe: np.ndarray  # (A, E) frozen positional codes of anchor_rest
    codes: Tensor  # (A, D)
    mlp_albedo: Mlp
    mlp_illum: Mlp
    neighbors: int = DEFAULT_NEIGHBORS

    @classmethod
    def create(
        cls,
        rest_mesh: TriMesh,
        seed: int = 0,
        n_anchors: int = DEFAULT_ANCHORS,
        code_dim: int = DEFAULT_CODE_DIM,
        width: int = 128,
        neighbors: int = DEFAULT_NEIGHBORS,
    ) -> "SelF":
        rng = np.random.default_rng(seed)
        anchors = sample_barycentric(rest_mesh, n_anchors, seed)
        rest = resample_anchors(anchors, rest_mesh.vertices, rest_mesh.faces)
        pe = positional_encoding(rest * 10.0, PE_LEVELS)
        e = encoding_width(3, PE_LEVELS)
        codes = Tensor(rng.normal(0.0, 0.05, size=(n_anchors, code_dim)), requires_grad=True)
        mlp_albedo = Mlp.create([code_dim + e, width, 3], ["relu", "sigmoid"], rng)
        mlp_illum = Mlp.create(
            [POSE_DIM + e + NUM_PARTS, width, width, 1], ["relu", "relu", "softplus"], rng
        )
        return cls(
            anchors=anchors,
            anchor_rest=rest,
            anchor_pe=pe,
            codes=codes,
            mlp_albedo=mlp_albedo,
            mlp_illum=mlp_illum,
            neighbors=neighbors,
        )

    def parameters(self) -> dict[str, Tensor]:
        params = {"codes": self.codes}
        params.update(self.mlp_albedo.parameters("albedo"))
        params.update(self.mlp_illum.parameters("illum"))
        return params

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {k: t.data.copy() for k, t in self.parameters().items()}
        out["anchors.face_index"] = self.anchors.face_index.astype(np.float64)
        out["anchors.bary"] = self.anchors.bary.copy()
        out["anchors.rest"] = self.anchor_rest.copy()
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for k, t in self.parameters().items():
            if k not in arrays:
                raise InvalidArgumentError(f"missing parameter {k}")
            t.data[...] = arrays[k]

    def meta(self) -> dict:
        return {
            "neighbors": self.neighbors,
            "mlp_albedo": self.mlp_albedo.spec(),
            "mlp_illum": self.mlp_illum.spec(),
            "code_dim": int(self.codes.data.shape[1]),
            "n_anchors": int(self.codes.data.shape[0]),
        }

    @classmethod
    def from_state(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "SelF":
        anchors = BarycentricAnchors(
            face_index=arrays["anchors.face_index"].astype(np.int64),
            bary=arrays["anchors.bary"],
        )
        rest = arrays["anchors.rest"]
        model = cls(
            anchors=anchors,
            anchor_rest=rest,
            anchor_pe=positional_encoding(rest * 10.0, PE_LEVELS),
            codes=Tensor(np.array(arrays["codes"]), requires_grad=True),
            mlp_albedo=Mlp.from_spec(meta["mlp_albedo"]),
            mlp_illum=Mlp.from_spec(meta["mlp_illum"]),
            neighbors=int(meta["neighbors"]),
        )
        model.load_state_arrays(arrays)
        return model


@dataclass(frozen=True)
class EditSpec:
    """Post-hoc appearance edits applied inside the renderer.

    illum_scale multiplies the illumination head output; albedo_shift is
    added to the albedo before compositing; zero_directed feeds zeros in
    place of the directed occupancy inputs, switching self-shadowing off.
    """

    illum_scale: float = 1.0
    albedo_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)
    zero_directed: bool = False

    @property
    def is_identity(self) -> bool:
        return (
            self.illum_scale == 1.0
            and self.albedo_shift == (0.0, 0.0, 0.0)
            and not self.zero_directed
        )


def interpolate_anchor_features(
    model: SelF, points: np.ndarray, posed_anchors: np.ndarray
) -> tuple[Tensor, np.ndarray]:
    """Inverse-distance blend of anchor codes; returns (codes, frozen pe).

    A query that coincides with an anchor (distance below the coincidence
    epsilon) snaps to that anchor exactly instead of dividing by ~zero.
    """
    tree = cKDTree(posed_anchors)
    dist, idx = tree.query(points, k=model.neighbors)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    coincident = dist[:, 0] < COINCIDENCE_EPS
    inv = 1.0 / np.maximum(dist, COINCIDENCE_EPS)
    wgt = inv / inv.sum(axis=1, keepdims=True)
    wgt[coincident] = 0.0
    wgt[coincident, 0] = 1.0
    flat = ad.take(model.codes, idx.reshape(-1))
    n, k = idx.shape
    d = model.codes.data.shape[1]
    blended = ad.tsum(
        ad.reshape(flat, (n, k, d)) * Tensor(wgt[:, :, None]), axis=1
    )
    pe = np.einsum("nk,nke->ne", wgt, model.anchor_pe[idx])
    return blended, pe


def albedo_at(model: SelF, points: np.ndarray, posed_anchors: np.ndarray) -> Tensor:
    codes, pe = interpolate_anchor_features(model, points, posed_anchors)
    return model.mlp_albedo.forward(ad.concat([codes, Tensor(pe)], axis=1))


def directed_soft_occupancy(part_soft: Tensor) -> Tensor:
    """Running maximum along the sample axis of (R, S, B) soft occupancies.

    Sample index increases away from the camera, so entry (r, i, b) is the
    strongest occlusion part b has presented anywhere on ray r up to and
    including sample i.
    """
    if len(part_soft.shape) != 3:
        raise InvalidArgumentError("expected (rays, samples, parts)")
    return ad.cummax(part_soft, axis=1)


def illumination_at(
    model: SelF, theta: np.ndarray, pe: np.ndarray, directed: Tensor, edit: EditSpec
) -> Tensor:
    n = len(pe)
    pose_block = np.broadcast_to(theta.reshape(1, POSE_DIM), (n, POSE_DIM))
    if edit.zero_directed:
        directed = Tensor(np.zeros(directed.shape))
    inp = ad.concat([Tensor(np.concatenate([pose_block, pe], axis=1)), directed], axis=1)
    out = model.mlp_illum.forward(inp)
    if edit.illum_scale != 1.0:
        out = out * edit.illum_scale
    return out


def composite(alphas: Tensor, colors: Tensor, background: np.ndarray | None = None) -> Tensor:
    """Front-to-back compositing, (R, S) alphas and (R, S, 3) colors.

    Transmittance is accumulated multiplicatively, t_{i+1} = t_i (1 - a_i),
    and each weight is the difference of consecutive transmittances, so the
    partial weight sums telescope to 1 - t_{k+1} exactly in floating point.
    """
    r, s = alphas.shape
    one_minus = 1.0 - alphas
    # log-free cumulative product via repeated slicing would be quadratic;
    # accumulate in s steps instead.
    trans_cols = [Tensor(np.ones((r, 1)))]
    for i in range(s):
        cur = trans_cols[-1] * ad.take(one_minus, (slice(None), slice(i, i + 1)))
        trans_cols.append(cur)
    trans = ad.concat(trans_cols, axis=1)  # (R, S+1)
    weights = ad.take(trans, (slice(None), slice(0, s))) - ad.take(
        trans, (slice(None), slice(1, s + 1))
    )
    rgb = ad.tsum(ad.reshape(weights, (r, s, 1)) * colors, axis=1)
    residual = ad.take(trans, (slice(None), slice(s, s + 1)))
    if background is not None:
        rgb = rgb + residual * Tensor(np.asarray(background, dtype=np.float64).reshape(1, 3))
    return rgb, weights, residual


def transmittance_weights(alphas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Numpy twin of the compositing weights for oracles and fast paths."""
    r, s = alphas.shape
    trans = np.ones((r, s + 1))
    for i in range(s):
        trans[:, i + 1] = trans[:, i] * (1.0 - alphas[:, i])
    return trans[:, :s] - trans[:, 1:], trans[:, s]


def ray_box_range(
    origins: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Entry and exit distances of rays against an axis-aligned box."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (lo[None, :] - origins) / dirs
        t1 = (hi[None, :] - origins) / dirs
    tmin = np.minimum(t0, t1)
    tmax = np.maximum(t0, t1)
    near = np.nanmax(tmin, axis=1)
    far = np.nanmin(tmax, axis=1)
    near = np.maximum(near, 1e-4)
    hit = far > near
    return near, far, hit


@dataclass
class RenderResult:
    rgb: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W) accumulated opacity
    albedo: np.ndarray  # (H, W, 3) composited albedo only
    illum: np.ndarray  # (H, W) composited illumination only
    rgb_tensor: Tensor | None = None  # present when rendered differentiably
    alpha_tensor: Tensor | None = None


def render(
    occ_model: "pairof_mod.PairOF",
    shading: SelF,
    mesh: TriMesh,
    weights: np.ndarray,
    transforms: BoneTransforms,
    pose: Pose,
    camera: PinholeCamera,
    width: int,
    height: int,
    n_samples: int = 32,
    band=None,
    codes: Tensor | None = None,
    edit: EditSpec = EditSpec(),
    patch: tuple[int, int, int, int] | None = None,
    differentiable: bool = False,
    background=(0.0, 0.0, 0.0),
) -> RenderResult:
    """Volume-render the shading field through the occupancy field.

    ``patch`` is (row0, col0, rows, cols) and restricts rendering to that
    pixel rectangle; the returned images then have the patch shape.
    """
    posed = lbs(mesh.vertices, weights, transforms)
    if codes is None:
        samples = pairof_mod.part_surface_samples(mesh, weights, transforms, seed=1234)
        codes = occ_model.codes(samples)
    posed_anchors = resample_anchors(shading.anchors, posed, mesh.faces)

    origins, dirs = camera.rays(width, height)
    if patch is not None:
        row0, col0, ph, pw = patch
        if row0 < 0 or col0 < 0 or row0 + ph > height or col0 + pw > width:
            raise InvalidArgumentError("patch exceeds the image bounds")
        rr, cc = np.meshgrid(np.arange(row0, row0 + ph), np.arange(col0, col0 + pw), indexing="ij")
        sel = (rr * width + cc).reshape(-1)
        origins = origins[sel]
        dirs = dirs[sel]
        out_h, out_w = ph, pw
    else:
        out_h, out_w = height, width
    lo = posed.min(axis=0) - 0.01
    hi = posed.max(axis=0) + 0.01
    near, far, hit = ray_box_range(origins, dirs, lo, hi)

    n_rays = len(dirs)
    rgb = np.zeros((n_rays, 3))
    rgb[:] = np.asarray(background, dtype=np.float64)
    alpha_img = np.zeros(n_rays)
    albedo_img = np.zeros((n_rays, 3))
    illum_img = np.zeros(n_rays)
    rgb_t = None
    alpha_t = None

    ridx = np.flatnonzero(hit)
    if len(ridx) > 0:
        r = len(ridx)
        s = n_samples
        frac = (np.arange(s) + 0.5) / s
        ts = near[ridx, None] + (far[ridx] - near[ridx])[:, None] * frac[None, :]
        pts = origins[ridx, None, :] + dirs[ridx, None, :] * ts[:, :, None]
        flat = pts.reshape(-1, 3)
        canon = pairof_mod.canonicalize_points(transforms, flat)
        with ad.no_grad() if not differentiable else nullcontext():
            logits = occ_model.part_logits(codes, canon, band=band)  # (r*s, B)
            soft = ad.sigmoid(logits * occ_model.tau)
            soft3 = ad.reshape(soft, (r, s, NUM_PARTS))
            alphas = ad.reshape(ad.tmax(soft3, axis=2), (r, s))
            directed = directed_soft_occupancy(soft3)
            blended, pe = interpolate_anchor_features(shading, flat, posed_anchors)
            alb = shading.mlp_albedo.forward(ad.concat([blended, Tensor(pe)], axis=1))
            if edit.albedo_shift != (0.0, 0.0, 0.0):
                alb = ad.clip(
                    alb + Tensor(np.asarray(edit.albedo_shift).reshape(1, 3)), 0.0, 1.0
                )
            ill = illumination_at(
                shading,
                pose.theta.reshape(-1),
                pe,
                ad.reshape(directed, (r * s, NUM_PARTS)),
                edit,
            )
            colors = ad.reshape(alb * ill, (r, s, 3))
            pix, w_t, residual = composite(alphas, colors, background=background)
            alb_pix, _, _ = composite(alphas, ad.reshape(alb, (r, s, 3)))
            ill3 = ad.concat([ill, ill, ill], axis=1)
            ill_pix, _, _ = composite(alphas, ad.reshape(ill3, (r, s, 3)))
        rgb[ridx] = pix.data
        alpha_img[ridx] = 1.0 - residual.data[:, 0]
        albedo_img[ridx] = alb_pix.data
        illum_img[ridx] = ill_pix.data[:, 0]
        if differentiable:
            rgb_t = _scatter_pixels(pix, ridx, n_rays, background)
            alpha_t = ad.scatter_rows(1.0 - residual, ridx, n_rays)

    return RenderResult(
        rgb=rgb.reshape(out_h, out_w, 3),
        alpha=alpha_img.reshape(out_h, out_w),
        albedo=albedo_img.reshape(out_h, out_w, 3),
        illum=illum_img.reshape(out_h, out_w),
        rgb_tensor=rgb_t,
        alpha_tensor=alpha_t,
    )


def _scatter_pixels(pix: Tensor, ridx: np.ndarray, n: int, background) -> Tensor:
    base = np.zeros((n, 3))
    base[:] = np.asarray(background, dtype=np.float64)
    scattered = ad.scatter_rows(pix - Tensor(base[ridx]), ridx, n)
    return scattered + Tensor(base)
