"""Synthetic wireframe renderer: keypoint projection, visibility, alpha masks,
stereo disparity and descriptor feature maps.

Projection is weak-perspective: world points are rotated into the camera frame
and scaled so the model fills a fixed fraction of the image; depth is kept per
keypoint for visibility pruning. This preserves exactly the correspondence
structure the correlation machinery consumes while staying training-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

from .correlation import FeatureMap
from .template import TemplateModel
from .viewpoint import Viewpoint, apply_delta, ViewpointDelta, rotation_matrices, to_rotation

__all__ = [
    "Render",
    "DisparityMap",
    "NoiseSpec",
    "render",
    "stereo_disparity",
    "descriptor_map",
    "project_points",
    "project_points_batch",
    "downsample_mask",
]

DEFAULT_FILL = 0.8
DEFAULT_OCCLUSION_RADIUS = 3.0
DEFAULT_RHO = 3.0  # camera distance in model radii; only depth offsets depend on it
MIN_RESOLUTION = 8


@dataclass(frozen=True)
class Render:
    viewpoint: Viewpoint
    keypoints_2d: dict[int, tuple[float, float]]
    depths: dict[int, float]
    visibility: dict[int, bool]
    alpha: np.ndarray = field(repr=False)
    resolution: tuple[int, int]
    fill: float = DEFAULT_FILL

    def visible_ids(self) -> list[int]:
        return [i for i, v in self.visibility.items() if v]


@dataclass(frozen=True)
class DisparityMap:
    """Per-keypoint 2D displacement between a render and its stereo partner."""

    vectors: dict[int, tuple[float, float]]
    dense: np.ndarray = field(repr=False)  # (h, w, 2), splatted from keypoints
    shift: tuple[float, float, float] = (10.0, 10.0, 0.0)


@dataclass(frozen=True)
class NoiseSpec:
    """Descriptor corruption: additive Gaussian noise and keypoint dropout."""

    noise_std: float = 0.0
    dropout: float = 0.0
    seed: int = 0


def _projection_scale(model: TemplateModel, resolution: tuple[int, int], fill: float) -> float:
    h, w = resolution
    return fill * min(h, w) / 2.0 / model.radius


def project_points(
    model: TemplateModel,
    v: Viewpoint,
    resolution: tuple[int, int],
    fill: float = DEFAULT_FILL,
) -> tuple[np.ndarray, np.ndarray]:
    """Project all template keypoints; returns ((n, 2) pixel uv, (n,) depths)."""
    uv = project_points_batch(model, to_rotation(v)[None], resolution, fill)[0]
    q = (to_rotation(v) @ _centered(model).T).T
    depth = DEFAULT_RHO * model.radius - q[:, 2]
    return uv, depth


def project_points_batch(
    model: TemplateModel,
    rotations: np.ndarray,
    resolution: tuple[int, int],
    fill: float = DEFAULT_FILL,
) -> np.ndarray:
    """Project keypoints under a batch of rotations; returns (N, n, 2) pixels."""
    h, w = resolution
    s = _projection_scale(model, resolution, fill)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    q = np.einsum("nij,kj->nki", rotations, _centered(model))
    u = cx + s * q[..., 0]
    vpix = cy - s * q[..., 1]
    return np.stack([u, vpix], axis=-1)


def _centered(model: TemplateModel) -> np.ndarray:
    return model.keypoints_3d - model.keypoints_3d.mean(axis=0)


def render(
    model: TemplateModel,
    v: Viewpoint,
    resolution: tuple[int, int] = (64, 64),
    fill: float = DEFAULT_FILL,
    occlusion_radius: float = DEFAULT_OCCLUSION_RADIUS,
    dilate: int = 1,
) -> Render:
    """Render the template at a viewpoint: 2D keypoints, depths, visibility, alpha."""
    h, w = resolution
    if min(h, w) < MIN_RESOLUTION:
        raise ValueError(
            f"resolution {resolution} too small to contain the projected model "
            f"(need at least {MIN_RESOLUTION} pixels per side)"
        )
    uv, depth = project_points(model, v, resolution, fill)

    # depth-based pruning: a keypoint is hidden when a strictly nearer keypoint
    # projects within the occlusion radius
    n = model.n_keypoints
    margin = 1e-6 * model.radius
    d2 = np.sum((uv[:, None, :] - uv[None, :, :]) ** 2, axis=-1)
    occludes = (d2 <= occlusion_radius**2) & (depth[None, :] < depth[:, None] - margin)
    np.fill_diagonal(occludes, False)
    visible = ~occludes.any(axis=1)

    keypoints_2d = {kid: (float(uv[i, 0]), float(uv[i, 1])) for i, kid in enumerate(model.keypoint_ids)}
    depths = {kid: float(depth[i]) for i, kid in enumerate(model.keypoint_ids)}
    visibility = {kid: bool(visible[i]) for i, kid in enumerate(model.keypoint_ids)}

    alpha = _rasterize_alpha(model, keypoints_2d, visibility, resolution, dilate)
    return Render(
        viewpoint=v,
        keypoints_2d=keypoints_2d,
        depths=depths,
        visibility=visibility,
        alpha=alpha,
        resolution=resolution,
        fill=fill,
    )


def _rasterize_alpha(model, keypoints_2d, visibility, resolution, dilate) -> np.ndarray:
    h, w = resolution
    alpha = np.zeros((h, w), dtype=bool)
    samples = 2 * max(h, w)
    t = np.linspace(0.0, 1.0, samples)
    for a, b in model.skeleton_edges:
        if not (visibility[a] and visibility[b]):
            continue
        pa = np.array(keypoints_2d[a])
        pb = np.array(keypoints_2d[b])
        pts = pa[None, :] + t[:, None] * (pb - pa)[None, :]
        cols = np.clip(np.rint(pts[:, 0]).astype(int), 0, w - 1)
        rows = np.clip(np.rint(pts[:, 1]).astype(int), 0, h - 1)
        alpha[rows, cols] = True
    for kid, vis in visibility.items():
        if vis:
            u, vpix = keypoints_2d[kid]
            alpha[int(np.clip(round(vpix), 0, h - 1)), int(np.clip(round(u), 0, w - 1))] = True
    if dilate > 0:
        alpha = binary_dilation(alpha, iterations=dilate)
    alpha.setflags(write=False)
    return alpha


def stereo_disparity(
    model: TemplateModel,
    v: Viewpoint,
    resolution: tuple[int, int] = (64, 64),
    shift: tuple[float, float, float] = (10.0, 10.0, 0.0),
    fill: float = DEFAULT_FILL,
    occlusion_radius: float = DEFAULT_OCCLUSION_RADIUS,
) -> DisparityMap:
    """Keypoint displacements between render(v) and its stereo-shifted partner."""
    r1 = render(model, v, resolution, fill, occlusion_radius)
    r2 = render(model, apply_delta(v, ViewpointDelta(*shift)), resolution, fill, occlusion_radius)
    h, w = resolution
    vectors: dict[int, tuple[float, float]] = {}
    dense = np.zeros((h, w, 2))
    for kid in model.keypoint_ids:
        if not (r1.visibility[kid] and r2.visibility[kid]):
            continue
        u1, v1 = r1.keypoints_2d[kid]
        u2, v2 = r2.keypoints_2d[kid]
        vectors[kid] = (u2 - u1, v2 - v1)
        row = int(np.clip(round(v1), 0, h - 1))
        col = int(np.clip(round(u1), 0, w - 1))
        dense[row, col] = (u2 - u1, v2 - v1)
    dense.setflags(write=False)
    return DisparityMap(vectors=vectors, dense=dense, shift=shift)


def descriptor_map(
    r: Render,
    model: TemplateModel,
    dim: int | None = None,
    noise: NoiseSpec = NoiseSpec(),
    grid: tuple[int, int] | None = None,
    sigma: float = 1.5,
) -> FeatureMap:
    """Semantic identity descriptors with Gaussian spatial falloff.

    Each visible keypoint deposits its unit one-hot embedding with a truncated
    Gaussian footprint (radius 3*sigma cells); the leftover weight at each cell
    goes to a common background embedding; every cell is renormalized to unit
    length. Noise and dropout follow the NoiseSpec (seeded, deterministic).
    """
    n = model.n_keypoints
    d = dim if dim is not None else n + 1
    if d < n + 1:
        raise ValueError(f"embedding dim {d} < {n + 1} needed for one-hot identities")
    h, w = r.resolution
    gh, gw = grid if grid is not None else (h, w)
    rng = np.random.default_rng(noise.seed)

    values = np.zeros((gh, gw, d))
    rows = np.arange(gh)[:, None]
    cols = np.arange(gw)[None, :]
    total = np.zeros((gh, gw))
    for i, kid in enumerate(model.keypoint_ids):
        dropped = noise.dropout > 0 and rng.random() < noise.dropout
        if dropped or not r.visibility[kid]:
            continue
        u, vpix = r.keypoints_2d[kid]
        gu = (u + 0.5) * gw / w - 0.5
        gv = (vpix + 0.5) * gh / h - 0.5
        r2 = (rows - gv) ** 2 + (cols - gu) ** 2
        weight = np.exp(-r2 / (2.0 * sigma**2))
        weight[r2 > (3.0 * sigma) ** 2] = 0.0
        values[:, :, i] += weight
        total += weight
    values[:, :, n] = np.maximum(0.0, 1.0 - total)

    if noise.noise_std > 0:
        values += rng.normal(0.0, noise.noise_std, size=values.shape)
    norms = np.linalg.norm(values, axis=2, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    values = values / safe
    # cells zeroed out by adversarial noise fall back to the background embedding
    dead = (norms <= 1e-12)[:, :, 0]
    if dead.any():
        values[dead] = 0.0
        values[dead, n] = 1.0
    return FeatureMap(values)


def downsample_mask(mask: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Max-pool a binary mask onto a coarser grid (the down-sampled alpha map)."""
    h, w = mask.shape
    gh, gw = grid
    rows = np.minimum((np.arange(h) * gh) // h, gh - 1)
    cols = np.minimum((np.arange(w) * gw) // w, gw - 1)
    flat = np.zeros(gh * gw, dtype=bool)
    idx = (rows[:, None] * gw + cols[None, :]).ravel()
    np.logical_or.at(flat, idx, mask.astype(bool).ravel())
    return flat.reshape(gh, gw)
