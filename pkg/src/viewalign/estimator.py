"""Pluggable estimators of the quantized viewpoint difference.

Three interchangeable kinds stand in for a trained difference classifier:

  * OracleEstimator        — returns the true bin; validates the loop's math.
  * NoisyOracleEstimator   — corrupts the bin index with an error whose
                             magnitude grows with the difference, modeling a
                             classifier that is precise only for small offsets.
  * ReprojectionEstimator  — an actual correspondence-driven estimator:
                             correlation argmax matches feed a coarse-to-fine
                             grid search over viewpoint offsets minimizing 2D
                             reprojection error.

All three emit per-axis bin logits, so a trained classifier can be dropped in
behind the same interface. The 16-hypothesis coarse azimuth initializer that
seeds the alignment loop also lives here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binning import BinningScheme, dequantize, quantize
from .correlation import CorrelationTensor, FeatureMap, subpixel_matches
from .renderer import DisparityMap, Render, project_points_batch, render
from .template import TemplateModel
from .viewpoint import Viewpoint, ViewpointDelta, delta, rotation_matrices

__all__ = [
    "BinLogits",
    "EstimatorInput",
    "EstimationFailure",
    "GridSearchSpec",
    "OracleEstimator",
    "NoisyOracleEstimator",
    "ReprojectionEstimator",
    "decode_logits",
    "reprojection_search",
    "coarse_init",
]


class EstimationFailure(Exception):
    """Raised when an estimator cannot produce a difference estimate."""


@dataclass(frozen=True)
class BinLogits:
    """Per-axis bin scores; argmax (first index on ties) is the prediction.

    `absolute_azimuth` is an optional auxiliary output slot, populated only by
    estimators that can supply it.
    """

    azimuth: np.ndarray
    elevation: np.ndarray
    tilt: np.ndarray
    absolute_azimuth: np.ndarray | None = None

    def argmax(self) -> tuple[int, int, int]:
        return (
            int(np.argmax(self.azimuth)),
            int(np.argmax(self.elevation)),
            int(np.argmax(self.tilt)),
        )


@dataclass(frozen=True)
class EstimatorInput:
    """Everything an estimator may consume for one iteration."""

    render: Render
    features_target: FeatureMap | None = None
    features_render: FeatureMap | None = None
    correlation: CorrelationTensor | None = None
    disparity: DisparityMap | None = None


def decode_logits(logits: BinLogits, scheme: BinningScheme) -> ViewpointDelta:
    ka, ke, kt = logits.argmax()
    return ViewpointDelta(
        dequantize(ka, scheme), dequantize(ke, scheme), dequantize(kt, scheme)
    )


def _one_hot(k: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[k] = 1.0
    return v


class OracleEstimator:
    """Returns the true bin on every axis; requires ground truth."""

    needs: frozenset[str] = frozenset()

    def __init__(self, scheme: BinningScheme):
        self.scheme = scheme

    def estimate(self, inp: EstimatorInput, truth: ViewpointDelta | None) -> BinLogits:
        if truth is None:
            raise ValueError("oracle estimator requires the true viewpoint difference")
        n = self.scheme.n_bins
        return BinLogits(
            azimuth=_one_hot(quantize(truth.d_azimuth, self.scheme), n),
            elevation=_one_hot(quantize(truth.d_elevation, self.scheme), n),
            tilt=_one_hot(quantize(truth.d_tilt, self.scheme), n),
        )


class NoisyOracleEstimator:
    """Oracle with seeded bin-index corruption growing with the magnitude of
    the true difference (precise when the offset is small, approximate when it
    is large)."""

    needs: frozenset[str] = frozenset()

    def __init__(
        self,
        scheme: BinningScheme,
        noise_floor_bins: float = 0.3,
        noise_scale_bins: float = 2.0,
        seed: int = 0,
    ):
        self.scheme = scheme
        self.noise_floor_bins = noise_floor_bins
        self.noise_scale_bins = noise_scale_bins
        self.rng = np.random.default_rng(seed)

    def _noisy_bin(self, d: float) -> int:
        k = quantize(d, self.scheme)
        std = self.noise_floor_bins + self.noise_scale_bins * abs(d) / 180.0
        shift = int(round(self.rng.normal(0.0, std)))
        return int(np.clip(k + shift, 0, self.scheme.n_bins - 1))

    def estimate(self, inp: EstimatorInput, truth: ViewpointDelta | None) -> BinLogits:
        if truth is None:
            raise ValueError("noisy oracle estimator requires the true viewpoint difference")
        n = self.scheme.n_bins
        return BinLogits(
            azimuth=_one_hot(self._noisy_bin(truth.d_azimuth), n),
            elevation=_one_hot(self._noisy_bin(truth.d_elevation), n),
            tilt=_one_hot(self._noisy_bin(truth.d_tilt), n),
        )


@dataclass(frozen=True)
class GridSearchSpec:
    """Coarse-to-fine offset search: each level halves in on the previous best."""

    steps: tuple[float, ...] = (10.0, 3.0, 1.0)
    half_range: float = 90.0
    min_matches: int = 4
    search_tilt: bool = True

    @property
    def final_step(self) -> float:
        return self.steps[-1]


class ReprojectionEstimator:
    """Correspondence-driven estimator: matches from the alpha-masked
    correlation tensor drive a reprojection-error grid search."""

    needs: frozenset[str] = frozenset({"correlation"})

    mirrorable: bool = False  # already outputs the camera correction directly

    def __init__(
        self,
        scheme: BinningScheme,
        model: TemplateModel,
        grid: GridSearchSpec = GridSearchSpec(),
    ):
        self.scheme = scheme
        self.model = model
        self.grid = grid

    def estimate(self, inp: EstimatorInput, truth: ViewpointDelta | None) -> BinLogits:
        if inp.correlation is None:
            raise ValueError("reprojection estimator needs the correlation tensor")
        matches = subpixel_matches(inp.correlation, min_peak_ratio=4.0)
        d = reprojection_search(
            matches,
            self.model,
            inp.render.viewpoint,
            self.grid,
            resolution=inp.render.resolution,
            fill=inp.render.fill,
        )
        n = self.scheme.n_bins
        return BinLogits(
            azimuth=_one_hot(quantize(d.d_azimuth, self.scheme), n),
            elevation=_one_hot(quantize(d.d_elevation, self.scheme), n),
            tilt=_one_hot(quantize(d.d_tilt, self.scheme), n),
        )


def _level_offsets(step: float, half_range: float, search_tilt: bool) -> np.ndarray:
    axis = np.arange(-half_range, half_range + step / 2, step)
    t_axis = axis if search_tilt else np.array([0.0])
    daz, dele, dti = np.meshgrid(axis, axis, t_axis, indexing="ij")
    return np.stack([daz.ravel(), dele.ravel(), dti.ravel()], axis=-1)


def reprojection_search(
    matches: dict[tuple[int, int], tuple[float, float]],
    model: TemplateModel,
    current_view: Viewpoint,
    grid: GridSearchSpec = GridSearchSpec(),
    resolution: tuple[int, int] = (32, 32),
    fill: float = 0.8,
) -> ViewpointDelta:
    """Coarse-to-fine grid search over viewpoint offsets minimizing the mean
    squared reprojection error of matched template keypoints.

    `matches` maps cells of the current render to observed (possibly subpixel)
    locations in the target map. Render cells are associated to template
    keypoints by rounding the current projection; at least `grid.min_matches`
    keypoints must be matched.
    Ties break deterministically toward the smaller absolute offset.
    """
    r = render(model, current_view, resolution, fill)
    h, w = resolution
    kp_idx: list[int] = []
    observed: list[tuple[float, float]] = []
    for i, kid in enumerate(model.keypoint_ids):
        if not r.visibility[kid]:
            continue
        u, vpix = r.keypoints_2d[kid]
        cell = (int(round(vpix)), int(round(u)))
        if cell in matches:
            src_row, src_col = matches[cell]
            kp_idx.append(i)
            observed.append((float(src_col), float(src_row)))
    if len(kp_idx) < grid.min_matches:
        raise EstimationFailure(
            f"only {len(kp_idx)} matched keypoints, need {grid.min_matches}"
        )
    obs = np.asarray(observed)
    kp_idx_arr = np.asarray(kp_idx)

    center = np.zeros(3)
    half = grid.half_range
    for step in grid.steps:
        offsets = center[None, :] + _level_offsets(step, half, grid.search_tilt)
        rots = rotation_matrices(
            current_view.azimuth + offsets[:, 0],
            current_view.elevation + offsets[:, 1],
            current_view.tilt + offsets[:, 2],
        )
        proj = project_points_batch(model, rots, resolution, fill)[:, kp_idx_arr, :]
        err = np.mean(np.sum((proj - obs[None, :, :]) ** 2, axis=-1), axis=-1)
        # deterministic tie-break toward the smaller offset
        l1 = np.sum(np.abs(offsets), axis=-1)
        order = np.lexsort((offsets[:, 2], offsets[:, 1], offsets[:, 0], l1,
                            np.round(err / 1e-9)))
        center = offsets[order[0]]
        half = step  # next level searches around the winner
    return ViewpointDelta(*center)


def _observed_keypoints(
    fa: FeatureMap, n_keypoints: int, threshold: float = 0.2
) -> dict[int, tuple[float, float]]:
    """Per-keypoint observed (u, v) locations read off the identity channels.

    Each keypoint owns one descriptor channel; when a channel carries enough
    mass, its location is recovered to subpixel precision as the channel-
    weighted centroid of a 5x5 window around the channel argmax.
    """
    obs: dict[int, tuple[float, float]] = {}
    h, w = fa.shape[:2]
    for i in range(n_keypoints):
        channel = fa.values[:, :, i]
        if channel.max() < threshold:
            continue
        r0, c0 = np.unravel_index(int(np.argmax(channel)), channel.shape)
        rows = slice(max(r0 - 2, 0), min(r0 + 3, h))
        cols = slice(max(c0 - 2, 0), min(c0 + 3, w))
        win = channel[rows, cols]
        rr, cc = np.mgrid[rows, cols]
        total = win.sum()
        obs[i] = (float((cc * win).sum() / total), float((rr * win).sum() / total))
    return obs


def _position_agreement(
    obs: dict[int, tuple[float, float]],
    model: TemplateModel,
    view: Viewpoint,
    resolution: tuple[int, int],
    sigma: float,
) -> float:
    """Mean Gaussian agreement between a hypothesis render's visible keypoint
    projections and the observed channel locations."""
    r = render(model, view, resolution)
    total, count = 0.0, 0
    for i, kid in enumerate(model.keypoint_ids):
        if i not in obs or not r.visibility[kid]:
            continue
        u, v = r.keypoints_2d[kid]
        ou, ov = obs[i]
        d2 = (u - ou) ** 2 + (v - ov) ** 2
        total += float(np.exp(-d2 / (2.0 * sigma**2)))
        count += 1
    return total / max(count, 1)


def coarse_init(
    fa: FeatureMap,
    model: TemplateModel,
    resolution: tuple[int, int] | None = None,
    n_hypotheses: int = 16,
    elevation_prior: float = 0.0,
    tilt_prior: float = 0.0,
    elevation_sweep: tuple[float, ...] = (-10.0, 0.0, 10.0),
    sigma: float = 3.0,
) -> Viewpoint:
    """Seed the alignment loop by a search over `n_hypotheses` equispaced
    azimuth renders.

    Each hypothesis render is scored by how well its visible keypoint
    projections agree, positionally, with where those keypoints' identity
    channels peak in the target feature map (mean Gaussian agreement, width
    `sigma` cells). The elevation sweep absorbs unknown target elevation. A
    two-level local azimuth/elevation refinement then sharpens the winning
    hypothesis before snapping back to the nearest of the equispaced azimuths,
    so targets near a hypothesis boundary land on the correct side.

    Returns the winning azimuth at the configured elevation/tilt priors.
    """
    if resolution is None:
        resolution = fa.shape[:2]
    obs = _observed_keypoints(fa, model.n_keypoints)
    step = 360.0 / n_hypotheses
    best_score, best_az, best_el = -np.inf, 0.0, elevation_prior
    for k in range(n_hypotheses):
        az = k * step
        for el in elevation_sweep:
            view = Viewpoint(az, elevation_prior + el, tilt_prior)
            s = _position_agreement(obs, model, view, resolution, sigma)
            if s > best_score:
                best_score, best_az, best_el = s, az, elevation_prior + el
    for az_step, az_half, el_step, el_half in (
        (2.5, step / 2.0, 5.0, 10.0),
        (1.0, 2.5, 2.0, 5.0),
    ):
        best = (-np.inf, best_az, best_el)
        for az in best_az + np.arange(-az_half, az_half + 1e-9, az_step):
            for el in best_el + np.arange(-el_half, el_half + 1e-9, el_step):
                s = _position_agreement(
                    obs, model, Viewpoint(az, el, tilt_prior), resolution, sigma
                )
                if s > best[0]:
                    best = (s, float(az), float(el))
        _, best_az, best_el = best
    snapped = (round(best_az / step) % n_hypotheses) * step
    return Viewpoint(snapped, elevation_prior, tilt_prior)


def true_delta(current: Viewpoint, truth: Viewpoint) -> ViewpointDelta:
    """The difference an ideal estimator would predict at this iteration."""
    return delta(current, truth)
