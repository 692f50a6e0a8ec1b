"""The iterative render, estimate, refine loop and its recorded trajectory.

Each iteration renders the template at the current viewpoint, builds whatever
inputs the estimator declares it needs, decodes the predicted difference bins
to degrees, and applies the decoded correction. The loop stops when every
decoded per-axis difference magnitude falls within the stop thresholds, when
the iteration limit is reached, or when the estimator fails. Stopping uses the
decoded difference (the loop's only observable); true error enters only
evaluation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binning import BinningScheme
from .correlation import FeatureMap, apply_alpha, correlate
from .estimator import (
    EstimationFailure,
    EstimatorInput,
    coarse_init,
    decode_logits,
)
from .renderer import descriptor_map, render, stereo_disparity
from .template import TemplateModel
from .viewpoint import (
    Viewpoint,
    ViewpointDelta,
    apply_delta,
    delta,
    geodesic_distance,
)

__all__ = [
    "StopCriteria",
    "IterationRecord",
    "AlignmentTrajectory",
    "align",
    "localization_session",
    "trajectory_to_csv",
    "trajectory_from_csv",
]

STATUS_CONVERGED = "converged"
STATUS_ITERATION_LIMIT = "iteration-limit"
STATUS_ESTIMATOR_FAILURE = "estimator-failure"


@dataclass(frozen=True)
class StopCriteria:
    tau: tuple[float, float, float] = (2.0, 2.0, 2.0)
    max_iterations: int = 10

    def __post_init__(self):
        if any(t <= 0 for t in self.tau):
            raise ValueError(f"thresholds must be positive, got {self.tau}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class IterationRecord:
    index: int
    viewpoint: Viewpoint            # viewpoint rendered this iteration
    delta_hat: ViewpointDelta       # decoded correction applied afterwards
    geodesic_error: float | None    # error of the rendered viewpoint vs truth
    events: tuple[str, ...] = ()


@dataclass(frozen=True)
class AlignmentTrajectory:
    records: tuple[IterationRecord, ...]
    status: str
    final_viewpoint: Viewpoint
    final_error: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def errors_after_iterations(self) -> list[float]:
        """Error after applying k corrections, k = 1..iterations (needs truth)."""
        if self.final_error is None:
            raise ValueError("trajectory has no ground truth errors")
        out = [r.geodesic_error for r in self.records[1:]]
        out.append(self.final_error)
        return out

    def summary(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "final_viewpoint": list(self.final_viewpoint.as_tuple()),
            "final_error": self.final_error,
        }


def _decoded_within(d: ViewpointDelta, tau: tuple[float, float, float]) -> bool:
    return (
        abs(d.d_azimuth) <= tau[0]
        and abs(d.d_elevation) <= tau[1]
        and abs(d.d_tilt) <= tau[2]
    )


def _build_input(estimator, model, current, target, resolution, fill):
    r = render(model, current, resolution, fill)
    needs = getattr(estimator, "needs", frozenset())
    features_render = None
    correlation = None
    disparity = None
    if "correlation" in needs or "features" in needs:
        features_render = descriptor_map(r, model, dim=target.shape[2] if target else None)
    if "correlation" in needs:
        correlation = apply_alpha(correlate(target, features_render), r.alpha)
    if "disparity" in needs:
        disparity = stereo_disparity(model, current, resolution, fill=fill)
    return EstimatorInput(
        render=r,
        features_target=target,
        features_render=features_render,
        correlation=correlation,
        disparity=disparity,
    )


def _run_loop(model, scheme, estimator, stop, start, target, resolution, fill,
              truth, mirrored):
    current = start
    records: list[IterationRecord] = []
    status = STATUS_ITERATION_LIMIT
    for it in range(1, stop.max_iterations + 1):
        inp = _build_input(estimator, model, current, target, resolution, fill)
        # correspondence-driven estimators output the camera correction
        # directly, so mirroring applies only to truth-driven kinds
        mirror = mirrored and getattr(estimator, "mirrorable", True)
        truth_delta = None
        if truth is not None:
            truth_delta = delta(truth, current) if mirror else delta(current, truth)
        events: tuple[str, ...] = ()
        try:
            logits = estimator.estimate(inp, truth_delta)
        except EstimationFailure as exc:
            records.append(IterationRecord(
                index=it,
                viewpoint=current,
                delta_hat=ViewpointDelta(0.0, 0.0, 0.0),
                geodesic_error=_err(current, truth),
                events=(f"estimation-failure: {exc}",),
            ))
            status = STATUS_ESTIMATOR_FAILURE
            break
        decoded = decode_logits(logits, scheme)
        if mirror:
            # the agent moves opposite the estimated reference-to-camera offset;
            # the record stores the correction actually applied
            applied = ViewpointDelta(-decoded.d_azimuth, -decoded.d_elevation, -decoded.d_tilt)
        else:
            applied = decoded
        records.append(IterationRecord(
            index=it,
            viewpoint=current,
            delta_hat=applied,
            geodesic_error=_err(current, truth),
            events=events,
        ))
        current = apply_delta(current, applied)
        if _decoded_within(decoded, stop.tau):
            status = STATUS_CONVERGED
            break
    return AlignmentTrajectory(
        records=tuple(records),
        status=status,
        final_viewpoint=current,
        final_error=_err(current, truth),
    )


def _err(v: Viewpoint, truth: Viewpoint | None) -> float | None:
    return None if truth is None else geodesic_distance(v, truth)


def _resolve_init(init, target, model, resolution, seed):
    if isinstance(init, Viewpoint):
        return init
    if init == "coarse":
        return coarse_init(target, model, resolution)
    if init == "random":
        rng = np.random.default_rng(seed)
        return Viewpoint(rng.uniform(-180, 180), rng.uniform(-45, 45), 0.0)
    raise ValueError(f"unknown init mode {init!r}")


def align(
    target: FeatureMap,
    model: TemplateModel,
    scheme: BinningScheme,
    estimator,
    stop: StopCriteria = StopCriteria(),
    init: Viewpoint | str = "coarse",
    truth: Viewpoint | None = None,
    resolution: tuple[int, int] | None = None,
    fill: float = 0.8,
    init_seed: int = 0,
) -> AlignmentTrajectory:
    """Iteratively align the rendered template viewpoint to the target map."""
    if resolution is None:
        resolution = target.shape[:2]
    start = _resolve_init(init, target, model, resolution, init_seed)
    return _run_loop(model, scheme, estimator, stop, start, target, resolution,
                     fill, truth, mirrored=False)


def localization_session(
    reference: FeatureMap,
    model: TemplateModel,
    scheme: BinningScheme,
    estimator,
    stop: StopCriteria = StopCriteria(),
    start: Viewpoint = Viewpoint(0.0, 0.0, 0.0),
    truth: Viewpoint | None = None,
    resolution: tuple[int, int] | None = None,
    fill: float = 0.8,
) -> AlignmentTrajectory:
    """Active viewpoint localization: the simulated camera moves while the
    reference stays fixed; the terminal viewpoint is the localized pose.

    The same loop as `align` with roles mirrored: each step estimates the
    reference-to-camera offset and moves the camera by its negation.
    """
    if resolution is None:
        resolution = reference.shape[:2]
    return _run_loop(model, scheme, estimator, stop, start, reference,
                     resolution, fill, truth, mirrored=True)


CSV_COLUMNS = ["iter", "theta", "phi", "psi", "d_theta", "d_phi", "d_psi",
               "geodesic_error", "status"]


def trajectory_to_csv(t: AlignmentTrajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in t.records:
            writer.writerow([
                r.index,
                *(repr(x) for x in r.viewpoint.as_tuple()),
                *(repr(x) for x in r.delta_hat.as_tuple()),
                "" if r.geodesic_error is None else repr(r.geodesic_error),
                t.status,
            ])


def trajectory_from_csv(path: str | Path) -> AlignmentTrajectory:
    records = []
    status = STATUS_ITERATION_LIMIT
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            records.append(IterationRecord(
                index=int(row["iter"]),
                viewpoint=Viewpoint(float(row["theta"]), float(row["phi"]), float(row["psi"])),
                delta_hat=ViewpointDelta(float(row["d_theta"]), float(row["d_phi"]), float(row["d_psi"])),
                geodesic_error=float(row["geodesic_error"]) if row["geodesic_error"] else None,
            ))
            status = row["status"]
    if not records:
        raise ValueError(f"{path}: empty trajectory file")
    last = records[-1]
    final = apply_delta(last.viewpoint, last.delta_hat)
    traj = AlignmentTrajectory(records=tuple(records), status=status, final_viewpoint=final)
    _check_chaining(traj)
    return traj


def _check_chaining(t: AlignmentTrajectory, tol: float = 1e-9) -> None:
    """Read-back integrity: each rendered viewpoint chains from the previous."""
    for prev, nxt in zip(t.records, t.records[1:]):
        expect = apply_delta(prev.viewpoint, prev.delta_hat)
        drift = max(
            abs(a - b) for a, b in zip(expect.as_tuple(), nxt.viewpoint.as_tuple())
        )
        if drift > tol:
            raise ValueError(
                f"trajectory chaining broken at iteration {nxt.index} (drift {drift})"
            )
