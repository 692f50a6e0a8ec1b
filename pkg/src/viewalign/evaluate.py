"""Experiment configuration, batch execution and the viewpoint metrics.

Metrics are MedErr (median geodesic rotation error in degrees) and Acc_theta
(fraction of trials with error strictly below theta). The default theta list
is (30, 22.5, 15) degrees, i.e. pi/6, pi/8, pi/12.

Experiments run seeded trials: each trial samples a true viewpoint, builds a
pseudo-real target feature map (optionally from a jittered clone of the
template with descriptor noise), runs the alignment loop, and records the
trajectory. Reports are byte-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .alignment import (
    STATUS_ESTIMATOR_FAILURE,
    AlignmentTrajectory,
    IterationRecord,
    StopCriteria,
    align,
    trajectory_from_csv,
    trajectory_to_csv,
)
from .binning import build_scheme
from .datagen import perturb_template
from .estimator import (
    GridSearchSpec,
    NoisyOracleEstimator,
    OracleEstimator,
    ReprojectionEstimator,
)
from .renderer import NoiseSpec, descriptor_map, render
from .template import TemplateModel, chair_template, load_template
from .viewpoint import Viewpoint, geodesic_distance

__all__ = [
    "DEFAULT_ACC_THETAS",
    "ExperimentConfig",
    "MetricsReport",
    "med_err",
    "acc_at",
    "run_experiment",
    "recompute_report",
]

DEFAULT_ACC_THETAS = (30.0, 22.5, 15.0)  # pi/6, pi/8, pi/12


def med_err(errors: list[float]) -> float:
    """Statistical median of geodesic errors in degrees."""
    if not errors:
        raise ValueError("med_err requires a non-empty error list")
    return float(statistics.median(errors))


def acc_at(errors: list[float], theta: float) -> float:
    """Fraction of errors strictly below theta degrees."""
    if not errors:
        raise ValueError("acc_at requires a non-empty error list")
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    return sum(1 for e in errors if e < theta) / len(errors)


CONFIG_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, versioned experiment description; unknown keys are load errors."""

    version: int = CONFIG_VERSION
    template: str | None = None          # path, or None for the shipped chair
    estimator: str = "oracle"            # oracle | noisy-oracle | reprojection
    n_bins: int = 20
    mu: float = 255.0
    tau: tuple[float, float, float] = (2.0, 2.0, 2.0)
    max_iterations: int = 10
    trials: int = 100
    seed: int = 0
    resolution: int = 32
    init: str = "coarse"                 # coarse | random
    azimuth_range: float = 180.0         # truth sampled in +-range
    elevation_range: float = 45.0
    tilt_range: float = 0.0
    target_noise_std: float = 0.0
    target_dropout: float = 0.0
    keypoint_jitter: float = 0.0
    scale_jitter: float = 0.0
    noise_floor_bins: float = 0.3        # noisy-oracle parameters
    noise_scale_bins: float = 2.0
    acc_thetas: tuple[float, ...] = DEFAULT_ACC_THETAS

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {self.version}")
        if self.estimator not in ("oracle", "noisy-oracle", "reprojection"):
            raise ValueError(f"unknown estimator kind {self.estimator!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.resolution < 8:
            raise ValueError(f"resolution must be >= 8, got {self.resolution}")
        if self.init not in ("coarse", "random"):
            raise ValueError(f"unknown init mode {self.init!r}")
        object.__setattr__(self, "tau", tuple(float(t) for t in self.tau))
        object.__setattr__(self, "acc_thetas", tuple(float(t) for t in self.acc_thetas))

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**doc)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    def load_model(self) -> TemplateModel:
        return chair_template() if self.template is None else load_template(self.template)


@dataclass(frozen=True)
class MetricsReport:
    med_err: float
    acc: dict[float, float]
    per_iteration_median: list[float]
    trials: int
    failures: int

    def as_dict(self) -> dict:
        return {
            "med_err": self.med_err,
            "acc": {repr(t): a for t, a in sorted(self.acc.items())},
            "per_iteration_median": self.per_iteration_median,
            "trials": self.trials,
            "failures": self.failures,
        }


def _make_estimator(config: ExperimentConfig, scheme, model, trial_seed: int):
    if config.estimator == "oracle":
        return OracleEstimator(scheme)
    if config.estimator == "noisy-oracle":
        return NoisyOracleEstimator(
            scheme,
            noise_floor_bins=config.noise_floor_bins,
            noise_scale_bins=config.noise_scale_bins,
            seed=trial_seed,
        )
    return ReprojectionEstimator(scheme, model, GridSearchSpec())


def run_trials(config: ExperimentConfig) -> tuple[list[AlignmentTrajectory], list[Viewpoint]]:
    """Run every trial of the experiment; returns (trajectories, truths)."""
    model = config.load_model()
    scheme = build_scheme(config.n_bins, config.mu)
    stop = StopCriteria(tau=config.tau, max_iterations=config.max_iterations)
    res = (config.resolution, config.resolution)
    rng = np.random.default_rng(config.seed)

    trajectories = []
    truths = []
    for trial in range(config.trials):
        truth = Viewpoint(
            rng.uniform(-config.azimuth_range, config.azimuth_range),
            rng.uniform(-config.elevation_range, config.elevation_range),
            rng.uniform(-config.tilt_range, config.tilt_range) if config.tilt_range else 0.0,
        )
        trial_seed = int(rng.integers(2**31))
        target_model = model
        if config.keypoint_jitter > 0 or config.scale_jitter > 0:
            target_model = perturb_template(
                model, trial_seed, config.keypoint_jitter, config.scale_jitter
            )
        target_render = render(target_model, truth, res)
        target = descriptor_map(
            target_render,
            target_model,
            noise=NoiseSpec(config.target_noise_std, config.target_dropout, trial_seed),
        )
        estimator = _make_estimator(config, scheme, model, trial_seed)
        trajectories.append(align(
            target,
            model,
            scheme,
            estimator,
            stop=stop,
            init=config.init,
            truth=truth,
            resolution=res,
            init_seed=trial_seed,
        ))
        truths.append(truth)
    return trajectories, truths


def _metrics_from_trajectories(
    trajectories: list[AlignmentTrajectory],
    config: ExperimentConfig,
) -> MetricsReport:
    ok = [t for t in trajectories if t.status != STATUS_ESTIMATOR_FAILURE]
    errors = [t.final_error for t in ok]
    curve = []
    for k in range(config.max_iterations):
        at_k = []
        for t in ok:
            series = t.errors_after_iterations()
            at_k.append(series[min(k, len(series) - 1)])
        curve.append(med_err(at_k) if at_k else float("nan"))
    return MetricsReport(
        med_err=med_err(errors),
        acc={t: acc_at(errors, t) for t in config.acc_thetas},
        per_iteration_median=curve,
        trials=len(trajectories),
        failures=len(trajectories) - len(ok),
    )


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> MetricsReport:
    """Run all trials, write per-trial trajectories, the trials summary and the
    JSON report."""
    out = Path(out_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    trajectories, truths = run_trials(config)
    for i, t in enumerate(trajectories):
        trajectory_to_csv(t, out / "trajectories" / f"trial_{i:04d}.csv")
    _write_trials_csv(trajectories, truths, out / "trials.csv")
    report = _metrics_from_trajectories(trajectories, config)
    doc = {"config": asdict(config), "report": report.as_dict()}
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return report


def _write_trials_csv(trajectories, truths, path: Path) -> None:
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["trial", "truth_theta", "truth_phi", "truth_psi",
                         "status", "iterations", "final_error"])
        for i, (t, truth) in enumerate(zip(trajectories, truths)):
            writer.writerow([
                i,
                *(repr(x) for x in truth.as_tuple()),
                t.status,
                t.iterations,
                "" if t.final_error is None else repr(t.final_error),
            ])


def recompute_report(config: ExperimentConfig, out_dir: str | Path) -> MetricsReport:
    """Rebuild the metrics from the emitted files (round-trip integrity).

    The trajectory CSVs provide the chained viewpoints and per-record errors;
    trials.csv provides each trial's truth viewpoint, from which the final
    error is recomputed via the geodesic metric on the chained-forward final
    viewpoint.
    """
    import csv

    out = Path(out_dir)
    with open(out / "trials.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    rebuilt = []
    for row in rows:
        t = trajectory_from_csv(out / "trajectories" / f"trial_{int(row['trial']):04d}.csv")
        truth = Viewpoint(float(row["truth_theta"]), float(row["truth_phi"]),
                          float(row["truth_psi"]))
        records = tuple(
            IterationRecord(
                index=r.index,
                viewpoint=r.viewpoint,
                delta_hat=r.delta_hat,
                geodesic_error=geodesic_distance(r.viewpoint, truth),
            )
            for r in t.records
        )
        rebuilt.append(AlignmentTrajectory(
            records=records,
            status=row["status"],
            final_viewpoint=t.final_viewpoint,
            final_error=geodesic_distance(t.final_viewpoint, truth),
        ))
    return _metrics_from_trajectories(rebuilt, config)
