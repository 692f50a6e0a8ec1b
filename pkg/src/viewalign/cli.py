"""Command-line surface: align, experiment, dump-bins, gen-correspondence,
bench-correlate.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .alignment import StopCriteria, align, trajectory_to_csv
from .binning import bin_table_rows, build_scheme
from .correlation import FeatureMap, correlate
from .datagen import pair_frames, save_pairs_csv, skeletal_frame
from .estimator import GridSearchSpec, NoisyOracleEstimator, OracleEstimator, ReprojectionEstimator
from .evaluate import ExperimentConfig, run_experiment
from .renderer import NoiseSpec, descriptor_map, render
from .template import chair_template, load_template
from .viewpoint import Viewpoint


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _load_model(path):
    return chair_template() if path is None else load_template(path)


def _cmd_dump_bins(args) -> int:
    scheme = build_scheme(args.bins, args.mu)
    rows = bin_table_rows(scheme)
    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    writer = csv.writer(out)
    writer.writerow(["index", "lower_edge", "center", "upper_edge"])
    for row in rows:
        writer.writerow(row)
    if out is not sys.stdout:
        out.close()
    return 0


def _cmd_align(args) -> int:
    model = _load_model(args.template)
    scheme = build_scheme(args.bins, args.mu)
    truth = Viewpoint(*args.target_view)
    res = (args.resolution, args.resolution)
    target = descriptor_map(render(model, truth, res), model,
                            noise=NoiseSpec(seed=args.seed))
    if args.estimator == "oracle":
        estimator = OracleEstimator(scheme)
    elif args.estimator == "noisy-oracle":
        estimator = NoisyOracleEstimator(scheme, seed=args.seed)
    else:
        estimator = ReprojectionEstimator(scheme, model, GridSearchSpec())
    stop = StopCriteria(tau=tuple(args.tau), max_iterations=args.max_iter)
    traj = align(target, model, scheme, estimator, stop=stop, init="coarse",
                 truth=truth, resolution=res, init_seed=args.seed)
    trajectory_to_csv(traj, args.out)
    print(json.dumps(traj.summary(), indent=2))
    return 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    report = run_experiment(config, args.out)
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_gen_correspondence(args) -> int:
    model = _load_model(args.template)
    res = (args.resolution, args.resolution)
    ra = render(model, Viewpoint(*args.view_a), res)
    rb = render(model, Viewpoint(*args.view_b), res)
    fa = skeletal_frame(ra.keypoints_2d, model.skeleton_edges, args.samples)
    fb = skeletal_frame(rb.keypoints_2d, model.skeleton_edges, args.samples)
    from .datagen import prune_visibility

    fa = prune_visibility(fa, ra)
    fb = prune_visibility(fb, rb)
    cs = pair_frames(fa, fb, negatives_per_positive=args.negatives, seed=args.seed)
    save_pairs_csv(cs, args.out)
    print(json.dumps(cs.provenance, indent=2, sort_keys=True))
    return 0


def _cmd_bench_correlate(args) -> int:
    rng = np.random.default_rng(0)
    h = w = args.size
    fa = FeatureMap.normalized(rng.normal(size=(h, w, args.dim)))
    fb = FeatureMap.normalized(rng.normal(size=(h, w, args.dim)))
    correlate(fa, fb)  # warm up
    t0 = time.perf_counter()
    for _ in range(args.repeats):
        correlate(fa, fb)
    elapsed = time.perf_counter() - t0
    cells = args.repeats * h * w * h * w
    print(f"correlate {h}x{w}x{args.dim}: {args.repeats} runs in {elapsed:.3f} s")
    print(f"throughput: {cells / elapsed:.3e} correlation cells/s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="viewalign")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("align", help="run a single alignment")
    pa.add_argument("--template", default=None)
    pa.add_argument("--estimator", default="oracle",
                    choices=["oracle", "noisy-oracle", "reprojection"])
    pa.add_argument("--bins", type=int, default=20)
    pa.add_argument("--mu", type=float, default=255.0)
    pa.add_argument("--tau", type=float, nargs=3, default=[2.0, 2.0, 2.0])
    pa.add_argument("--max-iter", type=int, default=10)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--target-view", type=float, nargs=3, default=[60.0, 20.0, 0.0],
                    metavar=("AZ", "EL", "TILT"))
    pa.add_argument("--resolution", type=int, default=32)
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=_cmd_align)

    pe = sub.add_parser("experiment", help="run a configured experiment batch")
    pe.add_argument("--config", required=True)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=_cmd_experiment)

    pb = sub.add_parser("dump-bins", help="emit the bin table as CSV")
    pb.add_argument("--bins", type=int, default=20)
    pb.add_argument("--mu", type=float, default=255.0)
    pb.add_argument("--out", default=None)
    pb.set_defaults(func=_cmd_dump_bins)

    pg = sub.add_parser("gen-correspondence", help="generate a correspondence set")
    pg.add_argument("--template", default=None)
    pg.add_argument("--view-a", type=float, nargs=3, default=[0.0, 10.0, 0.0])
    pg.add_argument("--view-b", type=float, nargs=3, default=[20.0, 10.0, 0.0])
    pg.add_argument("--samples", type=int, default=8)
    pg.add_argument("--negatives", type=int, default=1)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--resolution", type=int, default=64)
    pg.add_argument("--out", required=True)
    pg.set_defaults(func=_cmd_gen_correspondence)

    pc = sub.add_parser("bench-correlate", help="correlation kernel throughput")
    pc.add_argument("--size", type=int, default=32)
    pc.add_argument("--dim", type=int, default=16)
    pc.add_argument("--repeats", type=int, default=10)
    pc.set_defaults(func=_cmd_bench_correlate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"viewalign: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
