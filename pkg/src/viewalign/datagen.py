"""Dense correspondence generation from sparse skeletal keypoints.

Skeleton edges are sampled into 2D polylines in the model's fixed edge order;
pruning heuristics mask out samples that would be invisible in the image, and
surviving same-edge same-index samples across two frames become positive
correspondence pairs. Pruned samples are masked rather than deleted so the
index structure pairing relies on is preserved.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from shapely.geometry import Point, Polygon

from .correlation import CorrespondencePair
from .renderer import Render
from .template import TemplateModel

__all__ = [
    "SkeletalFrame",
    "CorrespondenceSet",
    "skeletal_frame",
    "prune_visibility",
    "prune_seat",
    "prune_self_occluded_legs",
    "derive_pose_quadrant",
    "pair_frames",
    "perturb_template",
    "save_pairs_csv",
    "load_pairs_csv",
]

DEFAULT_SAMPLES_PER_EDGE = 8


@dataclass(frozen=True)
class SkeletalFrame:
    """Sampled 2D skeleton: one polyline per surviving edge, fixed edge order."""

    edge_ids: tuple[tuple[int, int], ...]        # keypoint id pairs, model order
    points: np.ndarray = field(repr=False)       # (n_edges, samples, 2)
    valid: np.ndarray = field(repr=False)        # (n_edges, samples) bool mask
    provenance: dict[str, int] = field(default_factory=dict)

    @property
    def samples_per_edge(self) -> int:
        return self.points.shape[1]

    def surviving_points(self) -> np.ndarray:
        return self.points[self.valid]


def skeletal_frame(
    keypoints_2d: dict[int, tuple[float, float]],
    edges: tuple[tuple[int, int], ...],
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE,
) -> SkeletalFrame:
    """Linearly sample each edge endpoint-to-endpoint inclusive.

    Edges with a missing endpoint are omitted (masked) and counted in
    provenance.
    """
    if samples_per_edge < 2:
        raise ValueError(f"samples_per_edge must be >= 2, got {samples_per_edge}")
    t = np.linspace(0.0, 1.0, samples_per_edge)
    points = np.zeros((len(edges), samples_per_edge, 2))
    valid = np.zeros((len(edges), samples_per_edge), dtype=bool)
    missing = 0
    for e, (a, b) in enumerate(edges):
        if a not in keypoints_2d or b not in keypoints_2d:
            missing += 1
            continue
        pa = np.asarray(keypoints_2d[a], dtype=float)
        pb = np.asarray(keypoints_2d[b], dtype=float)
        points[e] = pa[None, :] + t[:, None] * (pb - pa)[None, :]
        valid[e] = True
    points.setflags(write=False)
    valid.setflags(write=False)
    return SkeletalFrame(
        edge_ids=tuple(edges),
        points=points,
        valid=valid,
        provenance={"missing_endpoint": missing * samples_per_edge},
    )


def _masked(frame: SkeletalFrame, valid: np.ndarray, rule: str, removed: int,
            warn: str | None = None) -> SkeletalFrame:
    valid = valid.copy()
    valid.setflags(write=False)
    provenance = dict(frame.provenance)
    provenance[rule] = provenance.get(rule, 0) + removed
    if warn is not None:
        provenance["warnings"] = provenance.get("warnings", 0) + 1
    return replace(frame, valid=valid, provenance=provenance)


def prune_visibility(frame: SkeletalFrame, r: Render) -> SkeletalFrame:
    """Visibility pruning against a render of the same model.

    Edges with both endpoints invisible lose every sample; mixed edges keep the
    samples in the half nearer the visible endpoint (proportional split).
    """
    valid = frame.valid.copy()
    s = frame.samples_per_edge
    t = np.linspace(0.0, 1.0, s)
    removed = 0
    for e, (a, b) in enumerate(frame.edge_ids):
        va = r.visibility.get(a, False)
        vb = r.visibility.get(b, False)
        if va and vb:
            continue
        before = valid[e].sum()
        if not va and not vb:
            valid[e] = False
        elif va:
            valid[e] &= t <= 0.5
        else:
            valid[e] &= t >= 0.5
        removed += before - valid[e].sum()
    return _masked(frame, valid, "visibility", int(removed))


def prune_seat(
    frame: SkeletalFrame, seat_polygon: np.ndarray | None, leg_ids: set[int]
) -> SkeletalFrame:
    """Remove leg-edge samples strictly inside the 2D seat polygon.

    Boundary points are retained. A degenerate polygon (< 3 vertices or None)
    prunes nothing.
    """
    if seat_polygon is None or len(seat_polygon) < 3:
        return _masked(frame, frame.valid, "seat", 0)
    poly = Polygon(np.asarray(seat_polygon, dtype=float))
    if not poly.is_valid or poly.area <= 0:
        return _masked(frame, frame.valid, "seat", 0)
    valid = frame.valid.copy()
    removed = 0
    for e, (a, b) in enumerate(frame.edge_ids):
        if a not in leg_ids and b not in leg_ids:
            continue
        for i in range(frame.samples_per_edge):
            if valid[e, i] and poly.contains(Point(frame.points[e, i])):
                valid[e, i] = False
                removed += 1
    return _masked(frame, valid, "seat", removed)


def derive_pose_quadrant(
    keypoints_2d: dict[int, tuple[float, float]],
    back_ids: tuple[int, ...],
    front_ids: tuple[int, ...],
) -> int | None:
    """Quadrant (0..3) of the 2D back-to-front orientation vector, or None when
    the vector is degenerate. Quadrants count counterclockwise from +u."""
    back = np.mean([keypoints_2d[i] for i in back_ids], axis=0)
    front = np.mean([keypoints_2d[i] for i in front_ids], axis=0)
    vec = front - back
    if np.hypot(*vec) < 1e-9:
        return None
    # image v grows downward; flip so quadrants follow the usual orientation
    angle = np.arctan2(-vec[1], vec[0]) % (2 * np.pi)
    return int(angle // (np.pi / 2))


def prune_self_occluded_legs(
    frame: SkeletalFrame,
    pose_quadrant: int | None,
    leg_adjacency: dict[int, set[int]],
) -> SkeletalFrame:
    """Remove samples on legs the quadrant table designates occluded.

    `leg_adjacency` maps a pose quadrant to the set of occluded leg keypoint
    ids; it ships as data since the occlusion pattern is a per-class heuristic.
    A None quadrant (degenerate orientation vector) prunes nothing and records
    a warning.
    """
    if pose_quadrant is None:
        return _masked(frame, frame.valid, "self_occlusion", 0, warn="degenerate quadrant")
    occluded = leg_adjacency.get(pose_quadrant, set())
    if not occluded:
        return _masked(frame, frame.valid, "self_occlusion", 0)
    valid = frame.valid.copy()
    removed = 0
    for e, (a, b) in enumerate(frame.edge_ids):
        if a in occluded or b in occluded:
            removed += int(valid[e].sum())
            valid[e] = False
    return _masked(frame, valid, "self_occlusion", removed)


@dataclass(frozen=True)
class CorrespondenceSet:
    pairs: tuple[CorrespondencePair, ...]
    provenance: dict[str, int] = field(default_factory=dict)

    @property
    def positives(self) -> list[CorrespondencePair]:
        return [p for p in self.pairs if p.s == 1]

    @property
    def negatives(self) -> list[CorrespondencePair]:
        return [p for p in self.pairs if p.s == 0]


def pair_frames(
    fa: SkeletalFrame,
    fb: SkeletalFrame,
    negatives_per_positive: int = 1,
    seed: int = 0,
) -> CorrespondenceSet:
    """Positive pairs link surviving same-edge same-index samples; negatives are
    seeded uniform draws of non-corresponding sample pairs."""
    if fa.edge_ids != fb.edge_ids:
        raise ValueError("frames must be built from the same edge order")
    common = fa.valid & fb.valid
    idx = np.argwhere(common)
    pairs: list[CorrespondencePair] = []
    for e, i in idx:
        pairs.append(CorrespondencePair(
            x=(float(fa.points[e, i, 0]), float(fa.points[e, i, 1])),
            x_prime=(float(fb.points[e, i, 0]), float(fb.points[e, i, 1])),
            s=1,
        ))
    provenance = {f"a.{k}": v for k, v in fa.provenance.items()}
    provenance.update({f"b.{k}": v for k, v in fb.provenance.items()})
    provenance["positives"] = len(pairs)
    if not pairs:
        return CorrespondenceSet(pairs=(), provenance={**provenance, "empty": 1})

    rng = np.random.default_rng(seed)
    va = np.argwhere(fa.valid)
    vb = np.argwhere(fb.valid)
    n_neg = negatives_per_positive * len(pairs)
    drawn = 0
    while drawn < n_neg:
        ea, ia = va[rng.integers(len(va))]
        eb, ib = vb[rng.integers(len(vb))]
        if ea == eb and ia == ib:
            continue
        pairs.append(CorrespondencePair(
            x=(float(fa.points[ea, ia, 0]), float(fa.points[ea, ia, 1])),
            x_prime=(float(fb.points[eb, ib, 0]), float(fb.points[eb, ib, 1])),
            s=0,
        ))
        drawn += 1
    provenance["negatives"] = drawn
    return CorrespondenceSet(pairs=tuple(pairs), provenance=provenance)


def perturb_template(
    model: TemplateModel,
    seed: int,
    keypoint_jitter: float = 0.03,
    scale_jitter: float = 0.05,
) -> TemplateModel:
    """A pseudo-real clone: per-keypoint 3D jitter plus a global scale jitter.

    Stands in for a real photographed instance while keeping ground-truth
    correspondences available for validation.
    """
    rng = np.random.default_rng(seed)
    scale = 1.0 + rng.uniform(-scale_jitter, scale_jitter)
    coords = model.keypoints_3d * scale + rng.normal(0.0, keypoint_jitter, size=model.keypoints_3d.shape)
    return TemplateModel(
        class_name=model.class_name,
        keypoint_ids=model.keypoint_ids,
        keypoint_names=model.keypoint_names,
        keypoints_3d=coords,
        skeleton_edges=model.skeleton_edges,
        part_labels=dict(model.part_labels),
    )


def save_pairs_csv(cs: CorrespondenceSet, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["xa_u", "xa_v", "xb_u", "xb_v", "s"])
        for p in cs.pairs:
            writer.writerow([p.x[0], p.x[1], p.x_prime[0], p.x_prime[1], p.s])


def load_pairs_csv(path: str | Path) -> CorrespondenceSet:
    pairs = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            pairs.append(CorrespondencePair(
                x=(float(row["xa_u"]), float(row["xa_v"])),
                x_prime=(float(row["xb_u"]), float(row["xb_v"])),
                s=int(row["s"]),
            ))
    return CorrespondenceSet(pairs=tuple(pairs))
