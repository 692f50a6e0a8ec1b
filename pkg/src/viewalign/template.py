"""Annotated 3D template models: sparse keypoints, skeleton edges, part labels.

A template is the single per-class reference wireframe. The on-disk format is
a versioned JSON document:

    {
      "format": "viewalign-template",
      "version": 1,
      "class_name": "chair",
      "keypoints": [{"id": 0, "name": "seat_fl", "xyz": [x, y, z]}, ...],
      "skeleton_edges": [[0, 1], ...],        # fixed order, referenced by datagen
      "part_labels": {"0": 0, "1": 1, ...}    # keypoint id -> part id
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["TemplateModel", "load_template", "save_template", "chair_template"]

FORMAT_NAME = "viewalign-template"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TemplateModel:
    class_name: str
    keypoint_ids: tuple[int, ...]
    keypoint_names: tuple[str, ...]
    keypoints_3d: np.ndarray = field(repr=False)  # (n, 3), row order = keypoint_ids
    skeleton_edges: tuple[tuple[int, int], ...] = ()
    part_labels: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        coords = np.asarray(self.keypoints_3d, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"keypoints_3d must be (n, 3), got {coords.shape}")
        if len(set(self.keypoint_ids)) != len(self.keypoint_ids):
            raise ValueError("keypoint ids must be unique")
        if coords.shape[0] != len(self.keypoint_ids):
            raise ValueError("keypoints_3d rows must match keypoint_ids")
        if coords.shape[0] < 4:
            raise ValueError("template needs at least 4 keypoints")
        centered = coords - coords.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 3:
            raise ValueError("template keypoints must not be coplanar")
        known = set(self.keypoint_ids)
        for a, b in self.skeleton_edges:
            if a not in known or b not in known:
                raise ValueError(f"skeleton edge ({a}, {b}) references unknown keypoint")
        coords.setflags(write=False)
        object.__setattr__(self, "keypoints_3d", coords)

    @property
    def n_keypoints(self) -> int:
        return len(self.keypoint_ids)

    def index_of(self, keypoint_id: int) -> int:
        return self.keypoint_ids.index(keypoint_id)

    def point(self, keypoint_id: int) -> np.ndarray:
        return self.keypoints_3d[self.index_of(keypoint_id)]

    @property
    def radius(self) -> float:
        """Largest keypoint distance from the model centroid."""
        centered = self.keypoints_3d - self.keypoints_3d.mean(axis=0)
        return float(np.linalg.norm(centered, axis=1).max())


def save_template(model: TemplateModel, path: str | Path) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "class_name": model.class_name,
        "keypoints": [
            {"id": i, "name": n, "xyz": [float(c) for c in xyz]}
            for i, n, xyz in zip(model.keypoint_ids, model.keypoint_names, model.keypoints_3d)
        ],
        "skeleton_edges": [list(e) for e in model.skeleton_edges],
        "part_labels": {str(k): v for k, v in model.part_labels.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_template(path: str | Path) -> TemplateModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a {FORMAT_NAME} document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')!r}")
    kps = doc["keypoints"]
    return TemplateModel(
        class_name=doc["class_name"],
        keypoint_ids=tuple(k["id"] for k in kps),
        keypoint_names=tuple(k["name"] for k in kps),
        keypoints_3d=np.array([k["xyz"] for k in kps], dtype=float),
        skeleton_edges=tuple((int(a), int(b)) for a, b in doc["skeleton_edges"]),
        part_labels={int(k): int(v) for k, v in doc["part_labels"].items()},
    )


FRAME_PART = 0
LEG_PART = 1


def chair_template() -> TemplateModel:
    """The shipped two-part chair wireframe: frame (seat + back) and legs.

    y is up; the seat is a unit square at y = 0.5, the backrest rises over the
    rear edge, and four legs drop to y = -0.5.
    """
    names_points = [
        ("seat_fl", (-0.5, 0.5, 0.5)),
        ("seat_fr", (0.5, 0.5, 0.5)),
        ("seat_bl", (-0.5, 0.5, -0.5)),
        ("seat_br", (0.5, 0.5, -0.5)),
        ("back_tl", (-0.5, 1.5, -0.55)),
        ("back_tr", (0.5, 1.5, -0.55)),
        ("leg_fl", (-0.5, -0.5, 0.5)),
        ("leg_fr", (0.5, -0.5, 0.5)),
        ("leg_bl", (-0.5, -0.5, -0.5)),
        ("leg_br", (0.5, -0.5, -0.5)),
    ]
    edges = (
        (0, 1), (1, 3), (3, 2), (2, 0),  # seat perimeter
        (2, 4), (3, 5), (4, 5),          # backrest
        (0, 6), (1, 7), (2, 8), (3, 9),  # legs
    )
    parts = {i: FRAME_PART for i in range(6)}
    parts.update({i: LEG_PART for i in range(6, 10)})
    return TemplateModel(
        class_name="chair",
        keypoint_ids=tuple(range(10)),
        keypoint_names=tuple(n for n, _ in names_points),
        keypoints_3d=np.array([p for _, p in names_points], dtype=float),
        skeleton_edges=edges,
        part_labels=parts,
    )
