"""Angle arithmetic and rotation geometry for (azimuth, elevation, tilt) viewpoints.

All angles are stored in degrees in the half-open interval (-180, 180];
radians appear only inside trigonometric calls.

Rotation convention (fixed globally, everything downstream depends on it):
the camera sits on a sphere of radius rho looking at the origin, and the
world-to-camera rotation is R = Rz(tilt) @ Rx(-elevation) @ Ry(azimuth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Viewpoint",
    "ViewpointDelta",
    "wrap_angle",
    "delta",
    "apply_delta",
    "to_rotation",
    "rotation_matrices",
    "geodesic_distance",
]


def wrap_angle(raw: float) -> float:
    """Wrap an angle in degrees to (-180, 180]; the boundary maps to +180."""
    if not math.isfinite(raw):
        raise ValueError(f"angle must be finite, got {raw!r}")
    return 180.0 - (180.0 - raw) % 360.0


@dataclass(frozen=True)
class Viewpoint:
    """An object viewpoint: azimuth, elevation and in-plane tilt in degrees."""

    azimuth: float
    elevation: float
    tilt: float

    def __post_init__(self):
        object.__setattr__(self, "azimuth", wrap_angle(self.azimuth))
        object.__setattr__(self, "elevation", wrap_angle(self.elevation))
        object.__setattr__(self, "tilt", wrap_angle(self.tilt))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.azimuth, self.elevation, self.tilt)


@dataclass(frozen=True)
class ViewpointDelta:
    """Per-axis wrapped signed difference between two viewpoints, in degrees."""

    d_azimuth: float
    d_elevation: float
    d_tilt: float

    def __post_init__(self):
        object.__setattr__(self, "d_azimuth", wrap_angle(self.d_azimuth))
        object.__setattr__(self, "d_elevation", wrap_angle(self.d_elevation))
        object.__setattr__(self, "d_tilt", wrap_angle(self.d_tilt))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.d_azimuth, self.d_elevation, self.d_tilt)

    def abs_max(self) -> float:
        return max(abs(self.d_azimuth), abs(self.d_elevation), abs(self.d_tilt))


def delta(a: Viewpoint, b: Viewpoint) -> ViewpointDelta:
    """Componentwise wrapped difference b - a, so apply_delta(a, delta(a, b)) == b."""
    return ViewpointDelta(
        b.azimuth - a.azimuth,
        b.elevation - a.elevation,
        b.tilt - a.tilt,
    )


def apply_delta(a: Viewpoint, d: ViewpointDelta) -> Viewpoint:
    """Componentwise wrapped sum a + d."""
    return Viewpoint(
        a.azimuth + d.d_azimuth,
        a.elevation + d.d_elevation,
        a.tilt + d.d_tilt,
    )


def to_rotation(v: Viewpoint) -> np.ndarray:
    """World-to-camera rotation matrix Rz(tilt) @ Rx(-elevation) @ Ry(azimuth)."""
    return rotation_matrices(
        np.asarray(v.azimuth), np.asarray(v.elevation), np.asarray(v.tilt)
    )


def rotation_matrices(
    azimuth: np.ndarray, elevation: np.ndarray, tilt: np.ndarray
) -> np.ndarray:
    """Batched rotation construction; inputs broadcast, output shape (..., 3, 3)."""
    az = np.deg2rad(np.asarray(azimuth, dtype=float))
    el = np.deg2rad(np.asarray(elevation, dtype=float))
    ti = np.deg2rad(np.asarray(tilt, dtype=float))
    az, el, ti = np.broadcast_arrays(az, el, ti)

    ca, sa = np.cos(az), np.sin(az)
    ce, se = np.cos(-el), np.sin(-el)
    ct, st = np.cos(ti), np.sin(ti)
    z = np.zeros_like(ca)
    o = np.ones_like(ca)

    ry = np.stack(
        [np.stack([ca, z, sa], -1), np.stack([z, o, z], -1), np.stack([-sa, z, ca], -1)],
        -2,
    )
    rx = np.stack(
        [np.stack([o, z, z], -1), np.stack([z, ce, -se], -1), np.stack([z, se, ce], -1)],
        -2,
    )
    rz = np.stack(
        [np.stack([ct, -st, z], -1), np.stack([st, ct, z], -1), np.stack([z, z, o], -1)],
        -2,
    )
    return rz @ rx @ ry


def geodesic_distance(a: Viewpoint, b: Viewpoint) -> float:
    """Geodesic rotation distance between two viewpoints, in degrees in [0, 180]."""
    ra = to_rotation(a)
    rb = to_rotation(b)
    t = (np.trace(ra.T @ rb) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(t, -1.0, 1.0))))
