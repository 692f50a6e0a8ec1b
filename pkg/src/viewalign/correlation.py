"""Normalized pairwise feature correlation and correspondence machinery.

The correlation score between a source cell (i, j) of map A and a target cell
(i', j') of map B is the clamped dot product of their descriptors, normalized
per target cell over all source cells:

    S(i, j, i', j') = <A(i,j), B(i',j')>+ / sqrt(sum_{k,l} <A(k,l), B(i',j')>+^2)

Ambiguous correspondences that match k source cells equally score 1/sqrt(k),
which is the penalization the normalization exists to provide. Negative raw
dot products are clamped to zero before normalization, and target cells with a
zero denominator yield all-zero slices.

The heavy lifting is one GEMM over the flattened cell grids, which is blocked
and multithreaded by the BLAS backend; `bench-correlate` in the CLI tracks
throughput in correlation cells per second.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FeatureMap",
    "CorrelationTensor",
    "CorrespondencePair",
    "correlate",
    "apply_alpha",
    "contrastive_loss",
    "contrastive_loss_grad",
    "best_matches",
    "subpixel_matches",
    "transfer_labels",
    "average_pool_tensor",
    "save_tensor",
    "load_tensor",
]

NORM_TOL = 1e-6


@dataclass(frozen=True)
class FeatureMap:
    """An (h, w, d) grid of descriptors, one per spatial cell."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError(f"feature map must be (h, w, d), got shape {v.shape}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        norms = np.linalg.norm(self.values, axis=2)
        return bool(np.all(np.abs(norms - 1.0) <= tol))

    @classmethod
    def normalized(cls, values: np.ndarray) -> "FeatureMap":
        v = np.asarray(values, dtype=float)
        norms = np.linalg.norm(v, axis=2, keepdims=True)
        if np.any(norms <= 0):
            raise ValueError("cannot normalize a zero descriptor")
        return cls(v / norms)


@dataclass(frozen=True)
class CorrelationTensor:
    """Correlation scores of shape (h, w, h*w); last axis indexes target cells
    in row-major order."""

    values: np.ndarray = field(repr=False)
    source_shape: tuple[int, int] = (0, 0)
    target_shape: tuple[int, int] = (0, 0)

    def slice_for_target(self, i: int, j: int) -> np.ndarray:
        th, tw = self.target_shape
        return self.values[:, :, i * tw + j]


@dataclass(frozen=True)
class CorrespondencePair:
    """A labeled location pair: x on image a, x_prime on image b, polarity s."""

    x: tuple[float, float]        # (u, v) pixels on a
    x_prime: tuple[float, float]  # (u, v) pixels on b
    s: int                        # 1 positive, 0 negative


def correlate(fa: FeatureMap, fb: FeatureMap) -> CorrelationTensor:
    """Normalized correlation of every source cell of fa with every target cell
    of fb."""
    ha, wa, da = fa.shape
    hb, wb, db = fb.shape
    if da != db:
        raise ValueError(f"descriptor dims differ: {da} vs {db}")
    if (ha, wa) != (hb, wb):
        raise ValueError(f"spatial shapes differ: {(ha, wa)} vs {(hb, wb)}")
    if not (fa.is_normalized() and fb.is_normalized()):
        raise ValueError("feature maps must be L2-normalized per cell")

    a = fa.values.reshape(ha * wa, da)
    b = fb.values.reshape(hb * wb, db)
    raw = a @ b.T  # (source, target)
    np.maximum(raw, 0.0, out=raw)
    denom = np.sqrt(np.einsum("st,st->t", raw, raw))
    # zero-denominator targets keep an all-zero slice
    denom[denom == 0.0] = np.inf
    raw /= denom[None, :]
    return CorrelationTensor(
        values=raw.reshape(ha, wa, hb * wb),
        source_shape=(ha, wa),
        target_shape=(hb, wb),
    )


def apply_alpha(s: CorrelationTensor, alpha: np.ndarray) -> CorrelationTensor:
    """Zero the slices of target cells masked out by the alpha map."""
    alpha = np.asarray(alpha)
    if alpha.shape != s.target_shape:
        raise ValueError(f"alpha shape {alpha.shape} != target grid {s.target_shape}")
    keep = alpha.reshape(-1).astype(bool)
    values = s.values * keep[None, None, :]
    return CorrelationTensor(values=values, source_shape=s.source_shape, target_shape=s.target_shape)


def _descriptor_at(fm: FeatureMap, loc: tuple[float, float]) -> np.ndarray:
    h, w, _ = fm.shape
    u, v = loc
    col = int(round(u))
    row = int(round(v))
    if not (0 <= col < w and 0 <= row < h):
        raise ValueError(f"pair location {loc} outside {h}x{w} map")
    return fm.values[row, col]


def contrastive_loss(
    fa: FeatureMap, fb: FeatureMap, pairs: list[CorrespondencePair], margin: float
) -> float:
    """Correspondence contrastive loss over labeled pairs (nearest-cell sampling).

    (1/2N) * sum_i [ s_i * ||fa(x) - fb(x')||^2
                     + (1 - s_i) * max(0, m - ||fa(x) - fb(x')||^2) ]
    """
    loss, _, _ = contrastive_loss_grad(fa, fb, pairs, margin)
    return loss


def contrastive_loss_grad(
    fa: FeatureMap, fb: FeatureMap, pairs: list[CorrespondencePair], margin: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus analytic gradients w.r.t. every descriptor entry of both maps."""
    if not pairs:
        raise ValueError("pair list must be non-empty")
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin}")
    n = len(pairs)
    ga = np.zeros(fa.shape)
    gb = np.zeros(fb.shape)
    total = 0.0
    ha, wa, _ = fa.shape
    hb, wb, _ = fb.shape
    for p in pairs:
        da = _descriptor_at(fa, p.x)
        db = _descriptor_at(fb, p.x_prime)
        diff = da - db
        dist2 = float(diff @ diff)
        ra, ca = int(round(p.x[1])), int(round(p.x[0]))
        rb, cb = int(round(p.x_prime[1])), int(round(p.x_prime[0]))
        if p.s == 1:
            total += dist2
            ga[ra, ca] += diff / n
            gb[rb, cb] -= diff / n
        else:
            hinge = margin - dist2
            if hinge > 0:
                total += hinge
                ga[ra, ca] -= diff / n
                gb[rb, cb] += diff / n
    return total / (2.0 * n), ga, gb


def best_matches(s: CorrelationTensor) -> dict[tuple[int, int], tuple[int, int]]:
    """Argmax source cell per target cell; row-major tie-breaking; all-zero
    target slices produce no match."""
    sh, sw = s.source_shape
    th, tw = s.target_shape
    flat = s.values.reshape(sh * sw, th * tw)
    best = np.argmax(flat, axis=0)
    score = flat[best, np.arange(th * tw)]
    out: dict[tuple[int, int], tuple[int, int]] = {}
    for t in range(th * tw):
        if score[t] <= 0.0:
            continue
        out[(t // tw, t % tw)] = (int(best[t]) // sw, int(best[t]) % sw)
    return out


def subpixel_matches(
    s: CorrelationTensor,
    min_peak_ratio: float = 0.0,
) -> dict[tuple[int, int], tuple[float, float]]:
    """Like best_matches, but each matched source location is refined to the
    correlation-weighted centroid of the 3x3 window around the argmax cell.

    With min_peak_ratio > 0, targets whose best score is below that multiple
    of their slice's mean are dropped: a near-flat slice means the target cell
    found no distinctive counterpart (e.g. its content is occluded in the
    source), and its argmax is noise rather than a correspondence.
    """
    sh, sw = s.source_shape
    th, tw = s.target_shape
    flat = s.values.reshape(sh * sw, th * tw)
    mass = flat.sum(axis=0)
    nonzero = np.flatnonzero(mass > 0.0)
    sub = flat[:, nonzero]  # argmax only the columns that can match
    best_nz = np.argmax(sub, axis=0)
    score = sub[best_nz, np.arange(nonzero.size)]
    keep = score > 0.0
    if min_peak_ratio > 0.0:
        keep &= score * sh * sw >= min_peak_ratio * mass[nonzero]
    best = np.zeros(th * tw, dtype=int)
    best[nonzero] = best_nz
    refined: dict[tuple[int, int], tuple[float, float]] = {}
    for t in nonzero[keep]:
        sl = s.slice_for_target(t // tw, t % tw)
        r0, c0 = int(best[t]) // sw, int(best[t]) % sw
        rows = slice(max(r0 - 1, 0), min(r0 + 2, sh))
        cols = slice(max(c0 - 1, 0), min(c0 + 2, sw))
        win = sl[rows, cols]
        rr, cc = np.mgrid[rows, cols]
        total = win.sum()
        refined[(t // tw, t % tw)] = (
            float((rr * win).sum() / total),
            float((cc * win).sum() / total),
        )
    return refined


def transfer_labels(
    matches: dict[tuple[int, int], tuple[int, int]],
    source_labels: dict[tuple[int, int], int],
) -> dict[tuple[int, int], int]:
    """Copy each matched source cell's part label onto its target cell."""
    out = {}
    for target, source in matches.items():
        if source in source_labels:
            out[target] = source_labels[source]
    return out


def average_pool_tensor(s: CorrelationTensor, block: int) -> np.ndarray:
    """Fixed average-pooling compaction of the source grid (stand-in for a
    learned compression); returns (ceil(h/b), ceil(w/b), h*w)."""
    sh, sw = s.source_shape
    oh = -(-sh // block)
    ow = -(-sw // block)
    out = np.zeros((oh, ow, s.values.shape[2]))
    for bi in range(oh):
        for bj in range(ow):
            patch = s.values[bi * block:(bi + 1) * block, bj * block:(bj + 1) * block]
            out[bi, bj] = patch.mean(axis=(0, 1))
    return out


_MAGIC = b"VACT"


def save_tensor(s: CorrelationTensor, path: str | Path) -> None:
    """Binary layout: magic 'VACT', four little-endian int32 (source h, w,
    target h, w), then row-major little-endian float32 values."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<4i", *s.source_shape, *s.target_shape))
        f.write(s.values.astype("<f4").tobytes(order="C"))


def load_tensor(path: str | Path) -> CorrelationTensor:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a correlation tensor file")
    sh, sw, th, tw = struct.unpack("<4i", raw[4:20])
    values = np.frombuffer(raw[20:], dtype="<f4").astype(float)
    return CorrelationTensor(
        values=values.reshape(sh, sw, th * tw),
        source_shape=(sh, sw),
        target_shape=(th, tw),
    )
