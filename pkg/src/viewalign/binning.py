"""Non-uniform binning of angle differences via mu-law companding.

Differences are normalized to x = d / 180 before companding so the companded
range is exactly [-1, 1]. Bins are the images of uniformly spaced companded
intervals, which allocates fine bins near zero difference and coarse bins far
from it. Bins are half-open [edge_k, edge_{k+1}) with the top edge closed.

Bin centers are the arithmetic midpoints of the bin edges in degree space.
Decoding a bin to its companded midpoint leaves values near the outer edge of
wide bins with an error larger than half the bin width, which breaks the
quantization error bound the alignment loop relies on; degree-space midpoints
bound the error by half the containing bin width exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HALF_RANGE",
    "BinningScheme",
    "compand",
    "expand",
    "build_scheme",
    "quantize",
    "dequantize",
    "bin_table_rows",
]

HALF_RANGE = 180.0


def compand(d, mu: float = 255.0):
    """Map degrees in (-180, 180] to [-1, 1]; odd, strictly increasing."""
    x = np.asarray(d, dtype=float) / HALF_RANGE
    out = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    return float(out) if np.isscalar(d) else out


def expand(c, mu: float = 255.0):
    """Exact inverse of compand: [-1, 1] back to degrees."""
    y = np.asarray(c, dtype=float)
    out = HALF_RANGE * np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu
    return float(out) if np.isscalar(c) else out


@dataclass(frozen=True)
class BinningScheme:
    """Mu-law bin structure for classifying one angle-difference axis."""

    n_bins: int
    mu: float
    bin_edges: np.ndarray = field(repr=False)
    bin_centers: np.ndarray = field(repr=False)
    half_range: float = HALF_RANGE

    @property
    def finest_half_width(self) -> float:
        """Half-width of the innermost bin; the loop's best achievable precision."""
        widths = np.diff(self.bin_edges)
        return float(widths.min() / 2.0)

    def width(self, k: int) -> float:
        return float(self.bin_edges[k + 1] - self.bin_edges[k])


def build_scheme(n_bins: int = 20, mu: float = 255.0) -> BinningScheme:
    """Build a scheme whose edges expand uniformly spaced companded values."""
    if n_bins < 4 or n_bins % 2 != 0:
        raise ValueError(f"n_bins must be an even integer >= 4, got {n_bins}")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    companded_edges = np.linspace(-1.0, 1.0, n_bins + 1)
    edges = expand(companded_edges, mu)
    # pin the exact endpoints against rounding
    edges[0], edges[-1] = -HALF_RANGE, HALF_RANGE
    centers = (edges[:-1] + edges[1:]) / 2.0
    edges.setflags(write=False)
    centers.setflags(write=False)
    return BinningScheme(n_bins=n_bins, mu=float(mu), bin_edges=edges, bin_centers=centers)


def quantize(d: float, scheme: BinningScheme) -> int:
    """Index of the half-open bin [edge_k, edge_{k+1}) containing d; +180 closed."""
    if not -HALF_RANGE < d <= HALF_RANGE:
        raise ValueError(f"difference {d} outside (-180, 180]")
    k = int(np.searchsorted(scheme.bin_edges, d, side="right")) - 1
    return min(k, scheme.n_bins - 1)


def dequantize(k: int, scheme: BinningScheme) -> float:
    """Representative degree value (bin center) for bin index k."""
    if not 0 <= k < scheme.n_bins:
        raise IndexError(f"bin index {k} outside [0, {scheme.n_bins})")
    return float(scheme.bin_centers[k])


def bin_table_rows(scheme: BinningScheme) -> list[tuple[int, float, float, float]]:
    """(index, lower edge, center, upper edge) rows for plotting or CSV dump."""
    return [
        (k, float(scheme.bin_edges[k]), float(scheme.bin_centers[k]),
         float(scheme.bin_edges[k + 1]))
        for k in range(scheme.n_bins)
    ]
