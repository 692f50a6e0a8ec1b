"""Non-uniform quantization of wrapped angle differences.

Oracles: closed-form companding formulas evaluated with math (not the
vectorized implementation), and exhaustive scans over degree grids.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viewalign import build_scheme, compand, expand, quantize, dequantize
from viewalign.binning import bin_table_rows


def oracle_compand(d: float, mu: float) -> float:
    x = d / 180.0
    return math.copysign(math.log(1.0 + mu * abs(x)) / math.log(1.0 + mu), x)


def oracle_expand(c: float, mu: float) -> float:
    return 180.0 * math.copysign(((1.0 + mu) ** abs(c) - 1.0) / mu, c)


class TestCompanding:
    @given(st.floats(-180, 180), st.floats(min_value=1.0, max_value=1e4))
    def test_matches_scalar_oracle(self, d, mu):
        assert compand(d, mu) == pytest.approx(oracle_compand(d, mu), abs=1e-12)
        c = compand(d, mu)
        assert expand(c, mu) == pytest.approx(oracle_expand(c, mu), abs=1e-9)

    @given(st.floats(-180, 180))
    def test_round_trip(self, d):
        assert expand(compand(d)) == pytest.approx(d, abs=1e-9)

    def test_round_trip_dense_grid(self):
        d = np.arange(-180.0, 180.0 + 0.05, 0.1)
        assert np.allclose(expand(compand(d)), d, atol=1e-9)

    @given(st.floats(-180, 179), st.floats(min_value=1.0, max_value=1e4))
    def test_monotone(self, d, mu):
        assert compand(d + 0.5, mu) > compand(d, mu)

    def test_odd_symmetry(self):
        d = np.linspace(0, 180, 50)
        assert np.allclose(compand(-d), -compand(d), atol=1e-12)

    def test_endpoints(self):
        assert compand(180.0) == pytest.approx(1.0, abs=1e-12)
        assert compand(-180.0) == pytest.approx(-1.0, abs=1e-12)
        assert compand(0.0) == 0.0


class TestBuildScheme:
    def test_default_shape(self, scheme):
        assert scheme.n_bins == 20
        assert scheme.mu == 255.0
        assert scheme.bin_edges.shape == (21,)
        assert scheme.bin_centers.shape == (20,)

    def test_edges_span_and_increase(self, scheme):
        assert scheme.bin_edges[0] == -180.0
        assert scheme.bin_edges[-1] == 180.0
        assert np.all(np.diff(scheme.bin_edges) > 0)

    def test_edges_are_expanded_uniform_grid(self, scheme):
        for k, edge in enumerate(scheme.bin_edges[1:-1], start=1):
            c = -1.0 + 2.0 * k / scheme.n_bins
            assert edge == pytest.approx(oracle_expand(c, scheme.mu), abs=1e-9)

    def test_widths_grow_away_from_zero(self, scheme):
        widths = np.diff(scheme.bin_edges)
        half = scheme.n_bins // 2
        assert np.all(np.diff(widths[half:]) > 0)  # growing above zero
        assert np.all(np.diff(widths[:half]) < 0)  # shrinking toward zero

    def test_width_monotonicity_random_schemes(self, rng):
        for _ in range(10):
            n = 2 * int(rng.integers(2, 40))
            mu = float(rng.uniform(1.0, 2000.0))
            widths = np.diff(build_scheme(n, mu).bin_edges)
            half = n // 2
            assert np.all(np.diff(widths[half:]) > 0)
            assert np.all(np.diff(widths[:half]) < 0)

    def test_centers_are_degree_midpoints(self, scheme):
        mids = (scheme.bin_edges[:-1] + scheme.bin_edges[1:]) / 2.0
        assert np.allclose(scheme.bin_centers, mids, atol=0)

    def test_finest_half_width_value(self, scheme):
        # closed form: the innermost bin is [0, expand(2/n)] for even n
        e = oracle_expand(2.0 / 20.0, 255.0)
        assert scheme.finest_half_width == pytest.approx(e / 2.0, abs=1e-12)
        assert scheme.finest_half_width == pytest.approx(0.26156510350314677, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 5, 0, -4])
    def test_rejects_bad_bin_counts(self, n):
        with pytest.raises(ValueError):
            build_scheme(n, 255.0)

    def test_rejects_bad_mu(self):
        with pytest.raises(ValueError):
            build_scheme(20, 0.0)

    def test_immutable_arrays(self, scheme):
        with pytest.raises(ValueError):
            scheme.bin_edges[0] = 0.0


class TestQuantize:
    @given(st.floats(min_value=-179.999, max_value=180.0))
    def test_bin_contains_value(self, d):
        scheme = build_scheme()
        k = quantize(d, scheme)
        assert 0 <= k < scheme.n_bins
        lo, hi = scheme.bin_edges[k], scheme.bin_edges[k + 1]
        assert lo <= d <= hi
        if d < hi and d != 180.0:
            assert lo <= d < hi  # half-open except at +180

    def test_top_edge_closed(self, scheme):
        assert quantize(180.0, scheme) == scheme.n_bins - 1

    def test_out_of_range_rejected(self, scheme):
        with pytest.raises(ValueError):
            quantize(-180.0, scheme)
        with pytest.raises(ValueError):
            quantize(180.0001, scheme)

    def test_zero_lands_in_inner_bin(self, scheme):
        k = quantize(0.0, scheme)
        assert k == scheme.n_bins // 2  # bin starting at 0

    @given(st.floats(min_value=-179.999, max_value=180.0))
    @settings(max_examples=200)
    def test_round_trip_error_within_half_width(self, d):
        scheme = build_scheme()
        k = quantize(d, scheme)
        assert abs(d - dequantize(k, scheme)) <= scheme.width(k) / 2.0 + 1e-12

    def test_integer_degrees_error_bound(self, scheme):
        for d in range(-179, 181):
            k = quantize(float(d), scheme)
            err = abs(d - dequantize(k, scheme))
            assert err <= scheme.width(k) / 2.0 + 1e-12

    def test_dequantize_rejects_bad_index(self, scheme):
        with pytest.raises(IndexError):
            dequantize(-1, scheme)
        with pytest.raises(IndexError):
            dequantize(scheme.n_bins, scheme)


class TestBinTable:
    def test_rows_describe_scheme(self, scheme):
        rows = bin_table_rows(scheme)
        assert len(rows) == scheme.n_bins
        for k, lo, center, hi in rows:
            assert lo == scheme.bin_edges[k]
            assert center == scheme.bin_centers[k]
            assert hi == scheme.bin_edges[k + 1]
