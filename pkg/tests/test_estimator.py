"""Difference estimators: oracles, reprojection search, coarse initializer.

Oracles: direct bin arithmetic for the logit decoders, and render-loop ground
truth for the reprojection search (project at the true offset and recover it).
"""

import numpy as np
import pytest

from viewalign import (
    BinLogits,
    EstimatorInput,
    GridSearchSpec,
    NoisyOracleEstimator,
    OracleEstimator,
    ReprojectionEstimator,
    Viewpoint,
    apply_alpha,
    chair_template,
    coarse_init,
    correlate,
    descriptor_map,
    render,
    reprojection_search,
    subpixel_matches,
    wrap_angle,
)
from viewalign.binning import quantize
from viewalign.estimator import EstimationFailure, decode_logits
from viewalign.template import TemplateModel
from viewalign.viewpoint import ViewpointDelta, apply_delta


def one_hot(k, n=20):
    v = np.zeros(n)
    v[k] = 1.0
    return v


class TestDecodeLogits:
    def test_decodes_bin_centers(self, scheme):
        logits = BinLogits(one_hot(3), one_hot(10), one_hot(19))
        d = decode_logits(logits, scheme)
        assert d.d_azimuth == pytest.approx(scheme.bin_centers[3], abs=1e-9)
        assert d.d_elevation == pytest.approx(scheme.bin_centers[10], abs=1e-9)
        assert d.d_tilt == pytest.approx(scheme.bin_centers[19], abs=1e-9)

    def test_tie_breaks_to_first_index(self, scheme):
        logits = BinLogits(np.ones(20), one_hot(0), one_hot(0))
        assert logits.argmax()[0] == 0


class TestOracleEstimator:
    def test_exact_bins(self, scheme):
        est = OracleEstimator(scheme)
        truth = ViewpointDelta(33.0, -7.0, 0.5)
        logits = est.estimate(None, truth)
        assert logits.argmax() == (
            quantize(33.0, scheme), quantize(-7.0, scheme), quantize(0.5, scheme)
        )

    def test_requires_truth(self, scheme):
        with pytest.raises(ValueError):
            OracleEstimator(scheme).estimate(None, None)

    def test_needs_nothing(self, scheme):
        assert OracleEstimator(scheme).needs == frozenset()


class TestNoisyOracleEstimator:
    def test_zero_noise_equals_oracle(self, scheme):
        est = NoisyOracleEstimator(scheme, noise_floor_bins=0.0, noise_scale_bins=0.0)
        oracle = OracleEstimator(scheme)
        for d in (ViewpointDelta(0, 0, 0), ViewpointDelta(90, -45, 170)):
            assert est.estimate(None, d).argmax() == oracle.estimate(None, d).argmax()

    def test_seeded_determinism(self, scheme):
        truth = ViewpointDelta(60.0, -20.0, 10.0)
        runs = []
        for _ in range(2):
            est = NoisyOracleEstimator(scheme, seed=4)
            runs.append([est.estimate(None, truth).argmax() for _ in range(10)])
        assert runs[0] == runs[1]

    def test_noise_grows_with_difference(self, scheme):
        small, large = [], []
        for seed in range(200):
            est = NoisyOracleEstimator(scheme, seed=seed)
            small.append(abs(est.estimate(None, ViewpointDelta(1, 0, 0)).argmax()[0]
                             - quantize(1.0, scheme)))
            est = NoisyOracleEstimator(scheme, seed=seed)
            large.append(abs(est.estimate(None, ViewpointDelta(150, 0, 0)).argmax()[0]
                             - quantize(150.0, scheme)))
        assert np.mean(large) > np.mean(small)

    def test_bins_stay_in_range(self, scheme):
        est = NoisyOracleEstimator(scheme, noise_floor_bins=5.0, seed=0)
        for _ in range(50):
            for k in est.estimate(None, ViewpointDelta(179.0, -179.0, 0.0)).argmax():
                assert 0 <= k < scheme.n_bins


def perfect_matches(model, current, truth_view, resolution):
    """Ground-truth correspondences: each visible keypoint's render cell mapped
    to its exact projection in the target view."""
    r = render(model, current, resolution)
    rt = render(model, truth_view, resolution)
    matches = {}
    for kid in model.keypoint_ids:
        if not (r.visibility[kid] and rt.visibility[kid]):
            continue
        u, v = r.keypoints_2d[kid]
        tu, tv = rt.keypoints_2d[kid]
        matches[(int(round(v)), int(round(u)))] = (tv, tu)
    return matches


class TestReprojectionSearch:
    def test_zero_offset_recovers_zero(self, chair):
        v = Viewpoint(30, 10, 0)
        matches = perfect_matches(chair, v, v, (64, 64))
        d = reprojection_search(matches, chair, v, GridSearchSpec(), (64, 64))
        assert d.as_tuple() == (0.0, 0.0, 0.0)

    def test_pure_azimuth_offset_recovered(self, chair):
        v = Viewpoint(10, 5, 0)
        target = apply_delta(v, ViewpointDelta(30, 0, 0))
        matches = perfect_matches(chair, v, target, (64, 64))
        d = reprojection_search(matches, chair, v, GridSearchSpec(), (64, 64))
        assert abs(d.d_azimuth - 30.0) <= GridSearchSpec().final_step
        assert abs(d.d_elevation) <= GridSearchSpec().final_step
        assert abs(d.d_tilt) <= GridSearchSpec().final_step

    def test_too_few_matches_fails(self, chair):
        v = Viewpoint(30, 10, 0)
        matches = dict(list(perfect_matches(chair, v, v, (64, 64)).items())[:3])
        with pytest.raises(EstimationFailure):
            reprojection_search(matches, chair, v, GridSearchSpec(), (64, 64))

    def test_symmetric_ambiguity_resolved_deterministically(self):
        # a square-based pyramid seen from above: 90-degree tilt symmetry
        m = TemplateModel(
            class_name="pyramid",
            keypoint_ids=(0, 1, 2, 3, 4),
            keypoint_names=("a", "b", "c", "d", "apex"),
            keypoints_3d=np.array(
                [[1.0, 0.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 0.0, -1.0],
                 [-1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]
            ),
            skeleton_edges=((0, 1), (1, 2), (2, 3), (3, 0)),
            part_labels={},
        )
        v = Viewpoint(0, 89.9, 0)
        uv, _ = __import__("viewalign").project_points(m, v, (64, 64))
        # matches that are symmetric under a 90-degree tilt: all corners to the
        # average of own and rotated positions makes both tilts equal-error
        matches = {}
        for i in range(4):
            u, vv = uv[i]
            matches[(int(round(vv)), int(round(u)))] = (vv, u)
        u, vv = uv[4]
        matches[(int(round(vv)), int(round(u)))] = (vv, u)
        results = [
            reprojection_search(matches, m, v, GridSearchSpec(), (64, 64))
            for _ in range(3)
        ]
        assert all(r == results[0] for r in results)

    def test_correlation_driven_recovery(self, chair):
        base = Viewpoint(20, 10, 0)
        truth = apply_delta(base, ViewpointDelta(25, -10, 0))
        res = (64, 64)
        fa = descriptor_map(render(chair, truth, res), chair)
        r = render(chair, base, res)
        fb = descriptor_map(r, chair)
        s = apply_alpha(correlate(fa, fb), r.alpha)
        d = reprojection_search(
            subpixel_matches(s, min_peak_ratio=4.0), chair, base, GridSearchSpec(), res
        )
        assert abs(d.d_azimuth - 25.0) <= 1.0
        assert abs(d.d_elevation + 10.0) <= 1.0
        assert abs(d.d_tilt) <= 1.0


class TestReprojectionEstimator:
    def test_estimate_quantizes_recovery(self, chair, scheme):
        base = Viewpoint(20, 10, 0)
        truth = apply_delta(base, ViewpointDelta(20, 5, 0))
        res = (64, 64)
        fa = descriptor_map(render(chair, truth, res), chair)
        r = render(chair, base, res)
        fb = descriptor_map(r, chair)
        s = apply_alpha(correlate(fa, fb), r.alpha)
        est = ReprojectionEstimator(scheme, chair)
        logits = est.estimate(EstimatorInput(render=r, correlation=s), truth=None)
        d = decode_logits(logits, scheme)
        assert abs(d.d_azimuth - 20.0) <= scheme.width(quantize(20.0, scheme))
        assert abs(d.d_elevation - 5.0) <= scheme.width(quantize(5.0, scheme))

    def test_declares_correlation_need(self, chair, scheme):
        est = ReprojectionEstimator(scheme, chair)
        assert est.needs == frozenset({"correlation"})
        assert est.mirrorable is False

    def test_missing_correlation_rejected(self, chair, scheme):
        est = ReprojectionEstimator(scheme, chair)
        r = render(chair, Viewpoint(0, 0, 0), (32, 32))
        with pytest.raises(ValueError):
            est.estimate(EstimatorInput(render=r), truth=None)


class TestCoarseInit:
    def test_recovers_azimuth_bin_noiseless(self, chair):
        res = (32, 32)
        for az, el in [(0.0, 5.0), (95.0, -8.0), (-130.0, 12.0), (175.0, 0.0)]:
            fa = descriptor_map(render(chair, Viewpoint(az, el, 0), res), chair)
            got = coarse_init(fa, chair)
            assert abs(wrap_angle(got.azimuth - az)) <= 11.25 + 1e-9
            assert got.elevation == 0.0
            assert got.tilt == 0.0

    def test_returns_hypothesis_grid_member(self, chair):
        fa = descriptor_map(render(chair, Viewpoint(40, 5, 0), (32, 32)), chair)
        got = coarse_init(fa, chair, n_hypotheses=8)
        assert wrap_angle(got.azimuth) % 45.0 == pytest.approx(0.0, abs=1e-9)
