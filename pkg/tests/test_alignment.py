"""The render -> estimate -> refine loop, its trajectory record, and CSV IO."""

import numpy as np
import pytest

from viewalign import (
    NoisyOracleEstimator,
    OracleEstimator,
    StopCriteria,
    Viewpoint,
    align,
    chair_template,
    descriptor_map,
    geodesic_distance,
    localization_session,
    render,
)
from viewalign.alignment import (
    STATUS_CONVERGED,
    STATUS_ESTIMATOR_FAILURE,
    STATUS_ITERATION_LIMIT,
    trajectory_from_csv,
    trajectory_to_csv,
)
from viewalign.estimator import BinLogits, EstimationFailure
from viewalign.viewpoint import ViewpointDelta, apply_delta


def target_map(chair, truth, res=(32, 32)):
    return descriptor_map(render(chair, truth, res), chair)


class FailingEstimator:
    needs = frozenset()

    def estimate(self, inp, truth):
        raise EstimationFailure("no usable matches")


class CountingOracle(OracleEstimator):
    """Oracle that also counts how many estimates were requested."""

    def __init__(self, scheme):
        super().__init__(scheme)
        self.calls = 0

    def estimate(self, inp, truth):
        self.calls += 1
        return super().estimate(inp, truth)


class TestStopCriteria:
    def test_defaults(self):
        s = StopCriteria()
        assert s.tau == (2.0, 2.0, 2.0)
        assert s.max_iterations == 10

    def test_validation(self):
        with pytest.raises(ValueError):
            StopCriteria(tau=(0.0, 2.0, 2.0))
        with pytest.raises(ValueError):
            StopCriteria(max_iterations=0)


class TestAlignWithOracle:
    def test_truth_start_converges_immediately(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        traj = align(
            target_map(chair, truth), chair, scheme, OracleEstimator(scheme),
            init=truth, truth=truth,
        )
        assert traj.status == STATUS_CONVERGED
        assert traj.iterations == 1
        assert traj.records[0].delta_hat.abs_max() <= scheme.finest_half_width + 1e-9

    def test_error_decreases_until_convergence(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        start = apply_delta(truth, ViewpointDelta(120.0, -35.0, 60.0))
        traj = align(
            target_map(chair, truth), chair, scheme, OracleEstimator(scheme),
            init=start, truth=truth,
        )
        assert traj.status == STATUS_CONVERGED
        errors = [r.geodesic_error for r in traj.records] + [traj.final_error]
        for a, b in zip(errors, errors[1:]):
            assert b < a
        assert traj.final_error <= 3 * scheme.finest_half_width

    def test_oracle_skips_correlation_work(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        est = CountingOracle(scheme)
        traj = align(target_map(chair, truth), chair, scheme, est,
                     init=truth, truth=truth)
        assert est.calls == traj.iterations

    def test_trajectory_chains(self, chair, scheme):
        truth = Viewpoint(-60.0, 20.0, 0.0)
        start = Viewpoint(90.0, -20.0, 0.0)
        traj = align(
            target_map(chair, truth), chair, scheme, OracleEstimator(scheme),
            init=start, truth=truth,
        )
        for prev, nxt in zip(traj.records, traj.records[1:]):
            expect = apply_delta(prev.viewpoint, prev.delta_hat)
            assert nxt.viewpoint.as_tuple() == pytest.approx(expect.as_tuple())
        last = traj.records[-1]
        assert traj.final_viewpoint.as_tuple() == pytest.approx(
            apply_delta(last.viewpoint, last.delta_hat).as_tuple()
        )

    def test_iteration_limit_status(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        start = apply_delta(truth, ViewpointDelta(150.0, 0.0, 0.0))
        traj = align(
            target_map(chair, truth), chair, scheme, OracleEstimator(scheme),
            stop=StopCriteria(max_iterations=1), init=start, truth=truth,
        )
        assert traj.status == STATUS_ITERATION_LIMIT
        assert traj.iterations == 1

    def test_estimator_failure_recorded(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        traj = align(
            target_map(chair, truth), chair, scheme, FailingEstimator(),
            init=truth, truth=truth,
        )
        assert traj.status == STATUS_ESTIMATOR_FAILURE
        assert traj.iterations == 1
        assert traj.records[0].delta_hat.as_tuple() == (0.0, 0.0, 0.0)
        assert traj.final_viewpoint == truth
        assert "estimation-failure" in traj.records[0].events[0]

    def test_random_init_is_seeded(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        t1 = align(target_map(chair, truth), chair, scheme, OracleEstimator(scheme),
                   init="random", truth=truth, init_seed=3)
        t2 = align(target_map(chair, truth), chair, scheme, OracleEstimator(scheme),
                   init="random", truth=truth, init_seed=3)
        assert t1.records[0].viewpoint == t2.records[0].viewpoint

    def test_unknown_init_mode_rejected(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        with pytest.raises(ValueError):
            align(target_map(chair, truth), chair, scheme, OracleEstimator(scheme),
                  init="bogus", truth=truth)

    def test_errors_after_iterations(self, chair, scheme):
        truth = Viewpoint(40.0, 10.0, 0.0)
        start = apply_delta(truth, ViewpointDelta(90.0, 0.0, 0.0))
        traj = align(target_map(chair, truth), chair, scheme,
                     OracleEstimator(scheme), init=start, truth=truth)
        after = traj.errors_after_iterations()
        assert len(after) == traj.iterations
        assert after[-1] == traj.final_error


class TestLocalization:
    def test_oracle_localizes_camera(self, chair, scheme):
        truth = Viewpoint(75.0, 15.0, 0.0)
        reference = target_map(chair, truth)
        traj = localization_session(
            reference, chair, scheme, OracleEstimator(scheme),
            start=Viewpoint(-40.0, -10.0, 0.0), truth=truth,
        )
        assert traj.status == STATUS_CONVERGED
        assert geodesic_distance(traj.final_viewpoint, truth) <= 3 * scheme.finest_half_width

    def test_mirrored_delta_signs(self, chair, scheme):
        # one step from a known offset: the camera must move toward the truth
        truth = Viewpoint(30.0, 0.0, 0.0)
        reference = target_map(chair, truth)
        traj = localization_session(
            reference, chair, scheme, OracleEstimator(scheme),
            stop=StopCriteria(max_iterations=1),
            start=Viewpoint(-30.0, 0.0, 0.0), truth=truth,
        )
        assert traj.records[0].delta_hat.d_azimuth > 0


class TestTrajectoryCSV:
    def roundtrip(self, chair, scheme, tmp_path, **kwargs):
        truth = Viewpoint(40.0, 10.0, 0.0)
        start = apply_delta(truth, ViewpointDelta(75.0, -20.0, 0.0))
        traj = align(target_map(chair, truth), chair, scheme,
                     OracleEstimator(scheme), init=start, truth=truth, **kwargs)
        p = tmp_path / "traj.csv"
        trajectory_to_csv(traj, p)
        return traj, trajectory_from_csv(p), p

    def test_round_trip_exact(self, chair, scheme, tmp_path):
        traj, back, _ = self.roundtrip(chair, scheme, tmp_path)
        assert back.status == traj.status
        assert back.iterations == traj.iterations
        for a, b in zip(traj.records, back.records):
            assert a.viewpoint == b.viewpoint  # repr round-trip is exact
            assert a.delta_hat == b.delta_hat
            assert a.geodesic_error == b.geodesic_error
        assert back.final_viewpoint == traj.final_viewpoint

    def test_header(self, chair, scheme, tmp_path):
        _, _, p = self.roundtrip(chair, scheme, tmp_path)
        head = p.read_text().splitlines()[0]
        assert head == "iter,theta,phi,psi,d_theta,d_phi,d_psi,geodesic_error,status"

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("iter,theta,phi,psi,d_theta,d_phi,d_psi,geodesic_error,status\n")
        with pytest.raises(ValueError):
            trajectory_from_csv(p)

    def test_broken_chaining_rejected(self, chair, scheme, tmp_path):
        _, _, p = self.roundtrip(chair, scheme, tmp_path)
        lines = p.read_text().splitlines()
        if len(lines) < 3:
            pytest.skip("trajectory too short to break")
        parts = lines[2].split(",")
        parts[1] = repr(float(parts[1]) + 5.0)  # corrupt a rendered viewpoint
        lines[2] = ",".join(parts)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError):
            trajectory_from_csv(p)
