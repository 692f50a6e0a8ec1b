"""Iterative render-and-compare alignment, step by step.

A target view of the chair template is synthesized, the loop starts from a
coarse 16-hypothesis azimuth guess, and each iteration estimates the
remaining viewpoint difference, decodes it through the binning scheme, and
applies the correction. The geodesic rotation error shrinks every round.
"""

from viewalign import (
    NoisyOracleEstimator,
    StopCriteria,
    Viewpoint,
    align,
    build_scheme,
    chair_template,
    descriptor_map,
    render,
)

model = chair_template()
scheme = build_scheme()
truth = Viewpoint(azimuth=130.0, elevation=22.0, tilt=0.0)
target = descriptor_map(render(model, truth, (32, 32)), model)

# The noisy oracle mimics a learned difference estimator: its bin error grows
# with the size of the remaining difference, so early steps are coarse and
# late steps precise.
estimator = NoisyOracleEstimator(scheme, seed=7)
trajectory = align(
    target, model, scheme, estimator,
    stop=StopCriteria(tau=(2.0, 2.0, 2.0), max_iterations=10),
    init="coarse", truth=truth,
)

print(f"truth: az {truth.azimuth:.1f}, el {truth.elevation:.1f}")
print(f"status: {trajectory.status} after {trajectory.iterations} iterations\n")
print(f"{'iter':>4} {'azimuth':>9} {'elevation':>9} {'tilt':>7} "
      f"{'est. step':>22} {'error':>8}")
for r in trajectory.records:
    d = r.delta_hat
    step = f"({d.d_azimuth:+6.1f},{d.d_elevation:+6.1f},{d.d_tilt:+6.1f})"
    bar = "#" * max(1, int(r.geodesic_error / 2))
    print(f"{r.index:>4} {r.viewpoint.azimuth:>9.2f} "
          f"{r.viewpoint.elevation:>9.2f} {r.viewpoint.tilt:>7.2f} "
          f"{step:>22} {r.geodesic_error:>7.2f}  {bar}")

final = trajectory.final_viewpoint
print(f"\nfinal: az {final.azimuth:.2f}, el {final.elevation:.2f}, "
      f"residual error {trajectory.final_error:.3f} deg")
