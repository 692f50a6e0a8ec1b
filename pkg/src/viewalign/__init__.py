"""viewalign: render-and-compare object viewpoint alignment.

A desk-scale toolkit for iterative viewpoint estimation against a single
annotated 3D wireframe template: mu-law quantized difference classification,
normalized feature correlation, dense correspondence generation, and a
render -> estimate -> refine loop with trajectory recording and metrics.
"""

from .alignment import AlignmentTrajectory, StopCriteria, align, localization_session
from .binning import BinningScheme, build_scheme, compand, dequantize, expand, quantize
from .correlation import (
    CorrelationTensor,
    CorrespondencePair,
    FeatureMap,
    apply_alpha,
    best_matches,
    subpixel_matches,
    contrastive_loss,
    correlate,
    transfer_labels,
)
from .estimator import (
    BinLogits,
    EstimationFailure,
    EstimatorInput,
    GridSearchSpec,
    NoisyOracleEstimator,
    OracleEstimator,
    ReprojectionEstimator,
    coarse_init,
    reprojection_search,
)
from .evaluate import ExperimentConfig, MetricsReport, acc_at, med_err, run_experiment
from .renderer import (
    DisparityMap,
    NoiseSpec,
    Render,
    descriptor_map,
    project_points,
    render,
    stereo_disparity,
)
from .template import TemplateModel, chair_template, load_template, save_template
from .viewpoint import (
    Viewpoint,
    ViewpointDelta,
    apply_delta,
    delta,
    geodesic_distance,
    to_rotation,
    wrap_angle,
)

__version__ = "0.1.0"
