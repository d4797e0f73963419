"""captrack: category-level 9DoF pose tracking with synthetic oracles."""

from .boxiou import OrientedBox, oriented_iou3d
from .errors import (
    CaptrackError,
    ConfigError,
    DegeneracyError,
    LostTrackError,
    NoConsensusError,
    NonPositiveScaleError,
)
from .fitting import (
    Correspondences,
    RansacParams,
    fit_scale_translation,
    fit_scale_translation_centered,
    fit_symmetric,
    ransac_fit,
    umeyama_2d,
    umeyama_sim3,
)
from .geometry import (
    Pose9,
    Rot3,
    Rot6D,
    Sim3,
    apply_sim,
    axis_endpoint,
    compose_sim,
    euclidean_mean,
    inverse_sim,
    project_to_so3,
    renormalize,
    rot_from_6d,
    rot_to_6d,
    rotation_angle,
    symmetric_rotation_angle,
)
from .metrics import (
    MetricsReport,
    accuracy_5deg5cm,
    corner_loss,
    evaluate_run,
    joint_state,
    rotation_error_metric,
    symmetric_coord_loss,
)
from .oracles import NoiseSpec, OraclePredictor, PerturbSpec, perturb_pose
from .simulator import (
    JointSpec,
    MotionSpec,
    ObjectModel,
    Observation,
    forward_kinematics,
    make_primitive_model,
    render_observation,
    sample_trajectory,
)
from .tracking import (
    PartEstimate,
    TrackerState,
    TrackOptions,
    canonicalize,
    crop_ball,
    delta_of,
    estimate_aspect_ratio,
    init_tracker,
    recover_pose,
    track_step,
)

__version__ = "0.1.0"
