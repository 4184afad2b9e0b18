"""Closed-form optical flow of the drivable road plane.

Models the dense optical flow that camera geometry and planar vehicle
motion impose on the road surface, validates the closed forms against a
projection oracle, and inverts the model for freespace segmentation and
vehicle pose estimation.
"""

from .errors import (
    BadMagic,
    BehindCameraError,
    CodecError,
    ConfigError,
    DegenerateFit,
    DimensionMismatch,
    EmptyInput,
    EmptyOverlap,
    FsflowError,
    HorizonError,
    InsufficientRows,
    NonFinite,
    OutOfBounds,
    PointBehindCameraError,
    TruncatedFile,
    UnitsMismatch,
    WrongBitDepth,
    WrongChannelCount,
)
from .fitting import (
    CurveFit,
    FitConfig,
    RowProjection,
    fit_fv_curve,
    render_fitted_fv,
    row_projection,
    segment_freespace,
)
from .flow_models import (
    MODEL_NAMES,
    UNITS_DISPLACEMENT,
    UNITS_VELOCITY,
    FlowMap,
    FlowVector,
    PoseDelta,
    VelocityState,
    ackermann_rates,
    displacement_flow,
    displacement_flow_simplified,
    render_flow_map,
    simplest_flows,
    velocity_flow,
    velocity_flow_simplified,
)
from .geometry import (
    EPS_HORIZON,
    CameraIntrinsics,
    GroundPoint,
    LambdaTerms,
    MountConfig,
    backproject_ground,
    lambda12,
    lambda_terms,
    project,
    roll_rotation,
    yaw_rotation,
)
from .metrics import MetricsReport, evaluate
from .pose_estimation import (
    PoseEstimate,
    PoseSearchConfig,
    estimate_pose,
    pose_cost,
)
from .scene_synth import (
    NoiseSpec,
    SceneSpec,
    add_noise,
    flow_oracle,
    insert_obstacle,
    plane_points,
    synth_ground_truth,
)

__version__ = "0.1.0"
