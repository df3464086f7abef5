"""Direct stereo visual odometry: losses, optimization, evaluation.

Depth maps and camera motion are recovered by minimizing photometric,
disparity, pose-consistency and 3D registration losses with analytic
gradients on synthetic stereo sequences; trajectories and depths are scored
with KITTI-style drift and error metrics.
"""

from .errors import (
    DegenerateConfiguration,
    DegenerateGeometry,
    DimensionMismatch,
    Divergence,
    EmptyMask,
    LengthMismatch,
    MalformedRotation,
    NonPositiveDepth,
    NonPositiveDisparity,
    ParseError,
    StereoVOError,
    TooShort,
    UnsupportedFormat,
)
from .geometry import (
    Intrinsics,
    Point3,
    Pose6DoF,
    RigidTransform,
    StereoRig,
    backproject,
    compose,
    depth_to_disparity_px,
    disparity_to_depth,
    euler_to_matrix,
    invert,
    matrix_to_euler,
    normalize_disparity,
    project,
    transform_point,
)
from .imagegrid import (
    CoordinateMap,
    DepthMap,
    DisparityMap,
    ImageBuffer,
    SampleJacobian,
    bilinear_sample,
    stereo_coordinate_map,
    synthesize,
    temporal_coordinate_map,
)
from .losses import (
    LossValue,
    LossWeights,
    StereoPairObservation,
    disparity_consistency_loss,
    geometric_registration_loss,
    photometric_loss,
    pose_consistency_loss,
    ssim,
    total_loss,
)
from .synthworld import RenderedFrame, SceneSpec, TextureSpec, render_frame, render_sequence
from .optimizer import (
    AdamState,
    FrameObservation,
    JointResult,
    OptimizationProblem,
    Schedule,
    adam_step,
    optimize_depth_stereo,
    optimize_joint,
    optimize_pose_temporal,
)
from .evaluation import (
    DepthEvalReport,
    DriftReport,
    Trajectory,
    align_sim3,
    depth_metrics,
    drift_metrics,
)
from .io_formats import (
    read_config,
    read_depth,
    read_image,
    read_poses,
    write_depth,
    write_image,
    write_poses,
)

__version__ = "0.1.0"
