"""Vision-based speed and separation monitoring for collaborative robots.

The package computes separation budgets, extracts human body points from depth
frames, limits robot velocity per body part, and replays work cells in a
deterministic fixed-step simulator.
"""

from hrsf.errors import (
    ConfigurationError,
    HRSFError,
    IncompleteCycleError,
    InvalidDepthError,
    NoValidDepthError,
    SimulationTimeout,
)
from hrsf.kinematics import (
    DHJoint,
    DHParameterTable,
    JointConfiguration,
    LinkPoses,
    ProtectiveHull,
    compute_protective_hull,
    forward_kinematics,
    inflate_hull,
    point_hull_distance,
)
from hrsf.perception import (
    BODY_PARTS,
    BodyPart,
    BodyPointSet,
    CameraExtrinsics,
    CameraIntrinsics,
    DepthFrame,
    extract_body_points,
    min_depth_point,
    roi_mean_depth,
)
from hrsf.regulator import RegulatorState, SafetyDecision, VelocityLimitTable, evaluate, map_label_to_limit
from hrsf.safety import (
    BudgetMode,
    HumanSpeedPolicy,
    MethodClass,
    MethodName,
    MethodProfile,
    SafetyConstants,
    SeparationBudget,
    builtin_profiles,
    compute_budget,
    compute_C,
    compute_Sh,
)

__version__ = "0.1.0"
