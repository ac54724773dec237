"""Switched visual servoing with a learned dynamic-movement fallback.

Camera-space pose control that alternates between an image-based servo
loop (marker visible) and a dynamic movement primitive replaying a
demonstrated approach (marker lost), under an average-dwell-time
supervisor with occlusion-time compensation.
"""

__version__ = "0.1.0"

from .camera import FeatureObservation, Intrinsics, Marker, interaction_matrix, project
from .dmp import (
    DmpGains,
    DmpModel,
    build_basis,
    dmp_accel,
    dmp_gain_certificate,
    learn_weights,
    load_model,
    minjerk_demo,
    rollout,
    save_model,
)
from .errors import (
    ConfigError,
    DegenerateFeatureError,
    FrameMismatchError,
    IllPosedLearningError,
    SimulationDiverged,
)
from .geometry import Pose, StateX, Twist, UnitQuaternion, pose_error, quat_exp, quat_log
from .ibvs import (
    IbvsGains,
    IbvsReference,
    feature_error,
    gain_certificate,
    ibvs_accel,
    pseudo_inverse,
    reference_from_goal,
)
from .lyapunov import V_d, V_v, envelope_check, mlf_constants, ultimate_bound
from .sim import EnvelopeSettings, RunResult, Scenario, SimRecord, Simulator, run
from .switchctl import SwitchConfig, SwitchState, decide, dwell_time, initial_state, verify_dwell

__all__ = [
    "ConfigError",
    "DegenerateFeatureError",
    "DmpGains",
    "DmpModel",
    "EnvelopeSettings",
    "FeatureObservation",
    "FrameMismatchError",
    "IbvsGains",
    "IbvsReference",
    "IllPosedLearningError",
    "Intrinsics",
    "Marker",
    "Pose",
    "RunResult",
    "Scenario",
    "SimRecord",
    "SimulationDiverged",
    "Simulator",
    "StateX",
    "SwitchConfig",
    "SwitchState",
    "Twist",
    "UnitQuaternion",
    "V_d",
    "V_v",
    "build_basis",
    "decide",
    "dmp_accel",
    "dmp_gain_certificate",
    "dwell_time",
    "envelope_check",
    "feature_error",
    "gain_certificate",
    "ibvs_accel",
    "initial_state",
    "interaction_matrix",
    "learn_weights",
    "load_model",
    "minjerk_demo",
    "mlf_constants",
    "pose_error",
    "project",
    "pseudo_inverse",
    "quat_exp",
    "quat_log",
    "reference_from_goal",
    "rollout",
    "run",
    "save_model",
    "ultimate_bound",
    "verify_dwell",
]
