"""Desk-scale simulator of an intelligent whole-arm prosthesis performing a
partitioned block-transfer task, with four control methods, a gesture
pipeline, gaze-based intent estimation, sampling-based planning, and trial
metrics."""

from .kinematics import ArmGeometry, RigidTransform, forward_kinematics, jacobian
from .session import SessionConfig, run_session
from .world import TrialConfig

__version__ = "0.1.0"

__all__ = [
    "ArmGeometry",
    "RigidTransform",
    "SessionConfig",
    "TrialConfig",
    "forward_kinematics",
    "jacobian",
    "run_session",
    "__version__",
]
