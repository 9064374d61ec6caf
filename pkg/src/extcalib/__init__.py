"""Extrinsic calibration of calibrated image sequences by incremental reconstruction."""
from .errors import CalibrationError
from .evaluation import PoseErrorReport, evaluate, evaluate_poses
from .five_point import decompose_essential, solve_essential_5pt
from .geometry import CameraIntrinsics, CameraPose
from .p3p import solve_p3p_finsterwalder
from .pipeline import PipelineConfig, Reconstruction, init_pair, register_image, run_sequence
from .ransac import RansacParams, ransac_absolute_pose, ransac_relative_pose
from .synthetic import generate_ring, generate_wall

__all__ = [
    "CalibrationError", "CameraIntrinsics", "CameraPose", "PipelineConfig", "PoseErrorReport",
    "RansacParams", "Reconstruction", "decompose_essential", "evaluate", "evaluate_poses",
    "generate_ring", "generate_wall", "init_pair", "ransac_absolute_pose", "ransac_relative_pose",
    "register_image", "run_sequence", "solve_essential_5pt", "solve_p3p_finsterwalder",
]
