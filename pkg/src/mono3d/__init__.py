"""Monocular 3D box geometry, grid target encoding, losses and KITTI-style evaluation."""

__version__ = "0.1.0"

from .assignment import CellAssignment, GridSpec, assign
from .boxes import ABBox3D, Box2D, corners_camera, corners_local, local_to_camera, camera_to_local
from .encoding import CellTargets, DecodedDetection, decode, encode
from .geometry import CameraIntrinsics, backproject, project
from .kitti import LabelRecord, parse_calib_file, parse_label_file
from .losses import LossWeights, compute_losses

__all__ = [
    "ABBox3D",
    "Box2D",
    "CameraIntrinsics",
    "CellAssignment",
    "CellTargets",
    "DecodedDetection",
    "GridSpec",
    "LabelRecord",
    "LossWeights",
    "assign",
    "backproject",
    "camera_to_local",
    "compute_losses",
    "corners_camera",
    "corners_local",
    "decode",
    "encode",
    "local_to_camera",
    "parse_calib_file",
    "parse_label_file",
    "project",
]
