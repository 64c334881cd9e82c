"""Ground-plane and 3D IoU, average precision, and box error metrics."""

from .ap import APAccumulator, MatchConfig, average_precision, match_frame
from .errors import ErrorAccumulator, localization_errors, nearest_pairs, size_orientation_errors
from .iou import clip_convex, iou, iou_3d, iou_bev, polygon_area
from .report import EvalReport, EvalSettings, evaluate, evaluate_frame

__all__ = [
    "APAccumulator",
    "ErrorAccumulator",
    "EvalReport",
    "EvalSettings",
    "MatchConfig",
    "average_precision",
    "clip_convex",
    "evaluate",
    "evaluate_frame",
    "iou",
    "iou_3d",
    "iou_bev",
    "localization_errors",
    "match_frame",
    "nearest_pairs",
    "polygon_area",
    "size_orientation_errors",
]
