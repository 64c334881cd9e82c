"""Detection matching and interpolated average precision, KITTI style.

Matching is greedy in descending score order within a frame. Ground truths
of the evaluated class that are harder than the regime, neighbouring classes
(Van for Car) and DontCare regions absorb detections without counting them
as false positives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..boxes import ABBox3D
from ..kitti import (
    DEFAULT_THRESHOLDS,
    Difficulty,
    DifficultyThresholds,
    LabelRecord,
    classify_difficulty,
)
from .iou import iou, overlap_2d

NEIGHBOR_CLASSES = {"Car": ("Van",), "Pedestrian": ("Person_sitting",)}
DONTCARE_OVERLAP = 0.5


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.7
    mode: str = "3d"  # "3d" or "bev"
    regime: Difficulty = Difficulty.MODERATE
    interpolation: int = 11  # 11 or 40 recall points
    class_name: str = "Car"
    thresholds: DifficultyThresholds = DEFAULT_THRESHOLDS

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"IoU threshold must lie in (0, 1), got {self.iou_threshold}")
        if self.mode not in ("3d", "bev"):
            raise ValueError(f"mode must be '3d' or 'bev', got {self.mode!r}")
        if self.interpolation not in (11, 40):
            raise ValueError(f"interpolation must be 11 or 40, got {self.interpolation}")
        if self.regime == Difficulty.IGNORED:
            raise ValueError("cannot evaluate the ignored regime")


@dataclass
class APAccumulator:
    """Scored match outcomes and ground-truth count; merging is order independent."""

    scores: list[float] = field(default_factory=list)
    tp: list[bool] = field(default_factory=list)
    n_gt: int = 0

    def merge(self, other: "APAccumulator") -> "APAccumulator":
        return APAccumulator(self.scores + other.scores, self.tp + other.tp, self.n_gt + other.n_gt)

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        """Recall and precision after each detection in descending score order."""
        scores = np.asarray(self.scores, dtype=np.float64)
        tp = np.asarray(self.tp, dtype=bool)
        # Equal scores put false positives first so the result never depends on merge order.
        order = np.lexsort((tp, -scores))
        tp = tp[order]
        tp_cum = np.cumsum(tp)
        fp_cum = np.cumsum(~tp)
        recall = tp_cum / self.n_gt if self.n_gt else np.zeros(len(tp))
        precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
        return recall, precision

    def average_precision(self, interpolation: int = 11) -> float | None:
        if self.n_gt == 0:
            return None
        recall, precision = self.curve()
        if interpolation == 11:
            points = np.arange(11) / 10
        elif interpolation == 40:
            points = np.arange(1, 41) / 40
        else:
            raise ValueError(f"interpolation must be 11 or 40, got {interpolation}")
        total = 0.0
        for r in points:
            reached = precision[recall >= r]
            total += float(reached.max()) if len(reached) else 0.0
        return total / len(points)


@dataclass(frozen=True)
class _Det:
    box: ABBox3D
    ltrb: tuple[float, float, float, float]
    score: float


def _as_det(d) -> _Det:
    if isinstance(d, LabelRecord):
        return _Det(d.box3d(), d.bbox2d, 1.0 if d.score is None else d.score)
    return _Det(d.box3d, d.box2d.ltrb(), d.score)


def _det_class(d) -> str | None:
    return d.class_name if isinstance(d, LabelRecord) else None


def match_frame(dets: Sequence, gts: Sequence[LabelRecord], cfg: MatchConfig) -> APAccumulator:
    """Match one frame's detections (LabelRecords with scores or DecodedDetections)."""
    valid, ignored, dontcare = [], [], []
    neighbors = NEIGHBOR_CLASSES.get(cfg.class_name, ())
    for g in gts:
        if g.is_dontcare:
            dontcare.append(g.bbox2d)
        elif g.class_name == cfg.class_name:
            if classify_difficulty(g, cfg.thresholds) <= cfg.regime:
                valid.append(g.box3d())
            else:
                ignored.append(g.box3d())
        elif g.class_name in neighbors:
            ignored.append(g.box3d())

    cands = [_as_det(d) for d in dets if _det_class(d) in (None, cfg.class_name)]
    cands.sort(key=lambda d: -d.score)
    min_height = cfg.thresholds.min_height[cfg.regime]
    matched = [False] * len(valid)
    acc = APAccumulator(n_gt=len(valid))
    for d in cands:
        best, best_iou = -1, cfg.iou_threshold
        for j, g in enumerate(valid):
            if matched[j]:
                continue
            o = iou(d.box, g, cfg.mode)
            if o >= best_iou:
                best, best_iou = j, o
        if best >= 0:
            matched[best] = True
            acc.scores.append(d.score)
            acc.tp.append(True)
            continue
        if any(iou(d.box, g, cfg.mode) >= cfg.iou_threshold for g in ignored):
            continue
        if any(overlap_2d(d.ltrb, r) >= DONTCARE_OVERLAP for r in dontcare):
            continue
        if d.ltrb[3] - d.ltrb[1] < min_height:
            continue
        acc.scores.append(d.score)
        acc.tp.append(False)
    return acc


def average_precision(det_frames: Sequence[Sequence], gt_frames: Sequence[Sequence[LabelRecord]], cfg: MatchConfig) -> float | None:
    """AP over a set of frames; None when the regime holds no ground truth."""
    if len(det_frames) != len(gt_frames):
        raise ValueError("detections and ground truth must cover the same frames")
    acc = APAccumulator()
    for dets, gts in zip(det_frames, gt_frames):
        acc = acc.merge(match_frame(dets, gts, cfg))
    return acc.average_precision(cfg.interpolation)
