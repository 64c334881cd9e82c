"""Center, size and orientation errors against the nearest ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..boxes import ABBox3D
from ..geometry import normalize_angle
from ..kitti import LabelRecord


def _box_of(obj) -> ABBox3D:
    if isinstance(obj, ABBox3D):
        return obj
    if isinstance(obj, LabelRecord):
        return obj.box3d()
    return obj.box3d


def _gt_boxes(gts, class_name: str | None) -> list[ABBox3D]:
    out = []
    for g in gts:
        if isinstance(g, LabelRecord) and (g.is_dontcare or (class_name and g.class_name != class_name)):
            continue
        out.append(_box_of(g))
    return out


def nearest_pairs(dets: Sequence, gts: Sequence, class_name: str | None = "Car") -> list[tuple[ABBox3D, ABBox3D]]:
    """Pair every detection with the ground truth whose center is closest in 3D.

    Several detections may share a ground truth; each counts on its own.
    """
    boxes = _gt_boxes(gts, class_name)
    if not boxes:
        return []
    centers = np.stack([b.center for b in boxes])
    pairs = []
    for d in dets:
        if class_name and isinstance(d, LabelRecord) and d.class_name != class_name:
            continue
        db = _box_of(d)
        j = int(np.argmin(np.linalg.norm(centers - db.center, axis=1)))
        pairs.append((db, boxes[j]))
    return pairs


@dataclass
class ErrorAccumulator:
    """Per-pair errors for the distance-binned and box-parameter metrics.

    Bins are keyed by their lower edge index. Values are kept and summed with
    ``math.fsum`` so merged results do not depend on frame order.
    """

    bin_width: float = 10.0
    max_range: float | None = None
    loc: dict[int, list[tuple[float, float, float]]] = field(default_factory=dict)
    size: list[tuple[float, float, float, float]] = field(default_factory=list)

    def add_frame(self, dets: Sequence, gts: Sequence, class_name: str | None = "Car") -> None:
        for det, gt in nearest_pairs(dets, gts, class_name):
            dist = float(np.linalg.norm(gt.center))
            if self.max_range is None or dist < self.max_range:
                b = int(math.floor(dist / self.bin_width))
                d = np.abs(det.center - gt.center)
                self.loc.setdefault(b, []).append((float(d[0]), float(d[1]), float(d[2])))
            self.size.append((
                abs(det.h - gt.h),
                abs(det.w - gt.w),
                abs(det.l - gt.l),
                abs(normalize_angle(det.yaw - gt.yaw)),
            ))

    def merge(self, other: "ErrorAccumulator") -> "ErrorAccumulator":
        out = ErrorAccumulator(self.bin_width, self.max_range)
        for src in (self, other):
            for b, vals in src.loc.items():
                out.loc.setdefault(b, []).extend(vals)
            out.size.extend(src.size)
        return out

    def location_bins(self) -> list[dict]:
        rows = []
        for b in sorted(self.loc):
            vals = self.loc[b]
            n = len(vals)
            dx, dy, dz = (math.fsum(v[i] for v in vals) / n for i in range(3))
            rows.append({"lo": b * self.bin_width, "hi": (b + 1) * self.bin_width, "count": n,
                         "dx": dx, "dy": dy, "dz": dz})
        return rows

    def size_orientation(self) -> dict:
        n = len(self.size)
        if n == 0:
            return {"count": 0, "dh": None, "dw": None, "dl": None, "dyaw": None}
        dh, dw, dl, dyaw = (math.fsum(v[i] for v in self.size) / n for i in range(4))
        return {"count": n, "dh": dh, "dw": dw, "dl": dl, "dyaw": dyaw}


def localization_errors(det_frames, gt_frames, bin_width: float = 10.0, max_range: float | None = None,
                        class_name: str | None = "Car") -> list[dict]:
    """Per distance bin: mean |dX|, |dY|, |dZ| of detections vs. their nearest ground truth."""
    acc = ErrorAccumulator(bin_width, max_range)
    for dets, gts in zip(det_frames, gt_frames):
        acc.add_frame(dets, gts, class_name)
    return acc.location_bins()


def size_orientation_errors(det_frames, gt_frames, class_name: str | None = "Car") -> dict:
    """Mean |dh|, |dw|, |dl| and mean wrapped |d yaw| over nearest-ground-truth pairs."""
    acc = ErrorAccumulator()
    for dets, gts in zip(det_frames, gt_frames):
        acc.add_frame(dets, gts, class_name)
    return acc.size_orientation()
