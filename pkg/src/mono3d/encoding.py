"""Per-cell regression targets for the 2D, depth, location and corner heads.

Every assigned cell carries

* ``b2d``: 2D box center offset from the cell center (px) and the box size
  normalized by the image size,
* ``z_cc`` / ``delta_zc``: coarse depth and its refinement (m),
* ``delta_c``: offset of the projected 3D center from the cell center (px),
* ``delta_C``: 3D refinement added to the backprojected center (m),
* ``corners``: the eight corners in the object's local frame (m).

Decoding backprojects ``cell + delta_c`` at depth ``z_cc + delta_zc``, adds
``delta_C``, and places the local corners with the rotation taken from the
backprojected ray.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import CellAssignment, GridSpec, assign
from .boxes import (
    ABBox3D,
    Box2D,
    box_from_corners,
    camera_to_local,
    corners_camera,
    local_to_camera,
    observation_angle,
)
from .evaluation.iou import iou_bev
from .geometry import BehindCameraError, CameraIntrinsics, backproject, project
from .kitti import LabelRecord, record_from_box

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

TARGET_COLUMNS = (
    ["ix", "iy", "object_index", "pr_obj"]
    + ["dxb", "dyb", "wn", "hn"]
    + ["z_cc", "delta_zc"]
    + ["dxc", "dyc"]
    + ["dCx", "dCy", "dCz"]
    + [f"o{k}{a}" for k in range(1, 9) for a in "xyz"]
)


@dataclass
class CellTargets:
    """Dense per-cell targets on a grid of shape (sy, sx).

    ``object_index`` is -1 on cells without a ground-truth object. ``logits``
    optionally holds a (background, object) score pair per cell for the
    confidence loss; when absent, log-probabilities of ``pr_obj`` are used.
    """

    pr_obj: np.ndarray
    b2d: np.ndarray
    z_cc: np.ndarray
    delta_zc: np.ndarray
    delta_c: np.ndarray
    delta_C: np.ndarray
    corners: np.ndarray
    object_index: np.ndarray
    logits: np.ndarray | None = field(default=None)

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "CellTargets":
        sy, sx = shape
        return cls(
            pr_obj=np.zeros((sy, sx)),
            b2d=np.zeros((sy, sx, 4)),
            z_cc=np.zeros((sy, sx)),
            delta_zc=np.zeros((sy, sx)),
            delta_c=np.zeros((sy, sx, 2)),
            delta_C=np.zeros((sy, sx, 3)),
            corners=np.zeros((sy, sx, 8, 3)),
            object_index=np.full((sy, sx), -1, dtype=np.int64),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.pr_obj.shape

    @property
    def mask(self) -> np.ndarray:
        return self.object_index >= 0

    @property
    def depth(self) -> np.ndarray:
        return self.z_cc + self.delta_zc

    def copy(self) -> "CellTargets":
        return CellTargets(
            **{
                name: None if getattr(self, name) is None else getattr(self, name).copy()
                for name in self.__dataclass_fields__
            }
        )

    def confidence_logits(self) -> np.ndarray:
        if self.logits is not None:
            return self.logits
        p = np.clip(self.pr_obj, 1e-12, 1.0 - 1e-12)
        return np.stack([np.log1p(-p), np.log(p)], axis=-1)


@dataclass(frozen=True)
class DecodedDetection:
    box3d: ABBox3D
    box2d: Box2D
    score: float
    cell: tuple[int, int] = (-1, -1)

    def to_label(self, class_name: str = "Car") -> LabelRecord:
        alpha = observation_angle(self.box3d.yaw, self.box3d.center)
        return record_from_box(class_name, self.box3d, self.box2d, alpha, score=self.score)


def encode(
    gt: Sequence[tuple[ABBox3D, Box2D]],
    k: CameraIntrinsics,
    grid: GridSpec,
    assignment: CellAssignment | None = None,
) -> CellTargets:
    """Ground-truth targets: full depth in ``z_cc``, zero ``delta_zc``."""
    for box, _ in gt:
        if not box.center[2] > 0:
            raise BehindCameraError(f"ground-truth center behind camera: {box.center}")
    if assignment is None:
        assignment = assign([(b2d, box.center[2]) for box, b2d in gt], grid)
    t = CellTargets.empty(grid.shape)
    t.object_index[...] = assignment.index
    centers = grid.cell_centers()
    for i, (box, b2d) in enumerate(gt):
        sel = assignment.index == i
        if not sel.any():
            continue
        g = centers[sel]
        C = box.center
        z = C[2]
        c = project(C, k)
        delta_c = c - g
        C_s = backproject(g + delta_c, z, k)
        t.pr_obj[sel] = 1.0
        t.b2d[sel] = np.column_stack(
            [b2d.u - g[:, 0], b2d.v - g[:, 1],
             np.full(len(g), b2d.w / grid.width), np.full(len(g), b2d.h / grid.height)]
        )
        t.z_cc[sel] = z
        t.delta_zc[sel] = 0.0
        t.delta_c[sel] = delta_c
        t.delta_C[sel] = C - C_s
        t.corners[sel] = camera_to_local(corners_camera(box), C)
    return t


def decode_cells(t: CellTargets, k: CameraIntrinsics, grid: GridSpec, score_threshold: float = 0.5):
    """Decode every cell scoring at least ``score_threshold`` without deduplication.

    Returns ``(detections, n_discarded)``; cells whose depth or 2D size decodes
    to a non-positive value are discarded.
    """
    centers = grid.cell_centers()
    iy, ix = np.nonzero((t.pr_obj >= score_threshold) & (t.pr_obj > 0))
    dets = []
    discarded = 0
    for y, x in zip(iy.tolist(), ix.tolist()):
        z = t.z_cc[y, x] + t.delta_zc[y, x]
        dxb, dyb, wn, hn = t.b2d[y, x]
        if not (z > 0 and wn > 0 and hn > 0):
            discarded += 1
            continue
        g = centers[y, x]
        C_s = backproject(g + t.delta_c[y, x], z, k)
        dC = t.delta_C[y, x]
        C = C_s + dC
        corners = local_to_camera(t.corners[y, x], C_s) + dC
        box3d = box_from_corners(corners, center=C)
        box2d = Box2D(g[0] + dxb, g[1] + dyb, wn * grid.width, hn * grid.height)
        dets.append(DecodedDetection(box3d, box2d, float(t.pr_obj[y, x]), (x, y)))
    if discarded:
        logger.warning("discarded %d cell(s) with non-positive decoded depth or size", discarded)
    return dets, discarded


def suppress_duplicates(dets: Sequence[DecodedDetection], iou_threshold: float = 0.5) -> list[DecodedDetection]:
    """Greedy NMS on ground-plane IoU, keeping the highest score of each cluster."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept: list[DecodedDetection] = []
    for i in order:
        d = dets[i]
        if all(iou_bev(d.box3d, other.box3d) <= iou_threshold for other in kept):
            kept.append(d)
    return kept


def decode(
    t: CellTargets,
    k: CameraIntrinsics,
    grid: GridSpec,
    score_threshold: float = 0.5,
    nms_iou: float = 0.5,
) -> list[DecodedDetection]:
    dets, _ = decode_cells(t, k, grid, score_threshold)
    return suppress_duplicates(dets, nms_iou)


def center_substitution_error(gt: ABBox3D, box2d: Box2D, k: CameraIntrinsics) -> tuple[float, float]:
    """Horizontal and vertical error from backprojecting the 2D box center instead of the projected 3D center."""
    z = gt.center[2]
    from_b = backproject(box2d.center, z, k)
    from_c = backproject(project(gt.center, k), z, k)
    dx, dy = np.abs(from_b - from_c)[:2]
    return float(dx), float(dy)


# -- flat table serialization -------------------------------------------------

def targets_to_rows(t: CellTargets) -> list[list[float]]:
    """Rows in TARGET_COLUMNS order for every cell that is assigned or scores above zero."""
    iy, ix = np.nonzero(t.mask | (t.pr_obj > 0))
    rows = []
    for y, x in zip(iy.tolist(), ix.tolist()):
        rows.append(
            [x, y, int(t.object_index[y, x]), float(t.pr_obj[y, x])]
            + t.b2d[y, x].tolist()
            + [float(t.z_cc[y, x]), float(t.delta_zc[y, x])]
            + t.delta_c[y, x].tolist()
            + t.delta_C[y, x].tolist()
            + t.corners[y, x].reshape(-1).tolist()
        )
    return rows


def targets_from_rows(rows, shape: tuple[int, int]) -> CellTargets:
    t = CellTargets.empty(shape)
    for row in rows:
        x, y, obj = int(row[0]), int(row[1]), int(row[2])
        vals = np.asarray(row[3:], dtype=np.float64)
        t.object_index[y, x] = obj
        t.pr_obj[y, x] = vals[0]
        t.b2d[y, x] = vals[1:5]
        t.z_cc[y, x] = vals[5]
        t.delta_zc[y, x] = vals[6]
        t.delta_c[y, x] = vals[7:9]
        t.delta_C[y, x] = vals[9:12]
        t.corners[y, x] = vals[12:36].reshape(8, 3)
    return t


def _grid_dict(grid: GridSpec) -> dict:
    return {"width": grid.width, "height": grid.height, "sx": grid.sx, "sy": grid.sy,
            "sigma_scope": grid.sigma_scope}


def targets_to_json(t: CellTargets, grid: GridSpec) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "grid": _grid_dict(grid),
        "columns": TARGET_COLUMNS,
        "rows": targets_to_rows(t),
    }
    return json.dumps(doc, indent=1)


def targets_from_json(text: str) -> tuple[CellTargets, GridSpec]:
    doc = json.loads(text)
    if doc.get("columns") != TARGET_COLUMNS:
        raise ValueError("target table columns do not match this version")
    grid = GridSpec(**doc["grid"])
    return targets_from_rows(doc["rows"], grid.shape), grid


def targets_to_csv(t: CellTargets, grid: GridSpec) -> str:
    buf = io.StringIO()
    g = _grid_dict(grid)
    buf.write(f"# schema_version={SCHEMA_VERSION} " + " ".join(f"{k}={v!r}" for k, v in g.items()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TARGET_COLUMNS)
    for row in targets_to_rows(t):
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def targets_from_csv(text: str) -> tuple[CellTargets, GridSpec]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing target table header line")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    grid = GridSpec(float(meta["width"]), float(meta["height"]), int(meta["sx"]), int(meta["sy"]),
                    float(meta["sigma_scope"]))
    reader = csv.reader(lines[1:])
    header = next(reader)
    if header != TARGET_COLUMNS:
        raise ValueError("target table columns do not match this version")
    rows = [[float(v) for v in r] for r in reader if r]
    return targets_from_rows(rows, grid.shape), grid
