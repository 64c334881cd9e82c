"""Training losses over predicted vs. ground-truth cell targets.

All regression terms are masked L1 sums over the cells that carry a
ground-truth object. The confidence term is a two-class softmax cross
entropy averaged over every cell of the grid.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .assignment import GridSpec
from .encoding import CellTargets
from .geometry import BehindCameraError, CameraIntrinsics, backproject, rotation_y


@dataclass(frozen=True)
class LossWeights:
    omega: float = 10.0
    alpha: float = 10.0
    beta: float = 10.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.beta > 1:
            raise ValueError(f"beta must exceed 1, got {self.beta}")


@dataclass(frozen=True)
class LossReport:
    l_conf: float
    l_bbox: float
    l_2d: float
    l_zc: float
    l_zdelta: float
    l_depth: float
    l_c2d: float
    l_c3d: float
    l_location: float
    l_corners: float
    l_joint: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_shapes(pred: CellTargets, gt: CellTargets) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"grid shape mismatch: pred {pred.shape} vs gt {gt.shape}")


def _masked_l1(diff: np.ndarray, mask: np.ndarray, normalize: bool) -> float:
    """Sum of |diff| over masked cells; trailing axes are summed per cell."""
    per_cell = np.abs(diff).reshape(diff.shape[0], diff.shape[1], -1).sum(axis=-1)
    total = float(np.sum(per_cell[mask]))
    if normalize:
        total /= max(int(mask.sum()), 1)
    return total


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-cell softmax cross entropy for integer labels in {0, 1}."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    log_norm = m[..., 0] + np.log(np.exp(z - m).sum(axis=-1))
    picked = np.take_along_axis(z, labels[..., None].astype(np.int64), axis=-1)[..., 0]
    return log_norm - picked


def loss_2d(pred: CellTargets, gt: CellTargets, w: LossWeights = LossWeights(), normalize: bool = False):
    _check_shapes(pred, gt)
    labels = (gt.pr_obj > 0.5).astype(np.int64)
    l_conf = float(np.mean(cross_entropy(pred.confidence_logits(), labels)))
    l_bbox = _masked_l1(pred.b2d - gt.b2d, gt.mask, normalize)
    return l_conf, l_bbox, l_conf + w.omega * l_bbox


def loss_depth(pred: CellTargets, gt: CellTargets, w: LossWeights = LossWeights(), normalize: bool = False):
    _check_shapes(pred, gt)
    z_true = gt.depth
    l_zc = _masked_l1(pred.z_cc - z_true, gt.mask, normalize)
    l_zdelta = _masked_l1(pred.z_cc + pred.delta_zc - z_true, gt.mask, normalize)
    return l_zc, l_zdelta, w.alpha * l_zc + l_zdelta


def _coarse_centers(t: CellTargets, k: CameraIntrinsics, grid: GridSpec, mask: np.ndarray) -> np.ndarray:
    """Backprojected centers (before delta_C) on masked cells, shape (n, 3)."""
    c = grid.cell_centers()[mask] + t.delta_c[mask]
    z = t.depth[mask]
    if np.any(~(z > 0)):
        raise BehindCameraError("decoded depth must be positive on assigned cells")
    return backproject(c, z, k)


def loss_location(
    pred: CellTargets,
    gt: CellTargets,
    k: CameraIntrinsics,
    grid: GridSpec,
    w: LossWeights = LossWeights(),
    normalize: bool = False,
):
    _check_shapes(pred, gt)
    mask = gt.mask
    l_c2d = _masked_l1(pred.delta_c - gt.delta_c, mask, normalize)
    C_pred = _coarse_centers(pred, k, grid, mask) + pred.delta_C[mask]
    C_true = _coarse_centers(gt, k, grid, mask) + gt.delta_C[mask]
    l_c3d = float(np.abs(C_pred - C_true).sum())
    if normalize:
        l_c3d /= max(int(mask.sum()), 1)
    return l_c2d, l_c3d, w.beta * l_c2d + l_c3d


def loss_corners(pred: CellTargets, gt: CellTargets, normalize: bool = False) -> float:
    _check_shapes(pred, gt)
    return _masked_l1(pred.corners - gt.corners, gt.mask, normalize)


def camera_corners(t: CellTargets, k: CameraIntrinsics, grid: GridSpec, mask: np.ndarray) -> np.ndarray:
    """Camera-frame corners (n, 8, 3) on masked cells, placed as the decoder places them."""
    C_s = _coarse_centers(t, k, grid, mask)
    bearings = np.arctan2(C_s[:, 0], C_s[:, 2])
    rot = np.stack([rotation_y(a) for a in bearings]) if len(bearings) else np.zeros((0, 3, 3))
    local = t.corners[mask]
    return np.einsum("nij,nkj->nki", rot, local) + (C_s + t.delta_C[mask])[:, None, :]


def loss_joint(
    pred: CellTargets,
    gt: CellTargets,
    k: CameraIntrinsics,
    grid: GridSpec,
    normalize: bool = False,
) -> float:
    _check_shapes(pred, gt)
    mask = gt.mask
    diff = camera_corners(pred, k, grid, mask) - camera_corners(gt, k, grid, mask)
    total = float(np.abs(diff).sum())
    if normalize:
        total /= max(int(mask.sum()), 1)
    return total


def compute_losses(
    pred: CellTargets,
    gt: CellTargets,
    k: CameraIntrinsics,
    grid: GridSpec,
    w: LossWeights = LossWeights(),
    normalize: bool = False,
) -> LossReport:
    """Every term plus ``total``, the unweighted sum of the five composites."""
    l_conf, l_bbox, l_2d = loss_2d(pred, gt, w, normalize)
    l_zc, l_zdelta, l_depth = loss_depth(pred, gt, w, normalize)
    l_c2d, l_c3d, l_location = loss_location(pred, gt, k, grid, w, normalize)
    l_corners = loss_corners(pred, gt, normalize)
    l_joint = loss_joint(pred, gt, k, grid, normalize)
    total = l_2d + l_depth + l_location + l_corners + l_joint
    return LossReport(l_conf, l_bbox, l_2d, l_zc, l_zdelta, l_depth, l_c2d, l_c3d,
                      l_location, l_corners, l_joint, total)
