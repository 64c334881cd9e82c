"""Rectified pinhole camera: projection and backprojection.

Camera frame follows the KITTI convention: X right, Y down, Z forward.
Points are plain float64 arrays with the coordinate axis last, so every
function works on a single point or on a batch of shape ``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BehindCameraError(ValueError):
    """Raised when a depth is at or behind the camera plane (Z <= 0)."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    px: float
    py: float

    def __post_init__(self):
        for name in ("fx", "fy", "px", "py"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.px], [0.0, self.fy, self.py], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


def _check_depth(z: np.ndarray) -> None:
    if np.any(~(z > 0)):
        raise BehindCameraError("point at or behind the camera plane (Z <= 0)")


def project(points, k: CameraIntrinsics) -> np.ndarray:
    """Map camera-frame points ``(..., 3)`` to pixels ``(..., 2)``.

    Raises BehindCameraError if any point has Z <= 0.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {p.shape}")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    _check_depth(z)
    u = k.fx * x / z + k.px
    v = k.fy * y / z + k.py
    return np.stack([u, v], axis=-1)


def backproject(pixels, depth, k: CameraIntrinsics) -> np.ndarray:
    """Lift pixels ``(..., 2)`` at the given depth(s) back to camera frame ``(..., 3)``."""
    x = np.asarray(pixels, dtype=np.float64)
    if x.shape[-1] != 2:
        raise ValueError(f"expected trailing dimension 2, got shape {x.shape}")
    z = np.broadcast_to(np.asarray(depth, dtype=np.float64), x.shape[:-1])
    _check_depth(z)
    X = (x[..., 0] - k.px) * z / k.fx
    Y = (x[..., 1] - k.py) * z / k.fy
    return np.stack([X, Y, z], axis=-1)


def azimuth(points) -> np.ndarray | float:
    """Bird's-eye bearing of a point from the camera, ``atan2(X, Z)``."""
    p = np.asarray(points, dtype=np.float64)
    a = np.arctan2(p[..., 0], p[..., 2])
    return float(a) if a.ndim == 0 else a


def normalize_angle(theta):
    """Wrap angles into (-pi, pi]."""
    t = np.asarray(theta, dtype=np.float64)
    wrapped = np.mod(t + np.pi, 2.0 * np.pi) - np.pi
    # np.mod maps +pi to -pi; the interval is closed on the right.
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    # Angles already in range pass through untouched so KITTI values round-trip exactly.
    wrapped = np.where((t > -np.pi) & (t <= np.pi), t, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def rotation_y(theta: float) -> np.ndarray:
    """Rotation about the camera Y axis; maps local +z onto the bearing ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]], dtype=np.float64)
