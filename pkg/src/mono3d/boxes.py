"""Amodal 3D boxes, the object-centred local frame, and corner conversions.

The local frame sits at the box center with its z-axis along the camera's
bird's-eye bearing to that center, x to the right of z, and y unchanged
(down). Rotating local coordinates by the bearing gives camera coordinates.

Corner order is fixed because losses compare corner k with corner k. With
x along the length, y along the height and z along the width, the
(x, y, z) sign patterns are::

    0 (+,-,+)  1 (+,-,-)  2 (-,-,-)  3 (-,-,+)     top face (y = -h/2)
    4 (+,+,+)  5 (+,+,-)  6 (-,+,-)  7 (-,+,+)     bottom face, same order
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import BehindCameraError, azimuth, normalize_angle, rotation_y

CORNER_SIGNS = np.array(
    [
        [1, -1, 1],
        [1, -1, -1],
        [-1, -1, -1],
        [-1, -1, 1],
        [1, 1, 1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)

# Corner index pairs spanning each box axis.
LENGTH_EDGES = ((0, 3), (1, 2), (4, 7), (5, 6))
HEIGHT_EDGES = ((0, 4), (1, 5), (2, 6), (3, 7))
WIDTH_EDGES = ((0, 1), (3, 2), (4, 5), (7, 6))

CUBOID_TOL = 1e-6


class NotACuboidError(ValueError):
    """Raised when eight points do not form a rectangular cuboid."""


@dataclass(frozen=True)
class ABBox3D:
    """Amodal 3D box: geometric center, (h, w, l) in meters, yaw about Y."""

    center: np.ndarray
    h: float
    w: float
    l: float
    yaw: float = 0.0

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(3)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        for name in ("h", "w", "l"):
            value = float(getattr(self, name))
            if not value > 0:
                raise ValueError(f"box {name} must be positive, got {value}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.h, self.w, self.l])

    @property
    def volume(self) -> float:
        return self.h * self.w * self.l

    @cached_property
    def footprint(self) -> tuple[tuple[float, float], ...]:
        """Ground-plane (X, Z) corners, counter-clockwise; see :func:`bev_corners`."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x0, z0 = float(self.center[0]), float(self.center[2])
        pts = []
        for sx, _, sz in CORNER_SIGNS[:4][::-1]:
            dx, dz = sx * self.l / 2.0, sz * self.w / 2.0
            pts.append((x0 + c * dx + s * dz, z0 - s * dx + c * dz))
        return tuple(pts)

    def __eq__(self, other):
        if not isinstance(other, ABBox3D):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and (self.h, self.w, self.l, self.yaw) == (other.h, other.w, other.l, other.yaw)
        )

    __hash__ = None


@dataclass(frozen=True)
class Box2D:
    """Image-plane box given by its center (u, v) and size (w, h) in pixels."""

    u: float
    v: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("u", "v", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"2D box size must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.u, self.v])

    @classmethod
    def from_ltrb(cls, left, top, right, bottom) -> "Box2D":
        return cls((left + right) / 2.0, (top + bottom) / 2.0, right - left, bottom - top)

    def ltrb(self) -> tuple[float, float, float, float]:
        return (
            self.u - self.w / 2.0,
            self.v - self.h / 2.0,
            self.u + self.w / 2.0,
            self.v + self.h / 2.0,
        )


def _require_front(center: np.ndarray) -> np.ndarray:
    c = np.asarray(center, dtype=np.float64).reshape(3)
    if not c[2] > 0:
        raise BehindCameraError(f"box center must be in front of the camera, got Z={c[2]}")
    return c


def canonical_corners(h: float, w: float, l: float) -> np.ndarray:
    """Axis-aligned corners (8, 3) of an h x w x l box centred at the origin."""
    return CORNER_SIGNS * np.array([l, h, w]) / 2.0


def observation_angle(yaw: float, center) -> float:
    """Yaw relative to the camera bearing of ``center``, wrapped to (-pi, pi]."""
    c = _require_front(center)
    return normalize_angle(yaw - azimuth(c))


def yaw_from_observation(theta: float, center) -> float:
    c = _require_front(center)
    return normalize_angle(theta + azimuth(c))


def corners_local(box: ABBox3D) -> np.ndarray:
    """Corners of ``box`` in its local frame, shape (8, 3)."""
    theta = observation_angle(box.yaw, box.center)
    return canonical_corners(box.h, box.w, box.l) @ rotation_y(theta).T


def corners_camera(box: ABBox3D) -> np.ndarray:
    """Corners of ``box`` in the camera frame, shape (8, 3)."""
    return canonical_corners(box.h, box.w, box.l) @ rotation_y(box.yaw).T + box.center


def local_to_camera(corners, center) -> np.ndarray:
    """Rotate local corners by the bearing of ``center`` and translate to it."""
    c = _require_front(center)
    return np.asarray(corners, dtype=np.float64) @ rotation_y(azimuth(c)).T + c


def camera_to_local(corners_cam, center) -> np.ndarray:
    """Inverse of :func:`local_to_camera`."""
    c = _require_front(center)
    return (np.asarray(corners_cam, dtype=np.float64) - c) @ rotation_y(azimuth(c))


def _edge_vectors(corners: np.ndarray, pairs) -> np.ndarray:
    return np.stack([corners[a] - corners[b] for a, b in pairs])


def size_from_corners(corners, strict: bool = True) -> tuple[float, float, float]:
    """Recover (h, w, l) from eight corners in canonical order.

    Works in any rigid frame. With ``strict`` the corners must form a
    rectangular cuboid within 1e-6 m; otherwise each dimension is the mean of
    its four edge lengths, which is what a noisy regression output needs.
    """
    pts = np.asarray(corners, dtype=np.float64)
    if pts.shape != (8, 3):
        raise ValueError(f"expected (8, 3) corners, got {pts.shape}")
    groups = [_edge_vectors(pts, p) for p in (HEIGHT_EDGES, WIDTH_EDGES, LENGTH_EDGES)]
    lengths = [np.linalg.norm(g, axis=1) for g in groups]
    dims = tuple(float(np.mean(x)) for x in lengths)
    if not strict:
        return dims
    if min(dims) <= CUBOID_TOL:
        raise NotACuboidError(f"degenerate corner set, edge lengths {dims}")
    for g, lens, d in zip(groups, lengths, dims):
        if np.max(np.abs(lens - d)) > CUBOID_TOL:
            raise NotACuboidError("opposite edges differ in length")
        if np.max(np.abs(g - g[0])) > CUBOID_TOL:
            raise NotACuboidError("parallel edges are not parallel")
    axes = [g[0] / np.linalg.norm(g[0]) for g in groups]
    for i in range(3):
        for j in range(i + 1, 3):
            # Dot of unit vectors scaled back to meters keeps the tolerance in length units.
            if abs(np.dot(axes[i], axes[j])) * max(dims) > CUBOID_TOL:
                raise NotACuboidError("box edges are not orthogonal")
    return dims


def box_from_corners(corners_cam, center=None, strict: bool = False) -> ABBox3D:
    """Rebuild an :class:`ABBox3D` from camera-frame corners in canonical order.

    The center defaults to the corner centroid.
    """
    pts = np.asarray(corners_cam, dtype=np.float64)
    h, w, l = size_from_corners(pts, strict=strict)
    length_axis = _edge_vectors(pts, LENGTH_EDGES).mean(axis=0)
    # rotation_y(yaw) maps local +x to (cos yaw, 0, -sin yaw).
    yaw = float(np.arctan2(-length_axis[2], length_axis[0]))
    c = pts.mean(axis=0) if center is None else center
    return ABBox3D(c, h, w, l, yaw)


def bev_corners(box: ABBox3D) -> np.ndarray:
    """Ground-plane footprint as (4, 2) array of (X, Z), counter-clockwise in the X-Z plane.

    The top-face corner order is clockwise when X is plotted right and Z up,
    so it is reversed here.
    """
    return np.array(box.footprint)
