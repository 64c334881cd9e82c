"""Rotated-rectangle IoU on the ground plane, and 3D IoU for yaw-only boxes."""

from __future__ import annotations

import math

from ..boxes import ABBox3D

EPS = 1e-12


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    pts = [(float(x), float(y)) for x, y in poly]
    if len(pts) < 3:
        return 0.0
    acc = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _line_intersection(p, q, a, b):
    """Intersection of segment p->q with the infinite line through a->b."""
    dp = (q[0] - p[0], q[1] - p[1])
    da = (b[0] - a[0], b[1] - a[1])
    denom = dp[0] * da[1] - dp[1] * da[0]
    if abs(denom) < EPS:
        return p
    t = ((a[0] - p[0]) * da[1] - (a[1] - p[1]) * da[0]) / denom
    return (p[0] + t * dp[0], p[1] + t * dp[1])


def clip_convex(subject, clip) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of a polygon by a convex counter-clockwise polygon."""
    output = [tuple(map(float, v)) for v in subject]
    clip = [tuple(map(float, v)) for v in clip]
    for i in range(len(clip)):
        if not output:
            break
        a, b = clip[i - 1], clip[i]
        inputs, output = output, []
        s = inputs[-1]
        s_in = _cross(a, b, s) >= -EPS
        for e in inputs:
            e_in = _cross(a, b, e) >= -EPS
            if e_in:
                if not s_in:
                    output.append(_line_intersection(s, e, a, b))
                output.append(e)
            elif s_in:
                output.append(_line_intersection(s, e, a, b))
            s, s_in = e, e_in
    return output


def footprint_area(box: ABBox3D) -> float:
    # Shoelace rather than l*w so a box clipped against itself yields the same number.
    return polygon_area(box.footprint)


def bev_intersection_area(a: ABBox3D, b: ABBox3D) -> float:
    # Footprints farther apart than their half-diagonals cannot touch.
    ra = 0.5 * math.hypot(a.l, a.w)
    rb = 0.5 * math.hypot(b.l, b.w)
    dx = a.center[0] - b.center[0]
    dz = a.center[2] - b.center[2]
    if dx * dx + dz * dz >= (ra + rb) ** 2:
        return 0.0
    inter = clip_convex(a.footprint, b.footprint)
    return max(polygon_area(inter), 0.0)


def iou_bev(a: ABBox3D, b: ABBox3D) -> float:
    inter = bev_intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = footprint_area(a) + footprint_area(b) - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def _y_span(box: ABBox3D) -> tuple[float, float]:
    return box.center[1] - box.h / 2.0, box.center[1] + box.h / 2.0


def vertical_overlap(a: ABBox3D, b: ABBox3D) -> float:
    (ta, ba), (tb, bb) = _y_span(a), _y_span(b)
    return max(min(ba, bb) - max(ta, tb), 0.0)


def iou_3d(a: ABBox3D, b: ABBox3D) -> float:
    dy = vertical_overlap(a, b)
    if dy <= 0.0:
        return 0.0
    inter = bev_intersection_area(a, b) * dy
    if inter <= 0.0:
        return 0.0
    # Extents measured like the overlap so identical boxes give exactly 1.
    ha = _y_span(a)[1] - _y_span(a)[0]
    hb = _y_span(b)[1] - _y_span(b)[0]
    union = footprint_area(a) * ha + footprint_area(b) * hb - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def iou(a: ABBox3D, b: ABBox3D, mode: str = "bev") -> float:
    if mode == "bev":
        return iou_bev(a, b)
    if mode == "3d":
        return iou_3d(a, b)
    raise ValueError(f"unknown IoU mode {mode!r}")


def overlap_2d(det_ltrb, region_ltrb) -> float:
    """Fraction of the detection's 2D box covered by ``region`` (DontCare test)."""
    l = max(det_ltrb[0], region_ltrb[0])
    t = max(det_ltrb[1], region_ltrb[1])
    r = min(det_ltrb[2], region_ltrb[2])
    b = min(det_ltrb[3], region_ltrb[3])
    area = (det_ltrb[2] - det_ltrb[0]) * (det_ltrb[3] - det_ltrb[1])
    if r <= l or b <= t or area <= 0:
        return 0.0
    return (r - l) * (b - t) / area
