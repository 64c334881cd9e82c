"""Synthetic driving scenes and target perturbation for closed-loop checks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assignment import GridSpec
from .boxes import ABBox3D, Box2D, canonical_corners, corners_camera, observation_angle
from .encoding import CellTargets
from .evaluation.iou import bev_intersection_area
from .geometry import CameraIntrinsics, project, rotation_y
from .kitti import LabelRecord, format_calib_file, format_label_file, record_from_box

KITTI_INTRINSICS = CameraIntrinsics(721.5377, 721.5377, 609.5593, 172.854)
KITTI_IMAGE = (1242, 375)
MIN_CORNER_DEPTH = 0.5


class SceneGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    n_objects: int = 5
    depth_range: tuple[float, float] = (5.0, 60.0)
    dim_ranges: tuple[tuple[float, float], ...] = ((1.4, 1.8), (1.5, 1.9), (3.4, 4.6))  # h, w, l
    yaw_range: tuple[float, float] = (-np.pi, np.pi)
    truncation_fraction: float = 0.0
    rng_seed: int = 0
    ground_height: float = 1.65  # camera height above the road
    free_placement: bool = False
    height_range: tuple[float, float] = (-1.0, 2.0)  # center Y when placement is free
    min_center_gap_px: float = 0.0
    class_name: str = "Car"
    max_retries: int = 500

    def __post_init__(self):
        if self.n_objects < 0:
            raise ValueError("n_objects must be non-negative")
        lo, hi = self.depth_range
        if not 0 < lo < hi:
            raise ValueError(f"depth range must satisfy 0 < min < max, got {self.depth_range}")
        for a, b in self.dim_ranges:
            if not 0 < a <= b:
                raise ValueError(f"bad dimension range ({a}, {b})")
        if not self.yaw_range[0] < self.yaw_range[1]:
            raise ValueError("yaw range is empty")
        if not 0.0 <= self.truncation_fraction <= 1.0:
            raise ValueError("truncation_fraction must be a probability")


@dataclass(frozen=True)
class SceneObject:
    box3d: ABBox3D
    box2d: Box2D
    label: LabelRecord
    unclipped: tuple[float, float, float, float]  # ltrb of the projected corners before clipping


@dataclass(frozen=True)
class Perturbation:
    offset_px: float = 0.0  # 2D box center offsets
    size_rel: float = 0.0  # relative 2D box size
    depth_m: float = 0.0  # added to delta_zc
    center_px: float = 0.0  # projected-center offsets
    location_m: float = 0.0  # 3D refinement delta_C
    corner_m: float = 0.0  # every local corner coordinate
    yaw_rad: float = 0.0  # rotation of the local corners about Y
    score: float = 0.0  # confidence drops by |N(0, score)|
    drop_rate: float = 0.0
    fp_rate: float = 0.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (self.drop_rate <= 1.0 and self.fp_rate < 1.0):
            raise ValueError("drop_rate must be <= 1 and fp_rate < 1")

    def scaled(self, factor: float) -> "Perturbation":
        noise = ("offset_px", "size_rel", "depth_m", "center_px", "location_m", "corner_m", "yaw_rad", "score")
        return replace(self, **{n: getattr(self, n) * factor for n in noise})


def frame_seed(seed: int, frame: int) -> int:
    """Independent per-frame seed, so frames can be generated in any order."""
    return int(np.random.SeedSequence([int(seed), int(frame)]).generate_state(1, dtype=np.uint64)[0])


def projected_bounds(box: ABBox3D, k: CameraIntrinsics) -> tuple[float, float, float, float]:
    uv = project(corners_camera(box), k)
    return (float(uv[:, 0].min()), float(uv[:, 1].min()), float(uv[:, 0].max()), float(uv[:, 1].max()))


def _clip(ltrb, width, height):
    l, t, r, b = ltrb
    return (min(max(l, 0.0), width), min(max(t, 0.0), height), min(max(r, 0.0), width), min(max(b, 0.0), height))


def _area(ltrb) -> float:
    return max(ltrb[2] - ltrb[0], 0.0) * max(ltrb[3] - ltrb[1], 0.0)


def _sample(rng, cfg: SceneConfig, k: CameraIntrinsics, width: float, truncated: bool) -> ABBox3D:
    h, w, l = (rng.uniform(a, b) for a, b in cfg.dim_ranges)
    z = rng.uniform(*cfg.depth_range)
    yaw = rng.uniform(*cfg.yaw_range)
    if truncated:
        u = rng.uniform(-0.25 * width, 1.25 * width)
    else:
        u = rng.uniform(0.0, width)
    x = (u - k.px) * z / k.fx
    if cfg.free_placement:
        y = rng.uniform(*cfg.height_range)
    else:
        y = cfg.ground_height - h / 2.0
    return ABBox3D((x, y, z), h, w, l, yaw)


def generate_scene(cfg: SceneConfig, k: CameraIntrinsics = KITTI_INTRINSICS, image=KITTI_IMAGE) -> list[SceneObject]:
    """Place ``cfg.n_objects`` non-overlapping boxes that are at least partly visible.

    Objects drawn as truncated must cross the image border; the others must
    project fully inside. Raises SceneGenerationError when a placement fails
    ``cfg.max_retries`` times.
    """
    width, height = float(image[0]), float(image[1])
    rng = np.random.default_rng(cfg.rng_seed)
    objects: list[SceneObject] = []
    for i in range(cfg.n_objects):
        truncated = bool(rng.random() < cfg.truncation_fraction)
        for _ in range(cfg.max_retries):
            box = _sample(rng, cfg, k, width, truncated)
            if corners_camera(box)[:, 2].min() < MIN_CORNER_DEPTH:
                continue
            raw = projected_bounds(box, k)
            clipped = _clip(raw, width, height)
            if clipped[2] - clipped[0] < 2.0 or clipped[3] - clipped[1] < 2.0:
                continue
            crosses = clipped != raw
            if crosses != truncated:
                continue
            b2d = Box2D.from_ltrb(*clipped)
            if any(bev_intersection_area(box, o.box3d) > 0.0 for o in objects):
                continue
            if any(np.hypot(b2d.u - o.box2d.u, b2d.v - o.box2d.v) < cfg.min_center_gap_px for o in objects):
                continue
            truncation = 1.0 - _area(clipped) / _area(raw)
            label = record_from_box(cfg.class_name, box, b2d, observation_angle(box.yaw, box.center),
                                    truncation=truncation)
            objects.append(SceneObject(box, b2d, label, raw))
            break
        else:
            raise SceneGenerationError(f"could not place object {i} after {cfg.max_retries} attempts")
    return objects


def scene_labels(scene: list[SceneObject]) -> list[LabelRecord]:
    return [o.label for o in scene]


def scene_to_kitti(scene: list[SceneObject], k: CameraIntrinsics) -> tuple[str, str]:
    """Label and calibration file contents for one synthetic frame."""
    return format_label_file(scene_labels(scene)), format_calib_file(k)


def perturb(t: CellTargets, p: Perturbation, seed: int, grid: GridSpec | None = None,
            k: CameraIntrinsics | None = None, depth_range: tuple[float, float] = (5.0, 60.0)) -> CellTargets:
    """Noisy copy of ``t`` as a detector might predict it.

    Noise is zero-mean Gaussian per channel on assigned cells. Whole objects
    are dropped with probability ``drop_rate``; spurious detections (Poisson
    with mean ``fp_rate``) are planted on unassigned cells, which needs
    ``grid`` and ``k`` to size their 2D boxes.
    """
    if p.fp_rate > 0 and (grid is None or k is None):
        raise ValueError("planting false positives needs the grid and intrinsics")
    rng = np.random.default_rng(seed)
    out = t.copy()
    mask = t.mask
    n = int(mask.sum())

    out.b2d[mask, :2] += rng.normal(0.0, 1.0, (n, 2)) * p.offset_px
    out.b2d[mask, 2:] *= 1.0 + rng.normal(0.0, 1.0, (n, 2)) * p.size_rel
    out.delta_zc[mask] += rng.normal(0.0, 1.0, n) * p.depth_m
    out.delta_c[mask] += rng.normal(0.0, 1.0, (n, 2)) * p.center_px
    out.delta_C[mask] += rng.normal(0.0, 1.0, (n, 3)) * p.location_m
    out.corners[mask] += rng.normal(0.0, 1.0, (n, 8, 3)) * p.corner_m
    yaw_noise = rng.normal(0.0, 1.0, n) * p.yaw_rad
    if p.yaw_rad > 0:
        rot = np.stack([rotation_y(a) for a in yaw_noise])
        out.corners[mask] = np.einsum("nij,nkj->nki", rot, out.corners[mask])
    out.pr_obj[mask] = np.clip(t.pr_obj[mask] - np.abs(rng.normal(0.0, 1.0, n)) * p.score, 0.01, 1.0)

    objects = np.unique(t.object_index[mask])
    dropped = objects[rng.random(len(objects)) < p.drop_rate]
    out.pr_obj[np.isin(t.object_index, dropped) & mask] = 0.0

    n_fp = int(rng.poisson(p.fp_rate)) if p.fp_rate > 0 else 0
    free = np.argwhere(~mask)
    if n_fp and len(free):
        cw, ch = grid.cell_size
        for iy, ix in free[rng.choice(len(free), size=min(n_fp, len(free)), replace=False)]:
            h, w, l = rng.uniform(1.4, 1.8), rng.uniform(1.5, 1.9), rng.uniform(3.4, 4.6)
            theta = rng.uniform(-np.pi, np.pi)
            z = rng.uniform(*depth_range)
            out.pr_obj[iy, ix] = rng.uniform(0.5, 1.0)
            out.b2d[iy, ix] = [rng.uniform(-cw, cw) / 2, rng.uniform(-ch, ch) / 2,
                               l * k.fx / z / grid.width, h * k.fy / z / grid.height]
            out.z_cc[iy, ix] = z
            out.delta_zc[iy, ix] = 0.0
            out.delta_c[iy, ix] = [rng.uniform(-cw, cw) / 2, rng.uniform(-ch, ch) / 2]
            out.delta_C[iy, ix] = 0.0
            out.corners[iy, ix] = canonical_corners(h, w, l) @ rotation_y(theta).T
    return out

