"""Frame-level glue: KITTI records in, targets and detections out."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .assignment import GridSpec
from .boxes import ABBox3D, Box2D
from .encoding import CellTargets, DecodedDetection, decode, encode
from .geometry import CameraIntrinsics
from .kitti import LabelRecord
from .synth import Perturbation, SceneConfig, SceneObject, frame_seed, generate_scene, perturb


def default_grid(width: float = 1242, height: float = 375, stride: int = 32, sigma_cells: float = 1.5) -> GridSpec:
    return GridSpec.from_stride(width, height, stride, sigma_cells)


def separable_gap(grid: GridSpec) -> float:
    """2D center spacing beyond which no object can lose every cell to a neighbour."""
    cw, ch = grid.cell_size
    return grid.sigma_scope + 0.5 * math.hypot(cw, ch)


def gt_pairs(records: list[LabelRecord], class_name: str = "Car") -> list[tuple[ABBox3D, Box2D]]:
    """3D and 2D boxes of the records of ``class_name``, in file order."""
    return [(r.box3d(), r.box2d()) for r in records if r.class_name == class_name]


@dataclass
class SynthFrame:
    scene: list[SceneObject]
    gt: CellTargets
    pred: CellTargets
    detections: list[DecodedDetection]

    @property
    def labels(self) -> list[LabelRecord]:
        return [o.label for o in self.scene]


def synth_frame(
    seed: int,
    frame: int,
    k: CameraIntrinsics,
    grid: GridSpec,
    scene_cfg: SceneConfig = SceneConfig(),
    noise: Perturbation = Perturbation(),
    score_threshold: float = 0.5,
) -> SynthFrame:
    """Generate, encode, perturb and decode one frame; deterministic in (seed, frame)."""
    fs = frame_seed(seed, frame)
    cfg = replace(scene_cfg, rng_seed=fs,
                  min_center_gap_px=max(scene_cfg.min_center_gap_px, separable_gap(grid)))
    scene = generate_scene(cfg, k, (grid.width, grid.height))
    gt = encode([(o.box3d, o.box2d) for o in scene], k, grid)
    pred = perturb(gt, noise, frame_seed(fs, 1), grid, k, cfg.depth_range)
    dets = decode(pred, k, grid, score_threshold)
    return SynthFrame(scene, gt, pred, dets)
