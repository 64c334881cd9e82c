"""Closed-loop invariant checks run by ``mono3d selftest``.

Each check takes a numpy Generator and returns ``(passed, detail)``. Details
only contain seed-determined numbers so two runs print identical reports.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assignment import GridSpec, assign
from .boxes import (
    ABBox3D,
    Box2D,
    camera_to_local,
    corners_local,
    local_to_camera,
    observation_angle,
    size_from_corners,
    yaw_from_observation,
)
from .encoding import center_substitution_error, decode
from .evaluation import EvalSettings, evaluate, iou_3d, iou_bev
from .geometry import backproject, project
from .kitti import format_label_file, parse_label_file
from .losses import compute_losses
from .pipeline import default_grid, synth_frame
from .synth import KITTI_INTRINSICS, SceneConfig

K = KITTI_INTRINSICS


@dataclass
class Context:
    rng: np.random.Generator
    seed: int
    n_frames: int
    grid: GridSpec
    inject_bug: bool = False


def _random_box(rng, z_range=(2.0, 80.0)) -> ABBox3D:
    z = rng.uniform(*z_range)
    x = rng.uniform(-0.8, 0.8) * z
    return ABBox3D((x, rng.uniform(-2, 3), z), *rng.uniform(0.5, 5.0, 3), rng.uniform(-np.pi, np.pi))


def check_projection(ctx: Context):
    p = np.column_stack([ctx.rng.uniform(-50, 50, 10000), ctx.rng.uniform(-10, 10, 10000),
                         ctx.rng.uniform(0.5, 200, 10000)])
    err = float(np.abs(backproject(project(p, K), p[:, 2], K) - p).max())
    return err < 1e-9, f"max residual {err:.1e} m over 10000 points"


def check_rigid_frame(ctx: Context):
    worst, worst_yaw = 0.0, 0.0
    for _ in range(1000):
        b = _random_box(ctx.rng)
        o = corners_local(b)
        worst = max(worst, float(np.abs(camera_to_local(local_to_camera(o, b.center), b.center) - o).max()))
        back = yaw_from_observation(observation_angle(b.yaw, b.center), b.center)
        worst_yaw = max(worst_yaw, abs(float(np.angle(np.exp(1j * (back - b.yaw))))))
    return worst < 1e-9 and worst_yaw < 1e-12, f"corner residual {worst:.1e} m, yaw residual {worst_yaw:.1e} rad"


def check_size_from_corners(ctx: Context):
    worst = 0.0
    for _ in range(1000):
        b = _random_box(ctx.rng)
        worst = max(worst, float(np.abs(np.array(size_from_corners(corners_local(b))) - b.dims).max()))
    return worst < 1e-9, f"max dimension error {worst:.1e} m"


def _brute_force_assign(objects, grid):
    out = np.full(grid.shape, -1)
    for iy, ix in itertools.product(range(grid.sy), range(grid.sx)):
        gu, gv = (ix + 0.5) * grid.width / grid.sx, (iy + 0.5) * grid.height / grid.sy
        best = None
        for i, (b, z) in enumerate(objects):
            if np.hypot(gu - b.u, gv - b.v) < grid.sigma_scope and (best is None or z < objects[best][1]):
                best = i
        if best is not None:
            out[iy, ix] = best
    return out


def check_assignment(ctx: Context):
    grid = GridSpec(200.0, 120.0, 10, 6, ctx.rng.uniform(10.0, 60.0))
    agree = 0
    n = 50
    for _ in range(n):
        objs = [(Box2D(ctx.rng.uniform(-20, 220), ctx.rng.uniform(-20, 140), 10.0, 10.0),
                 float(ctx.rng.choice([5.0, 10.0, ctx.rng.uniform(1, 50)])))
                for _ in range(ctx.rng.integers(0, 12))]
        agree += int(np.array_equal(assign(objs, grid).index, _brute_force_assign(objs, grid)))
    return agree == n, f"{agree}/{n} scenes identical to brute force"


def check_iou_oracle(ctx: Context):
    worst = 0.0
    n_samples = 200_000
    for _ in range(10):
        a = ABBox3D((0, 0, 10), *ctx.rng.uniform(1, 3, 3), ctx.rng.uniform(-np.pi, np.pi))
        b = ABBox3D(np.array([0, 0, 10]) + ctx.rng.uniform(-1, 1, 3), *ctx.rng.uniform(1, 3, 3),
                    ctx.rng.uniform(-np.pi, np.pi))
        mc_bev, mc_3d = monte_carlo_iou(a, b, n_samples, ctx.rng)
        worst = max(worst, abs(iou_bev(a, b) - mc_bev), abs(iou_3d(a, b) - mc_3d))
    return worst < 0.01, f"max deviation from Monte Carlo {worst:.3f}"


def _inside(box: ABBox3D, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rel = pts - box.center
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    # Undo rotation_y(yaw): local x = c*X - s*Z, local z = s*X + c*Z.
    lx = c * rel[:, 0] - s * rel[:, 2]
    lz = s * rel[:, 0] + c * rel[:, 2]
    in_bev = (np.abs(lx) <= box.l / 2) & (np.abs(lz) <= box.w / 2)
    return in_bev, in_bev & (np.abs(rel[:, 1]) <= box.h / 2)


def monte_carlo_iou(a: ABBox3D, b: ABBox3D, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sampled BEV and 3D IoU; the reference the analytic clipping is checked against."""
    boxes = (a, b)
    ra = [0.5 * np.linalg.norm(x.dims) for x in boxes]
    lo = np.min([x.center - r for x, r in zip(boxes, ra)], axis=0)
    hi = np.max([x.center + r for x, r in zip(boxes, ra)], axis=0)
    pts = rng.uniform(lo, hi, (n, 3))
    a_bev, a_3d = _inside(a, pts)
    b_bev, b_3d = _inside(b, pts)
    bev_union = np.count_nonzero(a_bev | b_bev)
    vol_union = np.count_nonzero(a_3d | b_3d)
    bev = np.count_nonzero(a_bev & b_bev) / bev_union if bev_union else 0.0
    vol = np.count_nonzero(a_3d & b_3d) / vol_union if vol_union else 0.0
    return float(bev), float(vol)


def check_closed_loop(ctx: Context):
    dets, gts, worst = [], [], 0.0
    zero_loss = True
    for f in range(ctx.n_frames):
        fr = synth_frame(ctx.seed, f, K, ctx.grid)
        if ctx.inject_bug:
            fr.pred.delta_C[fr.pred.mask] += 0.01
            fr.detections = decode(fr.pred, K, ctx.grid)
        for o in fr.scene:
            if fr.detections:
                worst = max(worst, min(float(np.abs(d.box3d.center - o.box3d.center).max()) for d in fr.detections))
        rep = compute_losses(fr.pred, fr.gt, K, ctx.grid)
        zero_loss &= all(v == 0.0 for k, v in rep.to_dict().items() if k not in ("l_conf", "l_2d", "total"))
        dets.append(fr.detections)
        gts.append(fr.labels)
    report = evaluate(dets, gts, EvalSettings(thresholds=(0.7,)))
    ap_ok = all(v == 1.0 for v in report.ap.values() if v is not None)
    so = report.size_orientation
    err_ok = all(so[k] is not None and so[k] < 1e-9 for k in ("dh", "dw", "dl", "dyaw"))
    err_ok &= all(max(b["dx"], b["dy"], b["dz"]) < 1e-9 for b in report.loc_bins)
    ok = worst < 1e-6 and ap_ok and err_ok and zero_loss
    return ok, (f"{ctx.n_frames} frames, center residual {worst:.1e} m, AP@0.7 all one: {ap_ok}, "
                f"errors zero: {err_ok}, L1 losses zero: {zero_loss}")


def check_label_round_trip(ctx: Context):
    fr = synth_frame(ctx.seed, 0, K, ctx.grid, SceneConfig(truncation_fraction=0.5))
    text = format_label_file(fr.labels)
    again = format_label_file(parse_label_file(text))
    return text == again and parse_label_file(text) == fr.labels, f"{len(fr.labels)} records, text fixed point: {text == again}"


def check_center_substitution(ctx: Context):
    box = ABBox3D((2.0, 0.9, 20.0), 1.5, 1.6, 3.9, 0.3)
    c = project(box.center, K)
    gaps = np.linspace(0.0, 40.0, 9)
    errs = [center_substitution_error(box, Box2D(c[0] + g, c[1], 50, 40), K)[0] for g in gaps]
    slope = np.polyfit(gaps, errs, 1)[0]
    dev = abs(slope - box.center[2] / K.fx)
    return dev < 1e-9, f"slope deviation {dev:.1e} m/px"


CHECKS: list[tuple[str, Callable[[Context], tuple[bool, str]]]] = [
    ("projection_round_trip", check_projection),
    ("rigid_frame_round_trip", check_rigid_frame),
    ("size_from_corners", check_size_from_corners),
    ("assignment_brute_force", check_assignment),
    ("iou_monte_carlo", check_iou_oracle),
    ("closed_loop_identity", check_closed_loop),
    ("label_round_trip", check_label_round_trip),
    ("center_substitution_slope", check_center_substitution),
]


def run_selftest(seed: int = 0, n_frames: int = 20, inject_bug: bool = False,
                 grid: GridSpec | None = None) -> list[tuple[str, bool, str]]:
    grid = grid or default_grid()
    results = []
    for i, (name, fn) in enumerate(CHECKS):
        ctx = Context(np.random.default_rng([seed, i]), seed, n_frames, grid, inject_bug)
        ok, detail = fn(ctx)
        results.append((name, bool(ok), detail))
    return results


def format_results(results) -> str:
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, ok, detail in results]
    n_fail = sum(not ok for _, ok, _ in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} properties passed")
    return "\n".join(lines) + "\n"
