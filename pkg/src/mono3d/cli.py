"""``mono3d`` command line: one subcommand per pipeline stage, composed through files."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .assignment import GridSpec
from .config import CONFIG_ENV, resolve
from .encoding import (
    decode,
    encode,
    targets_from_csv,
    targets_from_json,
    targets_to_csv,
    targets_to_json,
)
from .evaluation import EvalReport, EvalSettings, evaluate_frame
from .evaluation.plots import render_figures
from .evaluation.report import FrameResult
from .evaluation.errors import ErrorAccumulator
from .kitti import (
    KittiParseError,
    classify_difficulty,
    format_calib_file,
    format_label_file,
    format_label_line,
    parse_calib_file,
    parse_label_file,
    with_score,
)
from .losses import LossWeights, compute_losses
from .pipeline import gt_pairs, synth_frame
from .selftest import format_results, run_selftest
from .synth import KITTI_INTRINSICS, Perturbation, SceneConfig


class CommandError(Exception):
    """A user-facing failure; printed without a traceback and exits with status 2."""


# -- shared helpers ---------------------------------------------------------


def _frames(directory: Path, suffix: str) -> dict[str, Path]:
    if not directory.is_dir():
        raise CommandError(f"not a directory: {directory}")
    return {p.stem: p for p in sorted(directory.glob(f"*{suffix}"))}


def _grid(cfg: dict) -> GridSpec:
    w, h = cfg["image_size"]
    sx, sy = cfg["grid"]
    return GridSpec.from_cells(w, h, sx, sy, cfg["sigma_scope"])


def _read_labels(path: Path):
    try:
        return parse_label_file(path.read_text())
    except KittiParseError as exc:
        raise CommandError(f"{path}: {exc}") from None


def _read_calib(path: Path):
    try:
        return parse_calib_file(path.read_text())
    except KittiParseError as exc:
        raise CommandError(f"{path}: {exc}") from None


def _read_targets(path: Path):
    text = path.read_text()
    try:
        return targets_from_json(text) if path.suffix == ".json" else targets_from_csv(text)
    except (ValueError, KeyError) as exc:
        raise CommandError(f"{path}: {exc}") from None


def _target_files(directory: Path) -> dict[str, Path]:
    files = _frames(directory, ".json")
    files.update(_frames(directory, ".csv"))
    return dict(sorted(files.items()))


def _calibs_for(frames, calib_dir: Path) -> dict:
    available = _frames(calib_dir, ".txt")
    missing = [f for f in frames if f not in available]
    if missing:
        raise CommandError(f"missing calibration for frames: {', '.join(missing)}")
    return {f: _read_calib(available[f]) for f in frames}


def _write_all(outputs: dict[Path, str]) -> None:
    # Everything is computed before the first write so failures leave no partial output.
    for path, text in outputs.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*items)))


def _settings(cfg: dict, args) -> EvalSettings:
    return EvalSettings(thresholds=cfg["iou"], modes=cfg["mode"], interpolation=cfg["interp"],
                        class_name=cfg["class_name"], bin_width=args.bin_width)


# -- subcommands ------------------------------------------------------------


def cmd_parse(args, cfg) -> int:
    failed = 0
    for path in map(Path, args.files):
        try:
            records = _read_labels(path)
        except (CommandError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            failed += 1
            continue
        if cfg["format"] == "json":
            doc = [{**asdict(r), "difficulty": classify_difficulty(r).name.lower()} for r in records]
            print(json.dumps({"file": str(path), "records": doc}))
        else:
            print(f"# {path}: {len(records)} records")
            for r in records:
                print(format_label_line(r))
    return 1 if failed else 0


def cmd_encode(args, cfg) -> int:
    grid = _grid(cfg)
    labels = _frames(Path(args.labels), ".txt")
    calibs = _calibs_for(labels, Path(args.calib))
    out_dir = Path(args.out)
    ext = ".json" if cfg["format"] == "json" else ".csv"
    outputs, n_obj, n_cells = {}, 0, 0
    for frame, path in labels.items():
        pairs = gt_pairs(_read_labels(path), cfg["class_name"])
        t = encode(pairs, calibs[frame].intrinsics, grid)
        n_obj += len(pairs)
        n_cells += int(t.mask.sum())
        outputs[out_dir / f"{frame}{ext}"] = targets_to_json(t, grid) if ext == ".json" else targets_to_csv(t, grid)
    _write_all(outputs)
    print(f"encoded {len(labels)} frames, {n_obj} objects, {n_cells} assigned cells")
    return 0


def cmd_decode(args, cfg) -> int:
    targets = _target_files(Path(args.targets))
    calibs = _calibs_for(targets, Path(args.calib))
    outputs, n_det = {}, 0
    for frame, path in targets.items():
        t, grid = _read_targets(path)
        dets = decode(t, calibs[frame].intrinsics, grid, cfg["score_threshold"], args.nms_iou)
        n_det += len(dets)
        outputs[Path(args.out) / f"{frame}.txt"] = format_label_file(d.to_label(cfg["class_name"]) for d in dets)
    _write_all(outputs)
    print(f"decoded {len(targets)} frames, {n_det} detections")
    return 0


def cmd_losscheck(args, cfg) -> int:
    preds = _target_files(Path(args.pred))
    gts = _target_files(Path(args.gt))
    if set(preds) != set(gts):
        missing = sorted(set(preds) ^ set(gts))
        raise CommandError(f"prediction and target frames differ: {', '.join(missing)}")
    calibs = _calibs_for(gts, Path(args.calib))
    w = LossWeights(cfg["omega"], cfg["alpha"], cfg["beta"])
    rows = []
    for frame in gts:
        pred, grid = _read_targets(preds[frame])
        gt, _ = _read_targets(gts[frame])
        rows.append((frame, compute_losses(pred, gt, calibs[frame].intrinsics, grid, w, args.normalize)))
    if cfg["format"] == "json":
        print(json.dumps({f: r.to_dict() for f, r in rows}, indent=1))
        return 0
    keys = list(rows[0][1].to_dict()) if rows else []
    sep = "," if cfg["format"] == "csv" else "\t"
    print(sep.join(["frame", *keys]))
    for frame, r in rows:
        print(sep.join([frame, *(repr(v) for v in r.to_dict().values())]))
    return 0


def _frame_result(dets, gts, settings):
    return evaluate_frame(dets, gts, settings)


def _scored(records):
    # Detection files without a score column count as fully confident.
    return [r if r.score is not None else with_score(r, 1.0) for r in records]


def write_report(report: EvalReport, out_dir: Path, fmt: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {"report.json": report.to_json() + "\n", "report.txt": report.to_text(),
             "location_errors.csv": report.location_csv()}
    paths = []
    for name, text in files.items():
        (out_dir / name).write_text(text)
        paths.append(out_dir / name)
    return paths + render_figures(report, out_dir, fmt)


def _print_report(report: EvalReport, fmt: str) -> None:
    if fmt == "json":
        print(report.to_json())
    elif fmt == "csv":
        print(report.location_csv(), end="")
    else:
        print(report.to_text(), end="")


def cmd_eval(args, cfg) -> int:
    gt_files = _frames(Path(args.gt), ".txt")
    det_files = _frames(Path(args.det), ".txt")
    if det_files and set(det_files) != set(gt_files):
        lines = []
        if set(gt_files) - set(det_files):
            lines.append("no detections for: " + ", ".join(sorted(set(gt_files) - set(det_files))))
        if set(det_files) - set(gt_files):
            lines.append("no ground truth for: " + ", ".join(sorted(set(det_files) - set(gt_files))))
        raise CommandError("frame mismatch between detections and ground truth; " + "; ".join(lines))
    settings = _settings(cfg, args)
    items = [(_scored(_read_labels(det_files[f])) if det_files else [], _read_labels(p), settings)
             for f, p in gt_files.items()]
    total = FrameResult(errors=ErrorAccumulator(settings.bin_width, settings.max_range))
    for res in _map(_frame_result, items, cfg["workers"]):
        total = total.merge(res)
    report = EvalReport.from_result(total, settings)
    if args.out:
        write_report(report, Path(args.out), args.figure_format)
    _print_report(report, cfg["format"])
    return 0


def _synth_one(seed, frame, grid, scene_cfg, noise, score_threshold, k):
    fr = synth_frame(seed, frame, k, grid, scene_cfg, noise, score_threshold)
    return format_label_file(fr.labels), format_label_file(d.to_label(scene_cfg.class_name) for d in fr.detections)


def cmd_synth(args, cfg) -> int:
    grid = _grid(cfg)
    k = KITTI_INTRINSICS
    scene_cfg = SceneConfig(n_objects=args.objects, truncation_fraction=args.truncation, class_name=cfg["class_name"])
    noise = Perturbation(offset_px=2.0, size_rel=0.05, depth_m=0.5, center_px=2.0, location_m=0.1,
                         corner_m=0.05, yaw_rad=0.05, score=0.1).scaled(args.noise)
    items = [(cfg["seed"], f, grid, scene_cfg, noise, cfg["score_threshold"], k) for f in range(args.frames)]
    results = _map(_synth_one, items, cfg["workers"])
    out = Path(args.out)
    outputs = {}
    calib = format_calib_file(k)
    for f, (labels, dets) in enumerate(results):
        name = f"{f:06d}"
        outputs[out / "label_2" / f"{name}.txt"] = labels
        outputs[out / "calib" / f"{name}.txt"] = calib
        if not args.no_det:
            outputs[out / "det" / f"{name}.txt"] = dets
    _write_all(outputs)
    print(f"wrote {args.frames} frames to {out}")
    return 0


def cmd_selftest(args, cfg) -> int:
    results = run_selftest(cfg["seed"], args.frames, inject_bug=args.inject_bug)
    print(format_results(results), end="")
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_report(args, cfg) -> int:
    path = Path(args.report)
    try:
        report = EvalReport.from_json(path.read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError(f"{path}: {exc}") from None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report.to_text())
        (out / "location_errors.csv").write_text(report.location_csv())
        render_figures(report, out, args.figure_format)
    _print_report(report, cfg["format"])
    return 0


# -- argument parsing -------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (flags override --config, which overrides defaults)")
    g.add_argument("--config", help=f"flat key = value file; defaults to ${CONFIG_ENV}")
    g.add_argument("--grid", help="cell grid as SXxSY, e.g. 39x12")
    g.add_argument("--image-size", help="image size as WxH, e.g. 1242x375")
    g.add_argument("--sigma-scope", help="assignment radius in cell sizes")
    g.add_argument("--omega")
    g.add_argument("--alpha")
    g.add_argument("--beta")
    g.add_argument("--iou", help="comma separated IoU thresholds")
    g.add_argument("--interp", help="AP interpolation points, 11 or 40")
    g.add_argument("--mode", help="bev, 3d or both comma separated")
    g.add_argument("--workers", help="frame-level worker processes")
    g.add_argument("--seed")
    g.add_argument("--format", help="json, table or csv")
    g.add_argument("--score-threshold")
    g.add_argument("--class-name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mono3d", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse KITTI label files and print them")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("encode", help="encode label files into per-cell target tables")
    p.add_argument("--labels", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode target tables into scored KITTI detections")
    p.add_argument("--targets", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("losscheck", help="evaluate the loss terms between predicted and target tables")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--normalize", action="store_true", help="divide L1 sums by the assigned cell count")
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("eval", help="AP and error metrics of detections against ground truth")
    p.add_argument("--det", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="directory for report.json, report.txt, CSV and figures")
    p.add_argument("--bin-width", type=float, default=10.0)
    p.add_argument("--figure-format", default="png", choices=("png", "svg", "pdf"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic KITTI-style dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--objects", type=int, default=5)
    p.add_argument("--truncation", type=float, default=0.2)
    p.add_argument("--noise", type=float, default=0.0, help="scale of the detection perturbation")
    p.add_argument("--no-det", action="store_true", help="skip the det/ directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("selftest", help="run the closed-loop invariant checks")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("report", help="render a report.json as tables and figures")
    p.add_argument("report")
    p.add_argument("--out")
    p.add_argument("--figure-format", default="png", choices=("png", "svg", "pdf"))
    p.set_defaults(func=cmd_report)

    for action in sub.choices.values():
        _common(action)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: getattr(args, k, None) for k in
             ("grid", "image_size", "sigma_scope", "omega", "alpha", "beta", "iou", "interp", "mode",
              "workers", "seed", "format", "score_threshold", "class_name")}
    try:
        cfg = resolve(flags, args.config)
        return args.func(args, cfg)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
