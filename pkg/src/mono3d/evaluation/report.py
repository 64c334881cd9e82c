"""Dataset-level evaluation and its JSON, text-table and CSV renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..kitti import Difficulty
from .ap import APAccumulator, MatchConfig, match_frame
from .errors import ErrorAccumulator

SCHEMA_VERSION = 1
REGIMES = (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD)
MODES = ("3d", "bev")
THRESHOLDS = (0.3, 0.5, 0.7)


def ap_key(regime: Difficulty, threshold: float, mode: str) -> str:
    return f"{regime.name.lower()}@{threshold:g}/{mode}"


@dataclass
class FrameResult:
    """Everything one frame contributes; ``merge`` is commutative."""

    ap: dict[str, APAccumulator] = field(default_factory=dict)
    errors: ErrorAccumulator = field(default_factory=ErrorAccumulator)
    n_frames: int = 0

    def merge(self, other: "FrameResult") -> "FrameResult":
        keys = sorted(set(self.ap) | set(other.ap))
        ap = {k: self.ap.get(k, APAccumulator()).merge(other.ap.get(k, APAccumulator())) for k in keys}
        return FrameResult(ap, self.errors.merge(other.errors), self.n_frames + other.n_frames)


@dataclass(frozen=True)
class EvalSettings:
    thresholds: tuple[float, ...] = THRESHOLDS
    modes: tuple[str, ...] = MODES
    regimes: tuple[Difficulty, ...] = REGIMES
    interpolation: int = 11
    class_name: str = "Car"
    bin_width: float = 10.0
    max_range: float | None = None

    def configs(self) -> Iterable[tuple[str, MatchConfig]]:
        for regime in self.regimes:
            for t in self.thresholds:
                for mode in self.modes:
                    cfg = MatchConfig(t, mode, regime, self.interpolation, self.class_name)
                    yield ap_key(regime, t, mode), cfg


def evaluate_frame(dets: Sequence, gts: Sequence, settings: EvalSettings = EvalSettings()) -> FrameResult:
    res = FrameResult(errors=ErrorAccumulator(settings.bin_width, settings.max_range), n_frames=1)
    for key, cfg in settings.configs():
        res.ap[key] = match_frame(dets, gts, cfg)
    res.errors.add_frame(dets, gts, settings.class_name)
    return res


@dataclass
class EvalReport:
    ap: dict[str, float | None]
    loc_bins: list[dict]
    size_orientation: dict
    settings: EvalSettings = field(default_factory=EvalSettings)
    n_frames: int = 0

    @classmethod
    def from_result(cls, res: FrameResult, settings: EvalSettings) -> "EvalReport":
        ap = {k: acc.average_precision(settings.interpolation) for k, acc in res.ap.items()}
        ordered = {k: ap[k] for k, _ in settings.configs() if k in ap}
        return cls(ordered, res.errors.location_bins(), res.errors.size_orientation(), settings, res.n_frames)

    def get_ap(self, regime: Difficulty, threshold: float, mode: str) -> float | None:
        return self.ap.get(ap_key(regime, threshold, mode))

    def to_dict(self) -> dict:
        s = self.settings
        return {
            "schema_version": SCHEMA_VERSION,
            "settings": {
                "thresholds": list(s.thresholds),
                "modes": list(s.modes),
                "regimes": [r.name.lower() for r in s.regimes],
                "interpolation": s.interpolation,
                "class_name": s.class_name,
                "bin_width": s.bin_width,
                "max_range": s.max_range,
            },
            "n_frames": self.n_frames,
            "ap": self.ap,
            "location_errors": self.loc_bins,
            "size_orientation_errors": self.size_orientation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {doc.get('schema_version')}")
        st = doc["settings"]
        settings = EvalSettings(
            thresholds=tuple(st["thresholds"]),
            modes=tuple(st["modes"]),
            regimes=tuple(Difficulty[r.upper()] for r in st["regimes"]),
            interpolation=st["interpolation"],
            class_name=st["class_name"],
            bin_width=st["bin_width"],
            max_range=st["max_range"],
        )
        return cls(doc["ap"], doc["location_errors"], doc["size_orientation_errors"], settings, doc["n_frames"])

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    # -- text tables ------------------------------------------------------

    def ap_table(self) -> str:
        """AP in percent, one block per IoU threshold, 3D / BEV pairs per regime."""
        s = self.settings
        header = ["IoU", *[r.name.capitalize() for r in s.regimes]]
        rows = []
        for t in s.thresholds:
            cells = [f"{t:g}"]
            for r in s.regimes:
                parts = [format_ap(self.get_ap(r, t, m)) for m in s.modes]
                cells.append(" / ".join(parts))
            rows.append(cells)
        title = "AP " + " / ".join("3D" if m == "3d" else "BEV" for m in s.modes) + f" ({s.class_name}, {s.interpolation}-point)"
        return title + "\n" + _aligned([header, *rows])

    def error_table(self) -> str:
        so = self.size_orientation
        header = ["Height (m)", "Width (m)", "Length (m)", "Orientation (rad)", "Pairs"]
        row = [format_err(so["dh"]), format_err(so["dw"]), format_err(so["dl"]), format_err(so["dyaw"]),
               str(so["count"])]
        loc_header = ["Distance (m)", "Count", "|dX| (m)", "|dY| (m)", "|dZ| (m)"]
        loc_rows = [[f"[{b['lo']:g}, {b['hi']:g})", str(b["count"]), format_err(b["dx"]),
                     format_err(b["dy"]), format_err(b["dz"])] for b in self.loc_bins]
        out = "Box parameter errors\n" + _aligned([header, row])
        out += "\n\nLocalization errors by distance\n" + _aligned([loc_header, *loc_rows])
        return out

    def to_text(self) -> str:
        return self.ap_table() + "\n\n" + self.error_table() + "\n"

    def location_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lo", "hi", "count", "dx", "dy", "dz"])
        for b in self.loc_bins:
            w.writerow([repr(float(b["lo"])), repr(float(b["hi"])), b["count"],
                        repr(b["dx"]), repr(b["dy"]), repr(b["dz"])])
        return buf.getvalue()


def format_ap(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def format_err(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def _aligned(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def evaluate(det_frames: Sequence[Sequence], gt_frames: Sequence[Sequence], settings: EvalSettings = EvalSettings()) -> EvalReport:
    if len(det_frames) != len(gt_frames):
        raise ValueError("detections and ground truth must cover the same frames")
    total = FrameResult(errors=ErrorAccumulator(settings.bin_width, settings.max_range))
    for dets, gts in zip(det_frames, gt_frames):
        total = total.merge(evaluate_frame(dets, gts, settings))
    return EvalReport.from_result(total, settings)
