"""KITTI label and calibration files, plus difficulty classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .boxes import ABBox3D, Box2D
from .geometry import BehindCameraError, CameraIntrinsics


class KittiParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class Difficulty(enum.IntEnum):
    """Ordered so that a harder regime compares greater."""

    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3


@dataclass(frozen=True)
class DifficultyThresholds:
    min_height: tuple[float, float, float] = (40.0, 25.0, 25.0)
    max_occlusion: tuple[int, int, int] = (0, 1, 2)
    max_truncation: tuple[float, float, float] = (0.15, 0.30, 0.50)


DEFAULT_THRESHOLDS = DifficultyThresholds()


@dataclass(frozen=True)
class LabelRecord:
    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple[float, float, float, float]  # left, top, right, bottom
    dims: tuple[float, float, float]  # h, w, l
    location: tuple[float, float, float]  # bottom-face center, camera frame
    rotation_y: float
    score: float | None = None

    @property
    def height_px(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == "DontCare"

    def box3d(self) -> ABBox3D:
        h, w, l = self.dims
        return ABBox3D(center_from_kitti(self.location, h), h, w, l, self.rotation_y)

    def box2d(self) -> Box2D:
        return Box2D.from_ltrb(*self.bbox2d)


@dataclass(frozen=True)
class Calibration:
    """Intrinsics pulled from P2, with the full matrix kept for exact projection."""

    intrinsics: CameraIntrinsics
    p2: np.ndarray = field(repr=False)

    @property
    def translation(self) -> np.ndarray:
        return self.p2[:, 3].copy()


def _fmt(x: float) -> str:
    # repr is the shortest string that parses back to the same double.
    return repr(float(x))


def _parse_floats(tokens, line_no):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise KittiParseError(f"non-numeric field ({exc})", line_no) from None


def parse_label_line(line: str, line_no: int | None = None) -> LabelRecord:
    tokens = line.split()
    if len(tokens) not in (15, 16):
        raise KittiParseError(f"expected 15 or 16 fields, got {len(tokens)}", line_no)
    vals = _parse_floats(tokens[1:], line_no)
    occ = vals[1]
    if occ != int(occ):
        raise KittiParseError(f"occlusion must be an integer, got {tokens[2]}", line_no)
    return LabelRecord(
        class_name=tokens[0],
        truncation=vals[0],
        occlusion=int(occ),
        alpha=vals[2],
        bbox2d=tuple(vals[3:7]),
        dims=tuple(vals[7:10]),
        location=tuple(vals[10:13]),
        rotation_y=vals[13],
        score=vals[14] if len(vals) == 15 else None,
    )


def parse_label_file(text: str) -> list[LabelRecord]:
    """One record per non-blank line; DontCare lines are kept."""
    records = []
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            records.append(parse_label_line(line, i))
    return records


def format_label_line(r: LabelRecord) -> str:
    fields = [r.class_name, _fmt(r.truncation), str(int(r.occlusion)), _fmt(r.alpha)]
    fields += [_fmt(v) for v in (*r.bbox2d, *r.dims, *r.location, r.rotation_y)]
    if r.score is not None:
        fields.append(_fmt(r.score))
    return " ".join(fields)


def format_label_file(records: Iterable[LabelRecord]) -> str:
    return "".join(format_label_line(r) + "\n" for r in records)


def parse_calib_file(text: str) -> Calibration:
    for i, line in enumerate(text.splitlines(), start=1):
        key, sep, rest = line.partition(":")
        if not sep or key.strip() != "P2":
            continue
        tokens = rest.split()
        if len(tokens) != 12:
            raise KittiParseError(f"P2 needs 12 numbers, got {len(tokens)}", i)
        p2 = np.array(_parse_floats(tokens, i), dtype=np.float64).reshape(3, 4)
        try:
            k = CameraIntrinsics(p2[0, 0], p2[1, 1], p2[0, 2], p2[1, 2])
        except ValueError as exc:
            raise KittiParseError(str(exc), i) from None
        p2.setflags(write=False)
        return Calibration(k, p2)
    raise KittiParseError("no P2 row in calibration file")


def format_calib_file(k: CameraIntrinsics, translation=(0.0, 0.0, 0.0)) -> str:
    t = [float(x) for x in translation]
    p2 = [k.fx, 0.0, k.px, t[0], 0.0, k.fy, k.py, t[1], 0.0, 0.0, 1.0, t[2]]
    p_rect = [k.fx, 0.0, k.px, 0.0, 0.0, k.fy, k.py, 0.0, 0.0, 0.0, 1.0, 0.0]
    lines = [f"P{i}: " + " ".join(_fmt(v) for v in p_rect) for i in (0, 1)]
    lines.append("P2: " + " ".join(_fmt(v) for v in p2))
    lines.append("P3: " + " ".join(_fmt(v) for v in p_rect))
    return "\n".join(lines) + "\n"


def project_p2(points, p2) -> np.ndarray:
    """Exact KITTI projection with the full 3x4 P2, translation column included."""
    p = np.asarray(points, dtype=np.float64)
    m = np.asarray(p2, dtype=np.float64)
    hom = p @ m[:, :3].T + m[:, 3]
    if np.any(~(hom[..., 2] > 0)):
        raise BehindCameraError("point at or behind the camera plane")
    return hom[..., :2] / hom[..., 2:3]


def center_from_kitti(location, h: float) -> np.ndarray:
    """KITTI bottom-face center to geometric center (Y points down)."""
    x, y, z = (float(v) for v in location)
    return np.array([x, y - h / 2.0, z])


def kitti_from_center(center, h: float) -> np.ndarray:
    x, y, z = (float(v) for v in center)
    return np.array([x, y + h / 2.0, z])


def classify_difficulty(r: LabelRecord, thresholds: DifficultyThresholds = DEFAULT_THRESHOLDS) -> Difficulty:
    height = r.height_px
    for level in (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD):
        if (
            height >= thresholds.min_height[level]
            and r.occlusion <= thresholds.max_occlusion[level]
            and r.truncation <= thresholds.max_truncation[level]
        ):
            return level
    return Difficulty.IGNORED


def record_from_box(
    class_name: str,
    box: ABBox3D,
    box2d: Box2D,
    alpha: float,
    truncation: float = 0.0,
    occlusion: int = 0,
    score: float | None = None,
) -> LabelRecord:
    loc = kitti_from_center(box.center, box.h)
    return LabelRecord(
        class_name=class_name,
        truncation=float(truncation),
        occlusion=int(occlusion),
        alpha=float(alpha),
        bbox2d=tuple(float(v) for v in box2d.ltrb()),
        dims=(box.h, box.w, box.l),
        location=tuple(float(v) for v in loc),
        rotation_y=box.yaw,
        score=None if score is None else float(score),
    )


def with_score(r: LabelRecord, score: float | None) -> LabelRecord:
    return replace(r, score=score)

