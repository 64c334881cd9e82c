"""Run configuration: command-line flags override a flat config file, which overrides defaults.

The config file holds ``key = value`` lines (``#`` comments allowed); keys are
the long flag names with dashes or underscores, e.g.::

    grid = 39x12
    sigma-scope = 1.5
    iou = 0.3,0.5,0.7
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

CONFIG_ENV = "MONO3D_CONFIG"


def parse_grid(text: str) -> tuple[int, int]:
    try:
        sx, sy = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ValueError(f"grid must look like 39x12, got {text!r}") from None
    if sx < 1 or sy < 1:
        raise ValueError(f"grid must have at least one cell per axis, got {text!r}")
    return sx, sy


def parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ValueError(f"image size must look like 1242x375, got {text!r}") from None
    if w < 1 or h < 1:
        raise ValueError(f"image size must be positive, got {text!r}")
    return w, h


def parse_floats(text) -> tuple[float, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def parse_modes(text) -> tuple[str, ...]:
    modes = tuple(m.strip().lower() for m in str(text).split(",") if m.strip())
    for m in modes:
        if m not in ("bev", "3d"):
            raise ValueError(f"mode must be bev or 3d, got {m!r}")
    return modes


def parse_interp(text) -> int:
    v = int(text)
    if v not in (11, 40):
        raise ValueError(f"interpolation must be 11 or 40, got {text!r}")
    return v


def parse_positive(text) -> float:
    v = float(text)
    if not v > 0:
        raise ValueError(f"expected a positive number, got {text!r}")
    return v


def parse_workers(text) -> int:
    v = int(text)
    if v < 1:
        raise ValueError(f"workers must be at least 1, got {text!r}")
    return v


def parse_format(text) -> str:
    v = str(text).lower()
    if v not in ("json", "table", "csv"):
        raise ValueError(f"format must be json, table or csv, got {text!r}")
    return v


# name -> (parser, default)
OPTIONS = {
    "grid": (parse_grid, (39, 12)),
    "image_size": (parse_size, (1242, 375)),
    "sigma_scope": (parse_positive, 1.5),
    "omega": (parse_positive, 10.0),
    "alpha": (parse_positive, 10.0),
    "beta": (parse_positive, 10.0),
    "iou": (parse_floats, (0.3, 0.5, 0.7)),
    "interp": (parse_interp, 11),
    "mode": (parse_modes, ("3d", "bev")),
    "workers": (parse_workers, os.cpu_count() or 1),
    "seed": (int, 0),
    "format": (parse_format, "table"),
    "score_threshold": (float, 0.5),
    "class_name": (str, "Car"),
}


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    parser.read_string("[mono3d]\n" + text)
    return {k.replace("-", "_"): v for k, v in parser["mono3d"].items()}


def resolve(flags: dict, config_path=None) -> dict:
    """Merge parsed flags (None when not given) with the config file and defaults."""
    path = config_path or os.environ.get(CONFIG_ENV)
    from_file = read_config_file(path) if path else {}
    unknown = set(from_file) - set(OPTIONS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for name, (parse, default) in OPTIONS.items():
        if flags.get(name) is not None:
            out[name] = parse(flags[name])
        elif name in from_file:
            out[name] = parse(from_file[name])
        else:
            out[name] = default
    return out
