"""Figures written next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import EvalReport, ap_key  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "mono3d",
}


def _save(fig, path: Path) -> Path:
    # Fixed metadata keeps repeated renders byte-identical.
    meta = {"Software": None} if path.suffix == ".png" else {"Date": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def plot_localization_errors(report: EvalReport, path) -> Path:
    """Mean |dX|, |dY|, |dZ| against distance bin, one panel per axis."""
    path = Path(path)
    bins = report.loc_bins
    mids = [0.5 * (b["lo"] + b["hi"]) for b in bins]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(9.0, 2.8), sharex=True)
        for ax, key, label in zip(axes, ("dx", "dy", "dz"), ("Horizontal", "Vertical", "Depth")):
            ax.plot(mids, [b[key] for b in bins], marker="o", color="tab:red", lw=1.2)
            ax.set_title(label)
            ax.set_xlabel("distance (m)")
            ax.set_ylim(bottom=0)
        axes[0].set_ylabel("mean error (m)")
        fig.tight_layout()
        return _save(fig, path)


def plot_ap(report: EvalReport, path) -> Path:
    """AP per regime, one group of bars per IoU threshold and mode."""
    path = Path(path)
    s = report.settings
    groups = [(t, m) for t in s.thresholds for m in s.modes]
    width = 0.8 / max(len(s.regimes), 1)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(groups)), 2.8))
        for i, regime in enumerate(s.regimes):
            vals = [report.ap.get(ap_key(regime, t, m)) for t, m in groups]
            xs = [j + (i - (len(s.regimes) - 1) / 2) * width for j in range(len(groups))]
            ax.bar(xs, [100.0 * (v or 0.0) for v in vals], width, label=regime.name.capitalize())
        ax.set_xticks(range(len(groups)))
        ax.set_xticklabels([f"{'3D' if m == '3d' else 'BEV'}@{t:g}" for t, m in groups])
        ax.set_ylabel("AP (%)")
        ax.set_ylim(0, 100)
        ax.legend(frameon=False, ncol=len(s.regimes))
        fig.tight_layout()
        return _save(fig, path)


def render_figures(report: EvalReport, out_dir, fmt: str = "png") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [plot_ap(report, out / f"ap.{fmt}")]
    if report.loc_bins:
        paths.append(plot_localization_errors(report, out / f"localization_errors.{fmt}"))
    return paths
