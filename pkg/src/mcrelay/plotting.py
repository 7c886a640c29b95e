"""SVG rendering of SER-curve CSV files."""

from __future__ import annotations

import math
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .results import SerCurve, read_curves  # noqa: E402


def plot_curves(curves: List[SerCurve], out: Path, title: str = "") -> Path:
    plt.rcParams["svg.hashsalt"] = "mcrelay"
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    floor = None
    for c in curves:
        pts = [p for p in c.points if math.isfinite(p.x)]
        if not pts:
            continue
        xs = [p.x for p in pts]
        # zero-error points have no place on a log axis; draw them at the CI top
        ys = [p.ser if p.ser > 0 else p.ci_high for p in pts]
        lo = [max(y - p.ci_low, 0.0) for y, p in zip(ys, pts)]
        hi = [max(p.ci_high - y, 0.0) for y, p in zip(ys, pts)]
        ax.errorbar(xs, ys, yerr=[lo, hi], marker="o", ms=3, capsize=2, label=c.name)
        m = min(ys)
        floor = m if floor is None else min(floor, m)
    ax.set_yscale("log")
    if floor is not None and floor > 0:
        ax.set_ylim(bottom=10 ** math.floor(math.log10(floor)))
    if curves:
        ax.set_xlabel(f"{curves[0].parameter} [{curves[0].unit}]")
    ax.set_ylabel("SER")
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def plot_csv(csv_path: Path, out_dir: Path) -> List[Path]:
    """One SVG per sweep parameter found in the CSV."""
    curves = read_curves(csv_path)
    groups = {}
    for c in curves:
        groups.setdefault(c.parameter, []).append(c)
    written = []
    for param, group in groups.items():
        suffix = "" if len(groups) == 1 else f"_{param}"
        out = Path(out_dir) / f"{Path(csv_path).stem}{suffix}.svg"
        written.append(plot_curves(group, out, Path(csv_path).stem))
    return written
