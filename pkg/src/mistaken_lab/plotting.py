"""SVG charts for dataset statistics and result tables.

Output bytes are reproducible: no timestamp metadata and a fixed id salt.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import TASK_ORDER, EvalReport  # noqa: E402
from .generator import StatsReport  # noqa: E402
from .scene import CANVAS_HEIGHT, CANVAS_WIDTH, Expression  # noqa: E402

_RC = {"svg.hashsalt": "mistaken-lab", "svg.fonttype": "none", "font.size": 9}
_META = {"Date": None}

_TITLES = {
    "a": ("P(mistaken | character)", "character id"),
    "b": ("P(mistaken | expression)", "expression"),
    "c": ("P(mistaken | frame)", "frame index"),
}
_TASK_LABEL = {"joint": "Who+When", "who": "Who", "when": "When"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _bar_panel(report: StatsReport, panel: str, path: Path) -> Path:
    data = report.panel(panel)
    keys = list(data)
    if panel == "b":
        keys = [e.value for e in Expression if e.value in data]
    elif keys:
        keys = sorted(keys, key=int)
    title, xlabel = _TITLES[panel]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.bar(range(len(keys)), [data[k] for k in keys], color="#4c72b0")
        ax.set_xticks(range(len(keys)), keys, rotation=45 if panel == "b" else 0)
        ax.set_ylim(0, 1)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("fraction of present frames")
        fig.tight_layout()
        return _save(fig, path)


def _scatter_panel(report: StatsReport, path: Path) -> Path:
    pts = report.points()
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.6))
        for flag, colour, label in ((False, "#999999", "not mistaken"), (True, "#c44e52", "mistaken")):
            xs = [x for x, _, m in pts if m is flag]
            ys = [y for _, y, m in pts if m is flag]
            ax.scatter(xs, ys, s=4, c=colour, label=label, linewidths=0)
        ax.set_xlim(0, CANVAS_WIDTH)
        ax.set_ylim(CANVAS_HEIGHT, 0)     # scene y grows downward
        ax.set_aspect("equal")
        ax.set_title("head positions")
        ax.legend(loc="lower right", markerscale=3)
        fig.tight_layout()
        return _save(fig, path)


def plot_stats(report: StatsReport, out_dir: str | Path) -> list[Path]:
    """Write stats-a.svg ... stats-d.svg into ``out_dir``."""
    out = Path(out_dir)
    paths = [_bar_panel(report, p, out / f"stats-{p}.svg") for p in "abc"]
    paths.append(_scatter_panel(report, out / "stats-d.svg"))
    return paths


def plot_results(report: EvalReport, path: str | Path, title: str = "Results") -> Path:
    """Grouped bars of mean accuracy per method and task, sample std as error bars."""
    methods = report.methods()
    tasks = [t for t in TASK_ORDER if any((m, t.value) in report.values for m in methods)]
    width = 0.8 / max(len(tasks), 1)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(5, 1.1 * len(methods) + 2), 3.4))
        for i, t in enumerate(tasks):
            xs, means, errs = [], [], []
            for j, m in enumerate(methods):
                if (m, t.value) in report.values:
                    xs.append(j + (i - (len(tasks) - 1) / 2) * width)
                    means.append(report.mean(m, t))
                    errs.append(report.std(m, t))
            ax.bar(xs, means, width, yerr=errs, capsize=2, label=_TASK_LABEL[t.value])
        ax.axhline(50, color="black", linewidth=0.6, linestyle="--")
        ax.set_xticks(range(len(methods)), methods, rotation=30, ha="right")
        ax.set_ylim(0, 100)
        ax.set_ylabel("accuracy (%)")
        ax.set_title(title)
        ax.legend(ncols=len(tasks), loc="upper left", fontsize=8)
        fig.tight_layout()
        return _save(fig, Path(path))
