"""Report bundle: read the analysis CSVs back and draw static SVG charts.

Figures are drawn only from parsed CSV cells, so every plotted number is a
CSV number.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import MissingInputError  # noqa: E402
from .pie import NO_PIES  # noqa: E402
from .readability import METRICS, UNDEFINED  # noqa: E402

CORE_CSVS = ("summary.csv", "pies.csv", "influence_bins.csv", "readability_ratios.csv")
SUPPORT_CSVS = ("pie_summary.csv", "class_distribution.csv")
FIGURES = ("pie_fraction.svg", "pie_accuracy.svg", "class_distribution.svg",
           "influence_bins.svg", "readability_ratios.svg")

plt.rcParams["svg.hashsalt"] = "pielab"
plt.rcParams["svg.fonttype"] = "path"


@dataclass
class ReportBundle:
    run_dir: Path
    csvs: list[Path] = field(default_factory=list)
    figures: list[Path] = field(default_factory=list)


def _read(path: Path) -> list[dict]:
    with path.open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(cell: str):
    return None if cell in (NO_PIES, UNDEFINED, "") else float(cell)


def _legend(ax, **kw) -> None:
    if ax.get_legend_handles_labels()[0]:
        ax.legend(**kw)


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _pie_fraction(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    series = defaultdict(list)
    for r in rows:
        if r["split"] == "test":
            series[r["pruner_id"]].append((float(r["threshold"]), float(r["pie_fraction"])))
    for pid, pts in series.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=pid)
    ax.set_xlabel("pruning threshold")
    ax.set_ylabel("fraction of test examples that are PIEs")
    _legend(ax, fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def _pie_accuracy(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    metric = rows[0]["metric"] if rows else "accuracy"
    series = defaultdict(list)
    for r in rows:
        if r["split"] == "test":
            series[r["pruner_id"]].append((float(r["threshold"]), _num(r["all_pruned_per_init_mean"]),
                                           _num(r["pie_pruned_per_init_mean"])))
    for i, (pid, pts) in enumerate(series.items()):
        pts.sort()
        color = f"C{i}"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", color=color,
                label=f"{pid} all")
        pie_pts = [(p[0], p[2]) for p in pts if p[2] is not None]
        ax.plot([p[0] for p in pie_pts], [p[1] for p in pie_pts], marker="s", ls="--",
                color=color, label=f"{pid} PIEs")
    ax.set_xlabel("pruning threshold")
    ax.set_ylabel(f"pruned {metric} (mean over inits)")
    _legend(ax, fontsize=6, ncol=2)
    fig.tight_layout()
    return _save(fig, path)


def _class_distribution(rows, path):
    test = [r for r in rows if r["split"] == "test"]
    pruners = list(dict.fromkeys(r["pruner_id"] for r in test))
    fig, axes = plt.subplots(1, max(1, len(pruners)), figsize=(3.2 * max(1, len(pruners)), 3),
                             squeeze=False)
    for ax, pid in zip(axes[0], pruners):
        mine = [r for r in test if r["pruner_id"] == pid]
        top = max(float(r["threshold"]) for r in mine)
        mine = sorted((r for r in mine if float(r["threshold"]) == top), key=lambda r: int(r["rank"]))
        x = list(range(len(mine)))
        ax.bar([i - 0.2 for i in x], [float(r["all_fraction"]) for r in mine], 0.4, label="all")
        ax.bar([i + 0.2 for i in x], [float(r["pie_fraction"]) for r in mine], 0.4, label="PIEs")
        ax.set_xticks(x, [r["class_index"] for r in mine])
        ax.set_title(f"{pid} @ {top:g}", fontsize=8)
        ax.set_xlabel("class (by train frequency)")
    axes[0][0].set_ylabel("fraction of examples")
    _legend(axes[0][0], fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def _influence_bins(rows, path):
    thresholds = sorted({float(r["threshold"]) for r in rows})
    fig, axes = plt.subplots(1, max(1, len(thresholds)), figsize=(3.2 * max(1, len(thresholds)), 3),
                             squeeze=False, sharey=True)
    for ax, t in zip(axes[0], thresholds):
        series = defaultdict(list)
        for r in rows:
            if float(r["threshold"]) == t:
                series[r["pruner_id"]].append((int(r["bin_index"]), float(r["pie_fraction"])))
        for pid, pts in series.items():
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=".", label=pid)
        ax.set_title(f"threshold {t:g}", fontsize=8)
        ax.set_xlabel("EL2N bin (low to high)")
    axes[0][0].set_ylabel("fraction of PIEs in bin")
    _legend(axes[0][0], fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def _readability(rows, path):
    fig, axes = plt.subplots(2, 4, figsize=(12, 5.5), squeeze=False)
    for ax, metric in zip(axes.ravel(), METRICS):
        series = defaultdict(list)
        for r in rows:
            v = _num(r["ratio"])
            if r["metric"] == metric and v is not None:
                series[r["pruner_id"]].append((float(r["threshold"]), v))
        for pid, pts in series.items():
            pts.sort()
            style = {"color": "black", "lw": 2} if pid == "mean" else {"alpha": 0.7}
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=".", label=pid, **style)
        ax.axhline(1.0, color="black", lw=0.8)
        ax.set_title(metric, fontsize=8)
    axes[0][0].set_ylabel("PIE mean / all mean")
    _legend(axes[0][0], fontsize=6)
    fig.tight_layout()
    return _save(fig, path)


def report(run_dir) -> ReportBundle:
    """Check the analysis CSVs exist and render the five figures."""
    run_dir = Path(run_dir)
    missing = [n for n in CORE_CSVS + SUPPORT_CSVS if not (run_dir / n).exists()]
    if missing:
        raise MissingInputError("missing analysis outputs: " + ", ".join(missing))
    fig_dir = run_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    pie_summary = _read(run_dir / "pie_summary.csv")
    figures = [
        _pie_fraction(pie_summary, fig_dir / FIGURES[0]),
        _pie_accuracy(pie_summary, fig_dir / FIGURES[1]),
        _class_distribution(_read(run_dir / "class_distribution.csv"), fig_dir / FIGURES[2]),
        _influence_bins(_read(run_dir / "influence_bins.csv"), fig_dir / FIGURES[3]),
        _readability(_read(run_dir / "readability_ratios.csv"), fig_dir / FIGURES[4]),
    ]
    return ReportBundle(run_dir, [run_dir / n for n in CORE_CSVS + SUPPORT_CSVS], figures)
