"""SVG figures rendered from the report's CSV tables.

matplotlib is imported lazily so the core library never needs it.
"""

from __future__ import annotations

import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .report import read_table


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no timestamp so repeated renders are byte-identical
    matplotlib.rcParams["svg.hashsalt"] = "sefdm-cnn"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _slug(*parts) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", "-".join(p for p in parts if p))


def plot_curves(curves_csv, out_path) -> Path:
    """Accuracy versus Es/N0, one line per model/test-set/condition."""
    plt = _pyplot()
    series = defaultdict(list)
    for row in read_table(curves_csv):
        if row["esn0_db"] == "noiseless":
            continue
        label = row["model"] if row["condition"] == "direct" else f"{row['model']} ({row['condition']})"
        if row["test_set"]:
            label += f" / {row['test_set']}"
        series[label].append((float(row["esn0_db"]), float(row["accuracy"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(series):
        pts = sorted(series[label])
        ax.plot([p[0] for p in pts], [100 * p[1] for p in pts], marker="o", ms=3, label=label)
    ax.set_xlabel("Es/N0 (dB)")
    ax.set_ylabel("Accuracy (%)")
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend(fontsize=7)
    fig.tight_layout()
    try:
        return _save(fig, Path(out_path))
    finally:
        plt.close(fig)


def plot_confusions(confusion_csv, out_dir) -> list:
    """One row-normalised heatmap per evaluated model."""
    plt = _pyplot()
    tables = defaultdict(list)
    for row in read_table(confusion_csv):
        tables[(row["model"], row["test_set"], row["condition"])].append(row)
    paths = []
    for key in sorted(tables):
        rows = tables[key]
        names = list(dict.fromkeys(r["true_class"] for r in rows))
        idx = {n: i for i, n in enumerate(names)}
        counts = np.zeros((len(names), len(names)))
        for r in rows:
            counts[idx[r["true_class"]], idx[r["predicted_class"]]] = int(r["count"])
        totals = counts.sum(axis=1, keepdims=True)
        frac = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
        fig, ax = plt.subplots(figsize=(4.5, 4))
        ax.imshow(frac, vmin=0, vmax=1, cmap="Blues")
        for i in range(len(names)):
            for j in range(len(names)):
                ax.text(j, i, f"{100 * frac[i, j]:.0f}", ha="center", va="center", fontsize=7,
                        color="white" if frac[i, j] > 0.5 else "black")
        ax.set_xticks(range(len(names)), names)
        ax.set_yticks(range(len(names)), names)
        ax.set_xlabel("Predicted class")
        ax.set_ylabel("True class")
        ax.set_title(" / ".join(k for k in key if k and k != "direct"), fontsize=9)
        fig.tight_layout()
        try:
            paths.append(_save(fig, Path(out_dir) / f"confusion-{_slug(*key)}.svg"))
        finally:
            plt.close(fig)
    return paths


def render_report(report_dir) -> list:
    report_dir = Path(report_dir)
    paths = [plot_curves(report_dir / "curves.csv", report_dir / "curves.svg")]
    paths += plot_confusions(report_dir / "confusion.csv", report_dir)
    return paths
