"""SVG rendering of ROC, heatmap, FDT-GS trace and speed-performance sweep CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import io  # noqa: E402

# Fixed hash salt and no date stamp keep SVG output byte-identical across runs.
plt.rcParams["svg.hashsalt"] = "octx"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_roc(csv_path, svg_path, label="twin-cross"):
    fpr, tpr, _ = io.read_roc(csv_path)
    auc = float(np.trapezoid(tpr, fpr))
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(fpr, tpr, lw=1.5, label=f"{label} (AUC {auc:.3f})")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    _save(fig, svg_path)


def plot_heatmap(csv_path, svg_path, title=None):
    field = io.read_heatmap(csv_path)
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(field, vmin=0.0, vmax=1.0, cmap="magma", interpolation="nearest")
    fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    _save(fig, svg_path)


def plot_search_trace(csv_path, svg_path):
    rows = np.array(io.read_search_trace(csv_path), dtype=np.float64)
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
    a1.plot(rows[:, 0], rows[:, 1], marker="o", ms=3)
    a1.set_ylabel("objective")
    a2.plot(rows[:, 0], rows[:, 2], marker="o", ms=3, label="low")
    a2.plot(rows[:, 0], rows[:, 3], marker="s", ms=3, label="high")
    a2.set_xlabel("iteration")
    a2.set_ylabel("threshold")
    a2.legend()
    _save(fig, svg_path)


def plot_sweep(csv_path, svg_path):
    rows = io.read_sweep(csv_path)
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, fps, acc, index in rows:
        marker = "*" if name.startswith("adaptive") else "o"
        ax.scatter(fps, index, marker=marker, s=60 if marker == "*" else 30)
        ax.annotate(name, (fps, index), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("delivered frames per second")
    ax.set_ylabel("speed-performance index")
    _save(fig, svg_path)


PLOTTERS = {"roc": plot_roc, "heatmap": plot_heatmap, "trace": plot_search_trace,
            "sweep": plot_sweep}
