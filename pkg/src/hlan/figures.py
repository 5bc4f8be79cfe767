"""Static PNG renderings for the reporting paths: training curves,
per-label evaluation bars, and layer-overlap bars."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# fixed so reruns produce identical bytes
_SAVE_KW = {"dpi": 110, "metadata": {"Software": "hlan"}}


class FigureError(ValueError):
    """Inputs that cannot be rendered."""


def _finish(fig, path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return out


def training_curves(epochs, losses, metric_values, metric_name: str, path) -> Path:
    """Loss on the left axis, the validation metric on the right."""
    epochs = list(epochs)
    if not epochs:
        raise FigureError("no epochs to plot")
    if not (len(epochs) == len(losses) == len(metric_values)):
        raise FigureError("epochs, losses, and metric values must align")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, losses, color="#1f77b4", marker="o", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss per document", color="#1f77b4")
    twin = ax.twinx()
    twin.plot(epochs, metric_values, color="#d62728", marker="s", label=metric_name)
    twin.set_ylabel(f"validation {metric_name}", color="#d62728")
    twin.set_ylim(0.0, 1.05)
    ax.set_title("training progress")
    fig.tight_layout()
    return _finish(fig, path)


def per_label_bars(labels, values, path, metric_name: str = "f1") -> Path:
    """One bar per label; values expected in [0,1]."""
    labels = list(labels)
    values = np.asarray(values, dtype=float)
    if len(labels) != values.shape[0]:
        raise FigureError("labels and values must align")
    if len(labels) == 0:
        raise FigureError("no labels to plot")
    width = max(6.4, 0.28 * len(labels))
    fig, ax = plt.subplots(figsize=(width, 4.0))
    ax.bar(np.arange(len(labels)), values, color="#2ca02c")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel(metric_name)
    ax.set_title(f"per-label {metric_name}")
    fig.tight_layout()
    return _finish(fig, path)


def jaccard_bars(layer_names, means, stds, path) -> Path:
    """Mean neighbor overlap per analyzed layer with a std error bar."""
    layer_names = list(layer_names)
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    if not (len(layer_names) == means.shape[0] == stds.shape[0]):
        raise FigureError("layer names, means, and stds must align")
    if len(layer_names) == 0:
        raise FigureError("no layers to plot")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(
        np.arange(len(layer_names)), means, yerr=stds, capsize=4,
        color="#9467bd", error_kw={"elinewidth": 1.2},
    )
    ax.set_xticks(np.arange(len(layer_names)))
    ax.set_xticklabels(layer_names)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("mean top-k neighbor overlap")
    ax.set_title("layer vs. label-embedding neighborhoods")
    fig.tight_layout()
    return _finish(fig, path)
