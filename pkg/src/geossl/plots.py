"""Matplotlib figures for dataset, clustering and training diagnostics.

Everything renders through the Agg backend so plots work headless; each
function writes a PNG and returns the path.
"""

from __future__ import annotations

import pathlib

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import DatasetManifest  # noqa: E402
from .errors import ValidationError  # noqa: E402
from .geocluster import ClusterStats, GeoClusterModel, assign_many  # noqa: E402
from .trainer import TraceRow  # noqa: E402


def plot_views_histogram(manifest: DatasetManifest, path: str | pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    counts = [len(a.views) for a in manifest.areas]
    if not counts:
        raise ValidationError("manifest has no areas to plot")
    fig, ax = plt.subplots(figsize=(5, 3.2))
    hi = max(counts)
    ax.hist(counts, bins=np.arange(0.5, hi + 1.5), edgecolor="black", color="#4878a8")
    ax.set_xticks(range(1, hi + 1))
    ax.set_xlabel("views per area")
    ax.set_ylabel("areas")
    ax.set_title(f"{manifest.n_areas} areas, {manifest.total_samples} views")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cluster_map(
    manifest: DatasetManifest, model: GeoClusterModel, path: str | pathlib.Path
) -> pathlib.Path:
    """Scatter of area coordinates colored by cluster, centroids marked."""
    path = pathlib.Path(path)
    coords = np.array([(a.views[0].lat, a.views[0].lon) for a in manifest.areas])
    if coords.size == 0:
        raise ValidationError("manifest has no areas to plot")
    assign = assign_many(model, coords)
    fig, ax = plt.subplots(figsize=(6, 4))
    cmap = plt.get_cmap("tab20")
    for c in range(1, model.k + 1):
        mask = assign == c
        if not np.any(mask):
            continue
        ax.scatter(coords[mask, 1], coords[mask, 0], s=8,
                   color=cmap((c - 1) % 20), label=None)
    ax.scatter(model.centroids[:, 1], model.centroids[:, 0], s=60, marker="x",
               color="black", linewidths=1.5)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(f"{model.k} location clusters")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cluster_stats(stats: ClusterStats, path: str | pathlib.Path) -> pathlib.Path:
    """Side-by-side bars: areas per cluster and distinct labels per cluster."""
    path = pathlib.Path(path)
    clusters = sorted(stats.areas_per_cluster)
    sizes = [stats.areas_per_cluster[c] for c in clusters]
    n_labels = [stats.labels_per_cluster.get(c, 0) for c in clusters]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].bar(clusters, sizes, color="#4878a8")
    axes[0].set_xlabel("cluster")
    axes[0].set_ylabel("areas")
    axes[1].bar(clusters, n_labels, color="#a85448")
    axes[1].set_xlabel("cluster")
    axes[1].set_ylabel("distinct labels")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss_curves(trace: list[TraceRow], path: str | pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    if not trace:
        raise ValidationError("empty trace")
    step = np.arange(len(trace))
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(step, [r.loss_total for r in trace], label="total", color="black", lw=1.0)
    if any(r.loss_contrastive != 0.0 for r in trace):
        ax.plot(step, [r.loss_contrastive for r in trace], label="contrastive",
                color="#4878a8", lw=0.8, alpha=0.8)
    if any(r.loss_geo != 0.0 for r in trace):
        ax.plot(step, [r.loss_geo for r in trace], label="classification",
                color="#a85448", lw=0.8, alpha=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_per_class(
    per_class_single: dict[int, float],
    per_class_temporal: dict[int, float] | None,
    path: str | pathlib.Path,
) -> pathlib.Path:
    path = pathlib.Path(path)
    classes = sorted(per_class_single)
    x = np.arange(len(classes))
    width = 0.38 if per_class_temporal else 0.7
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.bar(x - (width / 2 if per_class_temporal else 0),
           [per_class_single[c] for c in classes], width, label="single view",
           color="#4878a8")
    if per_class_temporal:
        ax.bar(x + width / 2, [per_class_temporal.get(c, 0.0) for c in classes],
               width, label="temporal", color="#a85448")
    ax.set_xticks(x)
    ax.set_xticklabels([str(c) for c in classes])
    ax.set_xlabel("class")
    ax.set_ylabel("recall")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
