"""Matplotlib figure rendering for the CLI report paths.

Figures land next to the delimited outputs; every helper writes a PNG and
returns its path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curves(history: list[dict], path) -> Path:
    """Per-epoch loss components plus validation dice, two stacked panels."""
    epochs = [r["epoch"] for r in history]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for key in ("l_g", "l_gs", "l_gc", "l_gp", "l_d", "l_ds", "l_dc"):
        values = [r.get(key) for r in history]
        if any(v is not None for v in values):
            ax1.plot(epochs, [np.nan if v is None else v for v in values], label=key)
    ax1.set_ylabel("loss")
    ax1.legend(ncol=4, fontsize=8)
    val = [(r["epoch"], r["val_dsc"]) for r in history if r.get("val_dsc") is not None]
    if val:
        ax2.plot(*zip(*val), marker="o", color="tab:green")
    ax2.set_ylabel("val mean fg DSC")
    ax2.set_xlabel("epoch")
    ax2.set_ylim(0, 1)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_metric_bars(rows: list[dict], class_names, path) -> Path:
    """Mean +/- std bars per class for DSC / HD / MSD from eval records."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, metric in zip(axes, ("dsc", "hd", "msd")):
        means, stds, labels = [], [], []
        for c, name in enumerate(class_names):
            vals = [r[metric] for r in rows if r["class_id"] == c and r[metric] is not None]
            if not vals:
                continue
            means.append(np.mean(vals))
            stds.append(np.std(vals))
            labels.append(name)
        ax.bar(range(len(means)), means, yerr=stds, capsize=3, color="tab:blue")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_title(metric.upper())
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_atlas_scatter(points: list[dict], path, title="style manifold (2-D projection)") -> Path:
    """Projected style vectors coloured by cluster id."""
    fig, ax = plt.subplots(figsize=(5, 5))
    u = [p["u"] for p in points]
    v = [p["v"] for p in points]
    clusters = [p.get("cluster") for p in points]
    if any(c is not None for c in clusters):
        colors = [c if c is not None else -1 for c in clusters]
        sc = ax.scatter(u, v, c=colors, cmap="tab10", s=18)
        fig.colorbar(sc, ax=ax, label="cluster", fraction=0.046)
    else:
        ax.scatter(u, v, color="tab:green", s=18)
    ax.set_xlim(-1.1, 1.1)
    ax.set_ylim(-1.1, 1.1)
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_ablation_chart(rows: list[dict], class_names, path) -> Path:
    """Grouped mean-DSC bars per configuration, foreground classes only."""
    configs = [r["variant"] for r in rows]
    fg = list(range(1, len(class_names)))
    width = 0.8 / max(1, len(fg))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for j, c in enumerate(fg):
        vals = [r["dsc_mean"].get(str(c), r["dsc_mean"].get(c)) for r in rows]
        ax.bar(
            np.arange(len(configs)) + j * width, vals, width,
            label=class_names[c],
        )
    ax.set_xticks(np.arange(len(configs)) + 0.4 - width / 2)
    ax.set_xticklabels(configs, fontsize=8)
    ax.set_ylabel("test DSC")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
