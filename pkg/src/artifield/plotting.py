"""Matplotlib figure rendering for training curves and evaluation reports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_loss_curve(history: list[dict], path, title: str = "training loss"):
    """Loss against step on a log scale, one line per recorded key."""
    steps = [h["step"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in ("loss", "l1", "surf", "lap", "l0"):
        if history and key in history[0]:
            ax.plot(steps, [h[key] for h in history], label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("value")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_metric_bars(metrics: dict[str, float], path, title: str = "evaluation metrics"):
    names = sorted(metrics)
    values = [metrics[n] for n in names]
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names)), 4))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_image_pairs(pairs: list[tuple[str, np.ndarray, np.ndarray]], path):
    """Rows of (label, prediction, reference) image triptychs."""
    n = len(pairs)
    if n == 0:
        return
    fig, axes = plt.subplots(n, 3, figsize=(9, 3 * n), squeeze=False)
    for row, (label, pred, ref) in enumerate(pairs):
        for col, (img, name) in enumerate(
            [(pred, "prediction"), (ref, "reference"), (np.abs(pred - ref), "abs error")]
        ):
            ax = axes[row][col]
            ax.imshow(np.clip(img, 0.0, 1.0))
            ax.set_title(f"{label}: {name}", fontsize=9)
            ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
