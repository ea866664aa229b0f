"""Report figures rendered next to the delimited outputs."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvalReport, FrequencySummary

DPI = 150


def confusion_figure(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    matrix = np.asarray(report.confusion, dtype=float)
    labels = list(report.vocabulary)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * len(labels), 0.8 + 0.6 * len(labels)))
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(labels)), labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{report.task} confusion (acc {report.accuracy:.3f})")
    threshold = matrix.max() / 2 if matrix.size else 0
    for r in range(matrix.shape[0]):
        for c in range(matrix.shape[1]):
            ax.text(
                c,
                r,
                f"{int(matrix[r, c])}",
                ha="center",
                va="center",
                fontsize=7,
                color="white" if matrix[r, c] > threshold else "black",
            )
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def sweep_figure(reports: Sequence[EvalReport], axis: str, path: str | Path) -> Path:
    path = Path(path)
    xs = [r.axis_value for r in reports]
    means = [r.seed_mean for r in reports]
    stds = [r.seed_std for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(range(len(xs)), means, yerr=stds, marker="o", capsize=3)
    ax.set_xticks(range(len(xs)), [str(x) for x in xs])
    ax.set_xlabel(axis)
    ax.set_ylabel("accuracy (mean over seeds)")
    ax.set_title(f"sweep over {axis}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def frequency_figure(summary: FrequencySummary, path: str | Path) -> Path:
    path = Path(path)
    groups = sorted(summary.groups)
    if not groups:
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.text(0.5, 0.5, "no cohorts", ha="center", va="center")
        ax.set_axis_off()
        fig.savefig(path, dpi=DPI)
        plt.close(fig)
        return path
    fig, axes = plt.subplots(len(groups), 1, figsize=(7, 3.0 * len(groups)), squeeze=False)
    for row, group in enumerate(groups):
        ax = axes[row][0]
        series = summary.groups[group]
        labels = sorted({lab for shares in series.values() for lab in shares})
        x = np.arange(len(labels))
        names = sorted(series)
        width = 0.8 / max(len(names), 1)
        for k, name in enumerate(names):
            shares = [series[name].get(lab, 0.0) for lab in labels]
            ax.bar(x + k * width, shares, width=width, label=name)
        ax.set_xticks(x + width * (len(names) - 1) / 2, labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("share (%)")
        ax.set_title(f"cohort: {group}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def token_length_figure(lengths: Sequence[int], path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if lengths:
        ax.hist(lengths, bins=min(40, max(5, len(set(lengths)))), color="#4878d0")
    ax.set_xlabel("prompt length (whitespace tokens)")
    ax.set_ylabel("records")
    ax.set_title("prompt token-length distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
