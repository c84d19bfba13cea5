"""Figures rendered next to the delimited outputs: loss curves, F1 by
dependency distance, and ablation comparisons."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import AblationRow, EvalReport, REPORT_CASES
from .training import EpochStats

_DISTANCE_COLUMNS = (("dep", "Dep"), ("d2", "2"), ("d3", "3"),
                     ("d4", "4"), ("d5plus", ">=5"))


def plot_history(history: Sequence[EpochStats], path: str | Path) -> Path:
    epochs = [row.epoch for row in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [row.train_loss for row in history], marker="o",
            markersize=3, label="train")
    ax.plot(epochs, [row.dev_loss for row in history], marker="s",
            markersize=3, label="dev")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def plot_f1_by_distance(report: EvalReport, path: str | Path) -> Path:
    positions = np.arange(len(_DISTANCE_COLUMNS))
    width = 0.8 / len(REPORT_CASES)
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, case in enumerate(REPORT_CASES):
        values = [report.mean_f1(case, stratum) for stratum, _ in _DISTANCE_COLUMNS]
        ax.bar(positions + (i - (len(REPORT_CASES) - 1) / 2) * width, values,
               width, label=case)
    ax.set_xticks(positions)
    ax.set_xticklabels([label for _, label in _DISTANCE_COLUMNS])
    ax.set_xlabel("dependency distance")
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def plot_ablation(rows: Sequence[AblationRow], path: str | Path) -> Path:
    strata = (("overall", "ALL"), ("dep", "Dep"), ("zero", "Zero"))
    positions = np.arange(len(rows))
    width = 0.8 / len(strata)
    fig, ax = plt.subplots(figsize=(1.5 + 1.8 * len(rows), 4))
    for i, (stratum, label) in enumerate(strata):
        values = [row.report.f1("ALL", stratum) for row in rows]
        ax.bar(positions + (i - (len(strata) - 1) / 2) * width, values,
               width, label=label)
    ax.set_xticks(positions)
    ax.set_xticklabels([row.name for row in rows], rotation=20, ha="right")
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
