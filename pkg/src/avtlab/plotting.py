"""Figure rendering for training curves, evaluation reports, probes and trajectories."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .actions import ACTION_LABELS  # noqa: E402

# Fixed metadata keeps PNG bytes stable across reruns.
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def moving_average(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if window <= 1 or len(x) < window:
        return x
    return np.convolve(x, np.ones(window) / window, mode="valid")


def plot_training_curves(curves, path, window: int = 10) -> Path:
    ep = np.array([c.episode for c in curves])
    series = [
        ("episode length", [c.length for c in curves]),
        ("episode reward", [c.total_reward for c in curves]),
        ("mean max Q", [c.mean_q for c in curves]),
    ]
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for ax, (name, y) in zip(axes, series):
        ax.plot(ep, y, lw=0.6, alpha=0.5)
        sm = moving_average(y, window)
        if len(sm) != len(y):
            ax.plot(ep[window - 1 :], sm, lw=1.5)
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("episode")
    return _save(fig, path)


def plot_eval_report(report, path, title: str = "") -> Path:
    stats = report.per_category()
    cats = list(stats)
    x = np.arange(len(cats))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    a1.bar(x, [stats[c]["ael"] for c in cats], color="tab:blue")
    a1.axhline(report.ael, color="k", ls="--", lw=1)
    a1.set_ylabel("AEL")
    a2.bar(x, [stats[c]["aer"] for c in cats], color="tab:orange")
    a2.axhline(report.aer, color="k", ls="--", lw=1)
    a2.set_ylabel("AER")
    for ax in (a1, a2):
        ax.set_xticks(x, cats, rotation=30)
        ax.grid(axis="y", alpha=0.3)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_sweep(rows, path) -> Path:
    """``rows`` is a sequence of ``(label, report)``."""
    labels = [r[0] for r in rows]
    x = np.arange(len(rows))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(11, 4))
    a1.bar(x, [r[1].ael for r in rows])
    a2.bar(x, [r[1].aer for r in rows], color="tab:orange")
    a1.set_ylabel("AEL")
    a2.set_ylabel("AER")
    for ax in (a1, a2):
        ax.set_xticks(x, labels, rotation=40, ha="right")
        ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def plot_histogram(counts, path, title: str = "") -> Path:
    counts = np.asarray(counts)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.bar(np.arange(len(counts)), counts)
    ax.set_xticks(np.arange(len(counts)), ACTION_LABELS[: len(counts)], rotation=45)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_trajectory(records: Sequence[dict], path) -> Path:
    """Relative position and tracking error over one episode log."""

    def col(k):
        return np.array([float(r[k]) for r in records])

    step = col("step")
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    for k in ("r_body_x", "r_body_y", "r_body_z"):
        a1.plot(step, col(k), label=k[-1])
    a1.set_xlabel("step")
    a1.set_ylabel("relative position [m]")
    a1.legend()
    a2.plot(step, col("e"))
    a2.set_xlabel("step")
    a2.set_ylabel("tracking error [m]")
    for ax in (a1, a2):
        ax.grid(alpha=0.3)
    return _save(fig, path)
