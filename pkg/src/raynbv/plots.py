"""Figures for a finished run: per-iteration metrics and the selected views on the hemisphere."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_report(rows, path) -> None:
    """Mean candidate entropy, train PSNR and F-score against iteration.

    ``rows`` are IterationRow objects or dicts read back from report.csv.
    """
    def get(r, attr, key):
        return float(getattr(r, attr)) if hasattr(r, attr) else float(r[key])

    it = [int(get(r, "iteration", "iter")) for r in rows]
    series = [
        ("mean entropy (nats)", [get(r, "mean_entropy", "mean_entropy") for r in rows]),
        ("train PSNR (dB)", [get(r, "psnr", "psnr") for r in rows]),
        ("F-score", [get(r, "fscore", "fscore") for r in rows]),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, (label, ys) in zip(axes, series):
        ax.plot(it, ys, "o-", color="tab:blue")
        ax.set_xlabel("iteration")
        ax.set_ylabel(label)
        ax.set_xticks(it)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_selection(vs, clustering, train_ids, chosen, path) -> None:
    """Polar map of the view space: radius = 90 deg - elevation, sections shaded by id."""
    section = clustering.section_of()
    n_sec = max(len(clustering.sections), 1)
    cmap = plt.get_cmap("tab20")
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="polar")
    az = np.array([v.azimuth for v in vs.views])
    rad = np.array([90.0 - math.degrees(v.elevation) for v in vs.views])
    colors = [cmap(section[v.id] % 20 / 20) if v.id in section else (0.7, 0.7, 0.7, 1.0) for v in vs.views]
    ax.scatter(az, rad, s=14, c=colors, alpha=0.6, linewidths=0)
    train = [vs.view(v) for v in train_ids]
    ax.scatter([v.azimuth for v in train], [90.0 - math.degrees(v.elevation) for v in train],
               s=50, facecolors="none", edgecolors="k", label="training")
    picks = [vs.view(v) for v in chosen]
    ax.scatter([v.azimuth for v in picks], [90.0 - math.degrees(v.elevation) for v in picks],
               s=70, marker="*", c="tab:red", label="selected")
    ax.set_rlim(0, 90)
    ax.set_title(f"{len(picks)} selected, {n_sec} sections", fontsize=10)
    ax.legend(loc="lower left", bbox_to_anchor=(-0.1, -0.12), fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
