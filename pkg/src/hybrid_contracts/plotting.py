"""Figures for the race report."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

_CODES = {"false": 0, "true": 1, "refused": 2, "-": 3}
_COLORS = ["#d62728", "#2ca02c", "#7f7f7f", "#ffffff"]


def plot_race(rows, latencies, path: str | Path, title: str = "") -> Path:
    """Grid of verdicts: one row per event, one column per latency."""
    grid = [[_CODES[v] for v in r.verdicts] for r in rows]
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(latencies), 0.8 + 0.45 * len(rows)))
    ax.imshow(grid, cmap=ListedColormap(_COLORS), vmin=0, vmax=3, aspect="auto")
    ax.set_xticks(range(len(latencies)))
    ax.set_xticklabels([l.describe() for l in latencies])
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([f"{r.index} {r.op}" + (" *" if r.divergent else "") for r in rows])
    ax.set_xlabel("confirmation latency (ticks)")
    for i, r in enumerate(rows):
        for j, v in enumerate(r.verdicts):
            ax.text(j, i, v, ha="center", va="center", fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
