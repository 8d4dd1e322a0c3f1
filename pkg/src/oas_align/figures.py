"""Figure rendering for report outputs.

Kept separate from the numeric modules: everything here consumes already
computed report data and writes PNG files next to the delimited output.
Importing this module selects the Agg backend so rendering works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .viterbi import AlignmentPath

_DPI = 150


def plot_layer_profile(per_layer: Sequence[float], k: int, out_path: str | Path) -> Path:
    """Line plot of the per-layer top-k mean score against layer depth."""
    values = np.asarray(per_layer, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(np.arange(values.size), values, marker="o", lw=1.5)
    ax.set_xlabel("layer")
    ax.set_ylabel(f"mean of top-{k} head scores")
    ax.set_title("Alignment score by layer depth")
    ax.set_xticks(np.arange(values.size, step=max(1, values.size // 12)))
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def plot_scatter_fit(
    rows: Sequence[tuple[str, float, float]],
    slope: float,
    intercept: float,
    r: float,
    out_path: str | Path,
) -> Path:
    """Score-vs-error scatter with the least-squares line dashed in red."""
    x = np.array([row[1] for row in rows])
    y = np.array([row[2] for row in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(x, y, s=12, alpha=0.6, edgecolors="none")
    grid = np.linspace(x.min(), x.max(), 50)
    ax.plot(grid, slope * grid + intercept, "r--", lw=1.5, label=f"fit (r={r:.3f})")
    ax.set_xlabel("final alignment score")
    ax.set_ylabel("word error rate")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def plot_alignment_heatmap(
    matrix: np.ndarray, path: AlignmentPath | None, out_path: str | Path
) -> Path:
    """Heat map of an alignment block with the searched path overlaid."""
    mat = np.asarray(matrix, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.imshow(mat, aspect="auto", origin="upper", cmap="viridis")
    if path is not None:
        ax.plot(path.as_array(), np.arange(len(path)), color="w", lw=1.0, alpha=0.9)
    ax.set_xlabel("text token")
    ax.set_ylabel("speech token")
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out
