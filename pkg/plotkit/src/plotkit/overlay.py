"""Per-layer error histogram with a fitted-Gaussian overlay."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .csvio import HistogramTable, read_histogram


@dataclass(frozen=True)
class OverlayResult:
    out_path: Path
    mu: float
    var: float
    # trapezoid integral of the overlay curve divided by the bin width; the
    # curve is scaled by n * bin_width so this must come back to n
    effective_count: float
    total: int


def estimate_from_bins(hist: HistogramTable) -> tuple[float, float]:
    """Moments of the binned data, using bin midpoints."""
    edges = np.asarray(hist.edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    counts = np.asarray(hist.counts, dtype=float)
    n = counts.sum()
    mu = float((mids * counts).sum() / n)
    var = float(((mids - mu) ** 2 * counts).sum() / n)
    return mu, var


def plot_histogram_overlay(
    hist_csv, out_path, mu: float | None = None, var: float | None = None
) -> OverlayResult:
    """Bars from the histogram counts plus a normal density scaled by n*w.

    The overlay is sampled well past the histogram range so integrating it
    recovers the full mass; the integral is checked against the bar total
    and a mismatch beyond 2% raises (it would mean broken scaling).
    """
    hist = read_histogram(hist_csv)
    if mu is None or var is None:
        mu, var = estimate_from_bins(hist)
    if var <= 0:
        raise ValueError("overlay needs a positive variance")
    edges = np.asarray(hist.edges)
    counts = np.asarray(hist.counts)
    n = hist.total
    w = hist.bin_width
    sigma = math.sqrt(var)

    lo = min(edges[0], mu - 6 * sigma)
    hi = max(edges[-1], mu + 6 * sigma)
    xs = np.linspace(lo, hi, 1024)
    ys = n * w * np.exp(-0.5 * ((xs - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    effective = float(np.trapezoid(ys, xs) / w)
    if abs(effective - n) > 0.02 * n:
        raise RuntimeError(
            f"overlay integral {effective:.1f} deviates from n={n} by more than 2%"
        )

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        edges[:-1],
        counts,
        width=np.diff(edges),
        align="edge",
        color="#7aa6c2",
        edgecolor="white",
        label=f"{hist.layer} deltas (n={n})",
    )
    ax.plot(xs, ys, color="#c23b22", linewidth=2, label=f"N({mu:.2e}, {var:.2e})")
    ax.set_xlabel("update value")
    ax.set_ylabel("count")
    ax.set_title(f"{hist.layer} @ epoch {hist.epoch}")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return OverlayResult(out_path, mu, var, effective, n)
