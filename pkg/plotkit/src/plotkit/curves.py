"""Accuracy / FLOPs curves from metrics CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .csvio import CurveTable, read_fl_rounds, read_metrics

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]


def _plot_tables(tables: list[CurveTable], out_path, x_label: str):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax2 = ax.twinx()
    for i, t in enumerate(tables):
        color = _COLORS[i % len(_COLORS)]
        ax.plot(t.steps, t.val_acc, color=color, linewidth=1.5, label=t.label)
        skipped = [(s, a) for s, m, a in zip(t.steps, t.modes, t.val_acc) if m == "sampled"]
        if skipped:
            xs, ys = zip(*skipped)
            ax.scatter(xs, ys, color=color, marker="x", s=30, zorder=3)
        ax2.plot(
            t.steps,
            [f / 1e9 for f in t.cum_flops],
            color=color,
            linewidth=0.8,
            linestyle="--",
            alpha=0.6,
        )
    ax.set_xlabel(x_label)
    ax.set_ylabel("validation accuracy")
    ax2.set_ylabel("cumulative GFLOPs (dashed)")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("x marks sampled (skipped) steps")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return out_path


def plot_training_curves(metrics_csvs: list, out_path) -> Path:
    """One series per metrics file; sampled epochs marked with x."""
    if not metrics_csvs:
        raise ValueError("need at least one metrics CSV")
    return _plot_tables([read_metrics(p) for p in metrics_csvs], out_path, "epoch")


def plot_fl_round_curves(round_csvs: list, out_path) -> Path:
    """FL variant consuming the round,mode,val_acc,comm_cost,cum_flops schema."""
    if not round_csvs:
        raise ValueError("need at least one rounds CSV")
    return _plot_tables([read_fl_rounds(p) for p in round_csvs], out_path, "round")
