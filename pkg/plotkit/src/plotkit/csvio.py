"""Readers for the gradsamp CSV schemas.

These files are the only interface to the training side:

  metrics      epoch,mode,train_loss,val_acc,epoch_flops,cum_flops
  fl rounds    round,mode,val_acc,comm_cost,cum_flops
  histograms   layer,epoch,bin_left,bin_right,count
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

METRICS_HEADER = ["epoch", "mode", "train_loss", "val_acc", "epoch_flops", "cum_flops"]
FL_HEADER = ["round", "mode", "val_acc", "comm_cost", "cum_flops"]
HIST_HEADER = ["layer", "epoch", "bin_left", "bin_right", "count"]


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class HistogramTable:
    layer: str
    epoch: int
    edges: list[float]  # len B+1
    counts: list[int]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def bin_width(self) -> float:
        return (self.edges[-1] - self.edges[0]) / len(self.counts)


def _check_header(got, want, path):
    if got != want:
        raise SchemaError(f"{path}: expected columns {want}, got {got}")


def read_histogram(path) -> HistogramTable:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        _check_header(next(reader, None), HIST_HEADER, path)
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no histogram rows")
    layer, epoch = rows[0][0], int(rows[0][1])
    edges = [float(rows[0][2])]
    counts = []
    for row in rows:
        if row[0] != layer:
            raise SchemaError(f"{path}: mixed layers in one histogram file")
        edges.append(float(row[3]))
        counts.append(int(row[4]))
    return HistogramTable(layer, epoch, edges, counts)


@dataclass(frozen=True)
class CurveTable:
    label: str
    steps: list[int]  # epoch or round index
    modes: list[str]
    val_acc: list[float]
    cum_flops: list[int]
    train_loss: list[float] | None  # None for FL rounds


def read_metrics(path) -> CurveTable:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        _check_header(next(reader, None), METRICS_HEADER, path)
        rows = list(reader)
    return CurveTable(
        label=path.stem,
        steps=[int(r[0]) for r in rows],
        modes=[r[1] for r in rows],
        val_acc=[float(r[3]) for r in rows],
        cum_flops=[int(r[5]) for r in rows],
        train_loss=[math.nan if r[2] == "" else float(r[2]) for r in rows],
    )


def read_fl_rounds(path) -> CurveTable:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        _check_header(next(reader, None), FL_HEADER, path)
        rows = list(reader)
    return CurveTable(
        label=path.stem,
        steps=[int(r[0]) for r in rows],
        modes=[r[1] for r in rows],
        val_acc=[float(r[2]) for r in rows],
        cum_flops=[int(r[4]) for r in rows],
        train_loss=None,
    )
