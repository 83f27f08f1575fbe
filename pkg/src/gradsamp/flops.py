"""Deterministic FLOPs cost model.

Counting rules (exact integers throughout):
  Dense{in,out}:  batch * (2*in*out + out if bias)      multiply-add pairs + bias add
  ReLU:           batch * width
  head:           batch * 5 * classes                    exp/sum/div/log/select budget
  backprop epoch: n_samples * 3 * forward_per_sample + 3 ops/param  (backward ~= 2x forward)
  sampled epoch:  4 ops/param                            fit + draw + add

Savings percentages are defined over backprop work only: a sampled epoch's
cost is recorded but excluded from the "training FLOPs saved" fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Dense, ModelSpec, Relu, SoftmaxCrossEntropyHead

BACKPROP = "backprop"
SAMPLED = "sampled"


def layer_forward_flops(layer, batch: int, width: int | None = None) -> int:
    """Forward cost of one layer at the given batch size.

    ReLU cost depends on the activation width, which the bare descriptor
    does not carry; pass it explicitly (forward_flops_per_sample does).
    """
    if isinstance(layer, Dense):
        return batch * (2 * layer.in_dim * layer.out_dim + (layer.out_dim if layer.bias else 0))
    if isinstance(layer, Relu):
        if width is None:
            raise ValueError("ReLU flops require the activation width")
        return batch * width
    if isinstance(layer, SoftmaxCrossEntropyHead):
        return batch * 5 * layer.classes
    raise ValueError(f"unsupported layer {layer!r}")


def forward_flops_per_sample(spec: ModelSpec) -> int:
    total = 0
    width = spec.input_dim
    for layer in spec.layers:
        total += layer_forward_flops(layer, 1, width)
        if isinstance(layer, Dense):
            width = layer.out_dim
    return total


def param_count(spec: ModelSpec) -> int:
    return sum(
        l.in_dim * l.out_dim + (l.out_dim if l.bias else 0) for l in spec.dense_layers()
    )


def epoch_flops(spec: ModelSpec, n_samples: int, mode: str) -> int:
    if mode == BACKPROP:
        return n_samples * 3 * forward_flops_per_sample(spec) + 3 * param_count(spec)
    if mode == SAMPLED:
        return 4 * param_count(spec)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class LedgerEntry:
    epoch: int
    mode: str
    flops: int


@dataclass
class FlopsLedger:
    """Per-epoch FLOPs entries with an exact running total."""

    backprop_epoch_flops: int
    sampled_epoch_flops: int
    entries: list[LedgerEntry] = field(default_factory=list)
    cumulative: int = 0

    @classmethod
    def for_run(cls, spec: ModelSpec, n_samples: int) -> "FlopsLedger":
        return cls(
            backprop_epoch_flops=epoch_flops(spec, n_samples, BACKPROP),
            sampled_epoch_flops=epoch_flops(spec, n_samples, SAMPLED),
        )

    def record(self, epoch: int, mode: str) -> LedgerEntry:
        if mode == BACKPROP:
            cost = self.backprop_epoch_flops
        elif mode == SAMPLED:
            cost = self.sampled_epoch_flops
        else:
            raise ValueError(f"unknown mode {mode!r}")
        entry = LedgerEntry(epoch, mode, cost)
        self.entries.append(entry)
        self.cumulative += cost
        return entry

    def savings_fraction(self) -> float:
        """Skipped backprop work over the hypothetical all-backprop total."""
        if not self.entries:
            raise ValueError("empty ledger")
        skipped = sum(self.backprop_epoch_flops for e in self.entries if e.mode == SAMPLED)
        total = self.backprop_epoch_flops * len(self.entries)
        return skipped / total


def savings_fraction(ledger: FlopsLedger) -> float:
    return ledger.savings_fraction()
