"""Epoch skipping via per-layer Gaussian update sampling.

Instead of running backprop every epoch, eligible epochs replace the whole
pass with a sampled update: fit one (mu, var) pair per layer to the
parameter delta produced by the last backprop epoch, draw i.i.d. noise of
the same shape, and add it to the parameters. Fits carry a variance floor
epsilon so a degenerate delta never collapses the draw; consecutive
sampled epochs reuse the cached fit (the buffer only advances on backprop
epochs) while drawing fresh noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import flops as flopcount
from .errors import DivergenceError
from .model import (
    Batch,
    LayerPartition,
    ModelSpec,
    ParamVector,
    SgdHyper,
    SgdState,
    backward,
    evaluate,
    forward,
    init_params,
    sgd_step,
)
from .rng import SeedBundle, generator


# ---------------------------------------------------------------------------
# sampling schedules


@dataclass(frozen=True)
class Never:
    pass


@dataclass(frozen=True)
class Periodic:
    period: int

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("period must be >= 2")


@dataclass(frozen=True)
class Probabilistic:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")


@dataclass(frozen=True)
class DelayedPeriodic:
    period: int

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("period must be >= 2")


@dataclass(frozen=True)
class DelayedRandom:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")


SamplingStrategy = Never | Periodic | Probabilistic | DelayedPeriodic | DelayedRandom

_COIN_STRATEGIES = (Probabilistic, DelayedRandom)


def should_sample(
    strategy: SamplingStrategy,
    epoch: int,
    total_epochs: int,
    coin_rng: np.random.Generator | None = None,
) -> bool:
    """Decide whether epoch (0-based) is replaced by a sampled update.

    Epochs 0 and 1 are always backprop: a fit needs two snapshots produced
    by real optimization. Coin strategies draw exactly one Bernoulli per
    call, even when a guard forces the answer to False, so the random
    schedule for a given epoch index does not depend on total_epochs.
    """
    if epoch >= total_epochs:
        raise ValueError("epoch index must be < total_epochs")
    coin = False
    if isinstance(strategy, _COIN_STRATEGIES):
        if coin_rng is None:
            raise ValueError("coin_rng required for random strategies")
        coin = coin_rng.random() < strategy.p
    if isinstance(strategy, Never):
        return False
    if epoch < 2:
        return False
    if isinstance(strategy, Periodic):
        return (epoch + 1) % strategy.period == 0
    if isinstance(strategy, Probabilistic):
        return coin
    if epoch < total_epochs // 2:
        return False
    if isinstance(strategy, DelayedPeriodic):
        return (epoch + 1) % strategy.period == 0
    return coin


# ---------------------------------------------------------------------------
# error vectors and per-layer fits


@dataclass(frozen=True)
class EpochError:
    """Parameter delta between two snapshots, partitioned like the params."""

    values: np.ndarray
    partition: LayerPartition
    source_epochs: tuple[int, int]

    def __post_init__(self):
        if self.values.shape[0] != self.partition.total:
            raise ValueError("error vector length does not match partition")

    def layer(self, name: str) -> np.ndarray:
        return self.partition.view(self.values, name)


@dataclass(frozen=True)
class LayerGauss:
    """Fitted per-layer (mu, var); var includes the epsilon floor."""

    partition: LayerPartition
    mu: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        n = len(self.partition.slices)
        if self.mu.shape != (n,) or self.var.shape != (n,):
            raise ValueError("one (mu, var) entry required per partition slice")


def compute_error(
    theta_cur: ParamVector,
    theta_prev: ParamVector,
    source_epochs: tuple[int, int] = (-1, -1),
) -> EpochError:
    if theta_cur.partition != theta_prev.partition:
        raise ValueError("snapshots have different partitions")
    return EpochError(theta_cur.values - theta_prev.values, theta_cur.partition, source_epochs)


def fit_layer_gaussians(err: EpochError, epsilon: float) -> LayerGauss:
    """Population mean/variance per layer slice, variance floored by +epsilon."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    mus = np.empty(len(err.partition.slices))
    vars_ = np.empty(len(err.partition.slices))
    for i, s in enumerate(err.partition.slices):
        seg = err.values[s.offset : s.offset + s.length]
        if seg.size == 0:
            raise ValueError(f"empty layer slice {s.name!r}")
        mus[i] = seg.mean()
        vars_[i] = seg.var() + epsilon
    return LayerGauss(err.partition, mus, vars_)


def sample_update(
    fit: LayerGauss, partition: LayerPartition, noise_rng: np.random.Generator
) -> np.ndarray:
    """Draw one i.i.d. N(mu_l, var_l) value per parameter, layer by layer."""
    if fit.partition != partition:
        raise ValueError("fit does not cover this partition")
    out = np.empty(partition.total)
    for i, s in enumerate(partition.slices):
        out[s.offset : s.offset + s.length] = noise_rng.normal(
            fit.mu[i], math.sqrt(fit.var[i]), size=s.length
        )
    return out


def apply_sampled_update(theta: ParamVector, e_tilde: np.ndarray) -> ParamVector:
    if e_tilde.shape != theta.values.shape:
        raise ValueError("sampled update shape does not match params")
    return ParamVector(theta.values + e_tilde, theta.partition)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class SnapshotBuffer:
    """Params saved before the most recent backprop epoch, plus the cached fit.

    `prev` advances only on backprop epochs, so a fit always comes from a
    genuine optimization delta even when sampled epochs run back to back.
    """

    prev: ParamVector | None = None
    cached_fit: LayerGauss | None = None


@dataclass(frozen=True)
class TrainRunConfig:
    epochs: int
    strategy: SamplingStrategy
    hyper: SgdHyper
    batch_size: int
    seeds: SeedBundle
    epsilon: float = 0.001

    def __post_init__(self):
        if self.epochs < 3:
            raise ValueError("epochs must be >= 3")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mode: str  # "backprop" | "sampled"
    train_loss: float  # NaN on sampled epochs (no training pass ran)
    val_acc: float
    epoch_flops: int
    cum_flops: int


@dataclass
class RunReport:
    records: list[EpochRecord]
    final_params: ParamVector
    ledger: flopcount.FlopsLedger
    diverged: bool = False


# on_epoch(record, params_before, params_after) observer; used by the CLI to
# dump per-epoch error vectors without widening the run config.
EpochObserver = Callable[[EpochRecord, ParamVector, ParamVector], None]


def train_with_gradsamp(
    spec: ModelSpec,
    train_ds,
    val_ds,
    cfg: TrainRunConfig,
    on_epoch: EpochObserver | None = None,
) -> RunReport:
    """Run the epoch-skipping training loop.

    Backprop epochs snapshot the params into the buffer, run SGD over all
    batches, and invalidate the cached fit. Sampled epochs fit (or reuse)
    the per-layer Gaussians from the delta between the current params and
    the buffered snapshot, add a fresh draw to the params, and leave the
    momentum state untouched. Validation runs every epoch in both modes.
    """
    n = len(train_ds.features)
    if n == 0 or len(val_ds.features) == 0:
        raise ValueError("train and val datasets must be nonempty")
    params, partition = init_params(spec, cfg.seeds.init)
    state = SgdState.zeros(partition.total)
    buffer = SnapshotBuffer()
    noise_rng = generator(cfg.seeds.noise)
    coin_rng = generator(cfg.seeds.coin)
    ledger = flopcount.FlopsLedger.for_run(spec, n)
    features = np.asarray(train_ds.features, dtype=np.float64)
    labels = np.asarray(train_ds.labels)

    records: list[EpochRecord] = []
    diverged = False
    for k in range(cfg.epochs):
        params_before = params
        sampled = should_sample(cfg.strategy, k, cfg.epochs, coin_rng)
        if sampled:
            if buffer.cached_fit is None:
                err = compute_error(params, buffer.prev, (k - 2, k - 1))
                buffer.cached_fit = fit_layer_gaussians(err, cfg.epsilon)
            e_tilde = sample_update(buffer.cached_fit, partition, noise_rng)
            params = apply_sampled_update(params, e_tilde)
            mode, train_loss = flopcount.SAMPLED, math.nan
        else:
            buffer.prev = params
            buffer.cached_fit = None
            order = generator(cfg.seeds.shuffle, "epoch", k).permutation(n)
            loss_sum = 0.0
            try:
                # divergence shows up as inf/nan loss; numpy warnings are noise here
                with np.errstate(over="ignore", invalid="ignore"):
                    for start in range(0, n, cfg.batch_size):
                        idx = order[start : start + cfg.batch_size]
                        batch = Batch(features[idx], labels[idx])
                        out = forward(spec, params, batch)
                        grad = backward(spec, params, batch, out.cache)
                        params, state = sgd_step(params, grad, state, cfg.hyper)
                        loss_sum += out.loss * idx.shape[0]
            except DivergenceError:
                diverged = True
                break
            mode, train_loss = flopcount.BACKPROP, loss_sum / n
            if not math.isfinite(train_loss):
                diverged = True
                break
        entry = ledger.record(k, mode)
        val = evaluate(spec, params, val_ds)
        record = EpochRecord(k, mode, train_loss, val.accuracy, entry.flops, ledger.cumulative)
        records.append(record)
        if on_epoch is not None:
            on_epoch(record, params_before, params)
    return RunReport(records, params, ledger, diverged)
