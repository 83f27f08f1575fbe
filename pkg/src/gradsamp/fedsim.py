"""Single-process federated learning with stochastic round skipping.

Standard rounds: the server sends the global params to SC selected clients,
each runs local SGD on its shard (FedProx adds mu*(theta - theta_global) to
the gradient), and the server takes the dataset-size-weighted mean of the
returned params. Skipped rounds: no clients are contacted at all -- the
server perturbs its own params with noise drawn from per-layer Gaussians
fitted to the delta between its last two aggregated states.

Communication is counted in parameter-vector transfers: down + up per
selected client, so an aggregated round costs 2*SC and a skipped round 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flops as flopcount
from .errors import DivergenceError
from .model import (
    Batch,
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
from .sampler import (
    EpochError,
    LayerGauss,
    Never,
    SamplingStrategy,
    apply_sampled_update,
    compute_error,
    fit_layer_gaussians,
    sample_update,
    should_sample,
)
from .rng import FedSeeds, generator


@dataclass(frozen=True)
class FedAvg:
    pass


@dataclass(frozen=True)
class FedProx:
    mu: float = 0.2

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


Aggregator = FedAvg | FedProx


@dataclass(frozen=True)
class IidEqual:
    pass


@dataclass(frozen=True)
class IidWeighted:
    sizes: tuple[int, ...]


PartitionScheme = IidEqual | IidWeighted


@dataclass(frozen=True)
class FlSetup:
    model: ModelSpec
    total_clients: int
    selected_per_round: int
    rounds: int
    local_epochs: int
    aggregator: Aggregator
    round_strategy: SamplingStrategy
    seeds: FedSeeds
    partition_scheme: PartitionScheme = field(default_factory=IidEqual)
    hyper: SgdHyper = field(default_factory=SgdHyper)
    batch_size: int = 32
    epsilon: float = 0.001

    def __post_init__(self):
        if not 1 <= self.selected_per_round <= self.total_clients:
            raise ValueError("need 1 <= selected_per_round <= total_clients")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not isinstance(self.round_strategy, Never) and self.rounds < 3:
            raise ValueError("round skipping needs rounds >= 3")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class ClientState:
    id: int
    features: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.features.shape[0]


def partition_dataset(dataset, setup: FlSetup) -> list[ClientState]:
    """Seeded disjoint shards; iid-equal sizes differ by at most one."""
    n = len(dataset.features)
    k = setup.total_clients
    if k > n:
        raise ValueError(f"cannot split {n} samples across {k} clients")
    if isinstance(setup.partition_scheme, IidEqual):
        base, extra = divmod(n, k)
        sizes = [base + (1 if i < extra else 0) for i in range(k)]
    else:
        sizes = list(setup.partition_scheme.sizes)
        if len(sizes) != k:
            raise ValueError("weighted partition needs one size per client")
        if sum(sizes) != n or any(s < 1 for s in sizes):
            raise ValueError("weighted sizes must be >= 1 and sum to the dataset size")
    perm = generator(setup.seeds.partition).permutation(n)
    clients = []
    start = 0
    features = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels)
    for cid, size in enumerate(sizes):
        idx = perm[start : start + size]
        clients.append(ClientState(cid, features[idx], labels[idx]))
        start += size
    return clients


def client_update(
    spec: ModelSpec,
    global_params: ParamVector,
    client: ClientState,
    local_epochs: int,
    hyper: SgdHyper,
    prox_mu: float | None = None,
    batch_size: int | None = None,
    shuffle_rng: np.random.Generator | None = None,
) -> ParamVector:
    """Local SGD from the global params; optional proximal pull toward them."""
    if local_epochs == 0:
        return global_params
    params = global_params
    state = SgdState.zeros(params.partition.total)
    n = client.size
    bs = n if batch_size is None else min(batch_size, n)
    for _ in range(local_epochs):
        order = shuffle_rng.permutation(n) if shuffle_rng is not None else np.arange(n)
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                batch = Batch(client.features[idx], client.labels[idx])
                out = forward(spec, params, batch)
                grad = backward(spec, params, batch, out.cache)
                if prox_mu:  # mu == 0 must follow the exact FedAvg code path
                    grad = grad + prox_mu * (params.values - global_params.values)
                try:
                    params, state = sgd_step(params, grad, state, hyper)
                except DivergenceError as e:
                    raise DivergenceError(f"client {client.id}: {e}") from e
                if not np.isfinite(out.loss):
                    raise DivergenceError(f"client {client.id}: non-finite local loss")
    return params


def fedavg_aggregate(clients: list[tuple[ParamVector, int]]) -> ParamVector:
    """Weighted mean with weights |D_k| normalized over the participants."""
    if not clients:
        raise ValueError("no participants to aggregate")
    partition = clients[0][0].partition
    total = sum(size for _, size in clients)
    if total <= 0:
        raise ValueError("participant sizes must be positive")
    acc = np.zeros(partition.total)
    for params, size in clients:
        if params.partition != partition:
            raise ValueError("participants have different partitions")
        acc += (size / total) * params.values
    return ParamVector(acc, partition)


def fit_round_gaussians(
    theta_cur: ParamVector, theta_prev: ParamVector, epsilon: float
) -> LayerGauss:
    """Per-layer Gaussians on the delta between two aggregated global states."""
    return fit_layer_gaussians(compute_error(theta_cur, theta_prev), epsilon)


def stochastic_server_update(
    theta: ParamVector, fit: LayerGauss, rng: np.random.Generator
) -> ParamVector:
    draw = sample_update(fit, theta.partition, rng)
    return apply_sampled_update(theta, draw)


AGGREGATED = "aggregated"
SAMPLED = "sampled"


@dataclass(frozen=True)
class RoundRecord:
    round: int
    mode: str  # "aggregated" | "sampled"
    participants: tuple[int, ...]  # empty on sampled rounds
    val_acc: float
    communication_cost: int  # parameter-vector transfers; 0 on sampled rounds
    round_flops: int
    cum_flops: int


@dataclass
class FedRunReport:
    records: list[RoundRecord]
    final_params: ParamVector
    diverged: bool = False


def run_federated(setup: FlSetup, train_ds, val_ds) -> FedRunReport:
    """Run R rounds; skipped rounds touch no clients and cost no transfers.

    The Gaussian fit always comes from the last two aggregated globals: the
    pre-aggregation snapshot only advances on aggregated rounds and the fit
    cache is invalidated there, mirroring the training-loop buffer rule.
    Skipping additionally requires two completed aggregated rounds.
    """
    clients = partition_dataset(train_ds, setup)
    params, _ = init_params(setup.model, setup.seeds.init)
    prox_mu = setup.aggregator.mu if isinstance(setup.aggregator, FedProx) else None
    coin_rng = generator(setup.seeds.coin)
    prev_global: ParamVector | None = None
    cached_fit: LayerGauss | None = None
    aggregated_rounds = 0
    cum_flops = 0
    records: list[RoundRecord] = []
    diverged = False
    sampled_cost = flopcount.epoch_flops(setup.model, 0, flopcount.SAMPLED)

    for r in range(setup.rounds):
        wants_sample = should_sample(setup.round_strategy, r, setup.rounds, coin_rng)
        if wants_sample and aggregated_rounds >= 2:
            if cached_fit is None:
                cached_fit = fit_round_gaussians(params, prev_global, setup.epsilon)
            params = stochastic_server_update(
                params, cached_fit, generator(setup.seeds.noise, "round", r)
            )
            mode, ids, comm, round_flops = SAMPLED, (), 0, sampled_cost
        else:
            sel = generator(setup.seeds.selection, "round", r)
            ids = tuple(sorted(sel.choice(setup.total_clients, setup.selected_per_round, replace=False).tolist()))
            prev_global = params
            cached_fit = None
            results = []
            try:
                for cid in ids:
                    client = clients[cid]
                    updated = client_update(
                        setup.model,
                        params,
                        client,
                        setup.local_epochs,
                        setup.hyper,
                        prox_mu=prox_mu,
                        batch_size=setup.batch_size,
                        shuffle_rng=generator(setup.seeds.shuffle, "round", r, "client", cid),
                    )
                    results.append((updated, client.size))
            except DivergenceError:
                diverged = True
                break
            params = fedavg_aggregate(results)
            aggregated_rounds += 1
            mode = AGGREGATED
            comm = 2 * setup.selected_per_round
            round_flops = sum(
                setup.local_epochs * flopcount.epoch_flops(setup.model, size, flopcount.BACKPROP)
                for _, size in results
            )
        cum_flops += round_flops
        val = evaluate(setup.model, params, val_ds)
        records.append(
            RoundRecord(r, mode, ids, val.accuracy, comm, round_flops, cum_flops)
        )
    return FedRunReport(records, params, diverged)
