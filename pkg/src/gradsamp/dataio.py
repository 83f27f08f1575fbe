"""Datasets, configuration, and every on-disk artifact format.

CSV schemas (headers are part of the contract, reals use 17 significant
digits so write -> parse round-trips losslessly):

  training metrics   epoch,mode,train_loss,val_acc,epoch_flops,cum_flops
                     (train_loss is an empty field on sampled epochs)
  federated metrics  round,mode,val_acc,comm_cost,cum_flops
  histograms         layer,epoch,bin_left,bin_right,count
  error/param dumps  layer,index,value

Config files are INI-style sections; see CONFIG_KEYS for the accepted key
set. Missing optional keys fall back to the standard defaults (eta 0.001,
momentum 0.9, weight_decay 0.001, epsilon 0.001, mu 0.2).
"""

from __future__ import annotations

import configparser
import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArtifactError, ConfigError
from .model import LayerPartition, ParamSlice, ParamVector
from .sampler import (
    DelayedPeriodic,
    DelayedRandom,
    EpochError,
    EpochRecord,
    Never,
    Periodic,
    Probabilistic,
    SamplingStrategy,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # [n, d] float64
    labels: np.ndarray  # [n] int
    classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a nonempty [n, d] matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must match the number of rows")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise ValueError("labels out of range")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite features")

    def __len__(self) -> int:
        return self.features.shape[0]


def _simplex_centers(classes: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Class centers at pairwise distance 2, randomly rotated by the seed.

    For classes <= d+1 this is an exact regular simplex; otherwise random
    unit directions are used as a fallback.
    """
    if classes <= d + 1:
        # regular simplex from the centered standard basis; its vertices span
        # a (classes-1)-dim subspace, recovered via SVD
        basis = np.eye(classes)
        centered = basis - basis.mean(axis=0)
        u, s, _ = np.linalg.svd(centered, full_matrices=False)
        coords = u[:, : classes - 1] * s[: classes - 1]
        coords *= 2.0 / math.sqrt(2.0)  # pairwise distance sqrt(2) -> 2
        emb = np.zeros((classes, d))
        emb[:, : classes - 1] = coords
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        return emb @ q.T
    dirs = rng.normal(size=(classes, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


def gen_blobs(n: int, d: int, classes: int, spread: float, seed: int) -> Dataset:
    """Balanced isotropic Gaussian blobs around seeded simplex-like centers."""
    if classes < 2 or d < 1 or n < classes:
        raise ValueError("need n >= classes >= 2 and d >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    rng = np.random.default_rng(seed)
    centers = _simplex_centers(classes, d, rng)
    labels = np.arange(n) % classes  # interleaved -> balanced within +-1
    noise = rng.normal(size=(n, d)) * spread
    features = centers[labels] + noise
    return Dataset(features, labels, classes)


def split_dataset(ds: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle-split into train/val."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must be in (0, 1)")
    n = len(ds)
    n_val = max(1, int(round(n * val_fraction)))
    if n_val >= n:
        raise ValueError("val_fraction leaves no training data")
    perm = np.random.default_rng(seed).permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    return (
        Dataset(ds.features[train_idx], ds.labels[train_idx], ds.classes),
        Dataset(ds.features[val_idx], ds.labels[val_idx], ds.classes),
    )


def _read_be32(f, path: Path) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise ArtifactError(f"{path}: truncated IDX header")
    return struct.unpack(">I", data)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse big-endian IDX image/label files; pixels are scaled to [0, 1]."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path)
        if magic != IDX_IMAGES_MAGIC:
            raise ArtifactError(
                f"{images_path}: bad images magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        n, rows, cols = (_read_be32(f, images_path) for _ in range(3))
        raw = f.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise ArtifactError(f"{images_path}: truncated image data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path)
        if magic != IDX_LABELS_MAGIC:
            raise ArtifactError(
                f"{labels_path}: bad labels magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        n_labels = _read_be32(f, labels_path)
        raw = f.read(n_labels)
        if len(raw) != n_labels:
            raise ArtifactError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if n_labels != n:
        raise ArtifactError(f"image count {n} != label count {n_labels}")
    features = pixels.astype(np.float64) / 255.0
    return Dataset(features, labels, classes=int(labels.max()) + 1)


def load_csv_dataset(path) -> Dataset:
    """CSV with feature columns and a final integer `label` column."""
    path = Path(path)
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if not header or header[-1] != "label":
                raise ArtifactError(f"{path}: last column must be named 'label'")
            rows = list(reader)
    except OSError as e:
        raise ArtifactError(f"{path}: {e}") from e
    if not rows:
        raise ArtifactError(f"{path}: no data rows")
    features = np.array([[float(v) for v in r[:-1]] for r in rows])
    labels = np.array([int(r[-1]) for r in rows])
    return Dataset(features, labels, classes=int(labels.max()) + 1)


# ---------------------------------------------------------------------------
# CSV artifacts


def fmt_real(x: float) -> str:
    """17 significant digits: enough for float64 write/parse round-trips."""
    return f"{x:.17g}"


METRICS_HEADER = ["epoch", "mode", "train_loss", "val_acc", "epoch_flops", "cum_flops"]
FED_METRICS_HEADER = ["round", "mode", "val_acc", "comm_cost", "cum_flops"]
HIST_HEADER = ["layer", "epoch", "bin_left", "bin_right", "count"]
DUMP_HEADER = ["layer", "index", "value"]


def write_metrics_csv(records, path) -> None:
    """Training or federated records; dispatches on the record type."""
    path = Path(path)
    fed = bool(records) and hasattr(records[0], "round")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        if fed:
            w.writerow(FED_METRICS_HEADER)
            for r in records:
                w.writerow(
                    [r.round, r.mode, fmt_real(r.val_acc), r.communication_cost, r.cum_flops]
                )
        else:
            w.writerow(METRICS_HEADER)
            for r in records:
                loss = "" if math.isnan(r.train_loss) else fmt_real(r.train_loss)
                w.writerow(
                    [r.epoch, r.mode, loss, fmt_real(r.val_acc), r.epoch_flops, r.cum_flops]
                )


def read_metrics_csv(path) -> list[EpochRecord]:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != METRICS_HEADER:
            raise ArtifactError(f"{path}: unexpected metrics header {header}")
        out = []
        for row in reader:
            out.append(
                EpochRecord(
                    epoch=int(row[0]),
                    mode=row[1],
                    train_loss=math.nan if row[2] == "" else float(row[2]),
                    val_acc=float(row[3]),
                    epoch_flops=int(row[4]),
                    cum_flops=int(row[5]),
                )
            )
    return out


def read_fed_metrics_csv(path) -> list[tuple]:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != FED_METRICS_HEADER:
            raise ArtifactError(f"{path}: unexpected round-metrics header {header}")
        return [(int(r[0]), r[1], float(r[2]), int(r[3]), int(r[4])) for r in reader]


def write_histogram_csv(hist, layer_name: str, epoch: int, path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HIST_HEADER)
        for i in range(len(hist.counts)):
            w.writerow(
                [
                    layer_name,
                    epoch,
                    fmt_real(hist.bin_edges[i]),
                    fmt_real(hist.bin_edges[i + 1]),
                    int(hist.counts[i]),
                ]
            )


def read_histogram_csv(path) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != HIST_HEADER:
            raise ArtifactError(f"{path}: unexpected histogram header {header}")
        return [
            dict(
                layer=r[0],
                epoch=int(r[1]),
                bin_left=float(r[2]),
                bin_right=float(r[3]),
                count=int(r[4]),
            )
            for r in reader
        ]


def dump_error_vector(err: EpochError, epoch: int, path) -> None:
    """layer,index,value rows; index is the position within the layer slice."""
    _dump_partitioned(err.values, err.partition, path)


def dump_params(params: ParamVector, path) -> None:
    _dump_partitioned(params.values, params.partition, path)


def _dump_partitioned(values: np.ndarray, partition: LayerPartition, path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DUMP_HEADER)
        for s in partition.slices:
            seg = values[s.offset : s.offset + s.length]
            for i, v in enumerate(seg):
                w.writerow([s.name, i, fmt_real(v)])


def read_dump(path) -> tuple[np.ndarray, LayerPartition]:
    """Rebuild a flat vector + partition from a layer,index,value dump."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"{path}: no such dump")
    per_layer: dict[str, list[float]] = {}
    order: list[str] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != DUMP_HEADER:
            raise ArtifactError(f"{path}: unexpected dump header {header}")
        for row in reader:
            name = row[0]
            if name not in per_layer:
                per_layer[name] = []
                order.append(name)
            if int(row[1]) != len(per_layer[name]):
                raise ArtifactError(f"{path}: non-sequential index in layer {name!r}")
            per_layer[name].append(float(row[2]))
    if not order:
        raise ArtifactError(f"{path}: empty dump")
    slices = []
    offset = 0
    values = []
    for name in order:
        seg = per_layer[name]
        slices.append(ParamSlice(name, offset, len(seg)))
        offset += len(seg)
        values.extend(seg)
    return np.array(values), LayerPartition(tuple(slices))


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(frozen=True)
class SyntheticSource:
    n: int = 3000
    d: int = 2
    classes: int = 3
    spread: float = 0.5


@dataclass(frozen=True)
class IdxSource:
    images: str
    labels: str


@dataclass(frozen=True)
class CsvSource:
    path: str


DataSource = SyntheticSource | IdxSource | CsvSource


@dataclass
class ExperimentConfig:
    task: str = "train"
    seed: int = 0
    out_dir: str | None = None
    hidden: tuple[int, ...] = (64,)
    data: DataSource = field(default_factory=SyntheticSource)
    val_fraction: float = 0.2
    epochs: int = 100
    batch_size: int = 32
    eta: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.001
    epsilon: float = 0.001
    dump_errors: bool = True
    strategy: SamplingStrategy = field(default_factory=Never)
    clients: int = 5
    selected: int = 2
    rounds: int = 20
    local_epochs: int = 5
    aggregator: str = "fedavg"
    mu: float = 0.2


CONFIG_KEYS = {
    "run": {"task", "seed", "out_dir"},
    "model": {"hidden"},
    "data": {"source", "n", "d", "classes", "spread", "images", "labels", "path", "val_fraction"},
    "train": {"epochs", "batch_size", "eta", "momentum", "weight_decay", "epsilon", "dump_errors"},
    "strategy": {"strategy", "period", "p"},
    "fedsim": {"clients", "selected", "rounds", "local_epochs", "aggregator", "mu"},
}

# --set overrides use bare keys; every key name is unique across sections.
_KEY_SECTION = {key: sec for sec, keys in CONFIG_KEYS.items() for key in keys}

_STRATEGY_KINDS = {"never", "periodic", "probabilistic", "delayed_periodic", "delayed_random"}


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")


def _build_strategy(kind: str, vals: dict[str, str]) -> SamplingStrategy:
    def need(key: str, conv):
        if key not in vals:
            raise ConfigError(f"strategy {kind!r} requires key {key!r}")
        try:
            return conv(vals[key])
        except ValueError as e:
            raise ConfigError(f"key {key!r}: {e}") from e

    try:
        if kind == "never":
            return Never()
        if kind == "periodic":
            return Periodic(need("period", int))
        if kind == "probabilistic":
            return Probabilistic(need("p", float))
        if kind == "delayed_periodic":
            return DelayedPeriodic(need("period", int))
        if kind == "delayed_random":
            return DelayedRandom(need("p", float))
    except ValueError as e:  # constructor invariant (period >= 2, p in [0,1])
        raise ConfigError(str(e)) from e
    raise ConfigError(f"unknown strategy {kind!r}; expected one of {sorted(_STRATEGY_KINDS)}")


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse an INI config; apply --set overrides; validate keys and values."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e

    values: dict[str, str] = {}
    for section in parser.sections():
        if section not in CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
            values[key] = raw
    for key, raw in (overrides or {}).items():
        if key not in _KEY_SECTION:
            raise ConfigError(f"unknown override key {key!r}")
        values[key] = raw

    def get(key: str, conv, default):
        if key not in values:
            return default
        try:
            return conv(values[key])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"key {key!r}: {e}") from e

    cfg = ExperimentConfig()
    cfg.task = get("task", str, cfg.task).strip()
    if cfg.task not in ("train", "fedsim"):
        raise ConfigError(f"key 'task': expected train or fedsim, got {cfg.task!r}")
    cfg.seed = get("seed", int, cfg.seed)
    cfg.out_dir = get("out_dir", str, cfg.out_dir)
    cfg.hidden = get(
        "hidden", lambda s: tuple(int(x) for x in s.split(",") if x.strip()), cfg.hidden
    )
    if any(h < 1 for h in cfg.hidden):
        raise ConfigError("key 'hidden': layer widths must be >= 1")

    source = get("source", str, "synthetic").strip()
    if source == "synthetic":
        cfg.data = SyntheticSource(
            n=get("n", int, 3000),
            d=get("d", int, 2),
            classes=get("classes", int, 3),
            spread=get("spread", float, 0.5),
        )
    elif source == "idx":
        images, labels = values.get("images"), values.get("labels")
        if not images or not labels:
            raise ConfigError("idx source requires keys 'images' and 'labels'")
        for p in (images, labels):
            if not Path(p).exists():
                raise ConfigError(f"referenced data file not found: {p}")
        cfg.data = IdxSource(images, labels)
    elif source == "csv":
        csv_path = values.get("path")
        if not csv_path:
            raise ConfigError("csv source requires key 'path'")
        if not Path(csv_path).exists():
            raise ConfigError(f"referenced data file not found: {csv_path}")
        cfg.data = CsvSource(csv_path)
    else:
        raise ConfigError(f"key 'source': unknown dataset source {source!r}")
    cfg.val_fraction = get("val_fraction", float, cfg.val_fraction)

    cfg.epochs = get("epochs", int, cfg.epochs)
    cfg.batch_size = get("batch_size", int, cfg.batch_size)
    cfg.eta = get("eta", float, cfg.eta)
    cfg.momentum = get("momentum", float, cfg.momentum)
    cfg.weight_decay = get("weight_decay", float, cfg.weight_decay)
    cfg.epsilon = get("epsilon", float, cfg.epsilon)
    cfg.dump_errors = get("dump_errors", lambda s: _parse_bool(s, "dump_errors"), cfg.dump_errors)

    kind = get("strategy", str, "never").strip()
    cfg.strategy = _build_strategy(kind, values)

    cfg.clients = get("clients", int, cfg.clients)
    cfg.selected = get("selected", int, cfg.selected)
    cfg.rounds = get("rounds", int, cfg.rounds)
    cfg.local_epochs = get("local_epochs", int, cfg.local_epochs)
    cfg.aggregator = get("aggregator", str, cfg.aggregator).strip()
    if cfg.aggregator not in ("fedavg", "fedprox"):
        raise ConfigError(f"key 'aggregator': expected fedavg or fedprox, got {cfg.aggregator!r}")
    cfg.mu = get("mu", float, cfg.mu)
    return cfg


def resolve_dataset(cfg: ExperimentConfig) -> Dataset:
    from .rng import derive  # local import to keep dataio importable standalone

    if isinstance(cfg.data, SyntheticSource):
        s = cfg.data
        return gen_blobs(s.n, s.d, s.classes, s.spread, seed=derive(cfg.seed, "data"))
    if isinstance(cfg.data, IdxSource):
        return load_idx(cfg.data.images, cfg.data.labels)
    return load_csv_dataset(cfg.data.path)
