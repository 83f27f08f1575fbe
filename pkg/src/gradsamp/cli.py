"""Command-line entry point.

Subcommands:
  train      run the epoch-skipping training loop from a config file
  fedsim     run the federated simulator with optional round skipping
  normtest   per-layer omnibus normality test on an error dump
  histdump   cut per-layer histograms out of a run's error dumps

Overrides layer as: --set flag > config file > built-in default. The output
directory resolves as: --out > $GRADSAMP_OUT > config out_dir > runs/<task>.
Every invocation is deterministic: the same command line produces
byte-identical output files.

Exit codes: 0 ok, 1 configuration error, 2 divergence, 3 I/O or artifact error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import dataio, fedsim, flops, sampler, stats
from .errors import ArtifactError, ConfigError, DivergenceError
from .model import SgdHyper, mlp
from .rng import FedSeeds, SeedBundle, derive

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def _resolve_out_dir(args, cfg_out: str | None, task: str) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("GRADSAMP_OUT")
    if env:
        return Path(env)
    if cfg_out:
        return Path(cfg_out)
    return Path("runs") / task


def _load_experiment(args) -> dataio.ExperimentConfig:
    overrides = _parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return dataio.load_config(args.config, overrides)


def _write_flops_csv(ledger: flops.FlopsLedger, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mode", "flops", "cum_flops"])
        running = 0
        for e in ledger.entries:
            running += e.flops
            w.writerow([e.epoch, e.mode, e.flops, running])


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    out_dir = _resolve_out_dir(args, cfg.out_dir, "train")
    dataset = dataio.resolve_dataset(cfg)
    train_ds, val_ds = dataio.split_dataset(dataset, cfg.val_fraction, derive(cfg.seed, "split"))
    spec = mlp(dataset.features.shape[1], cfg.hidden, dataset.classes)
    run_cfg = sampler.TrainRunConfig(
        epochs=cfg.epochs,
        strategy=cfg.strategy,
        hyper=SgdHyper(cfg.eta, cfg.momentum, cfg.weight_decay),
        batch_size=cfg.batch_size,
        seeds=SeedBundle.from_master(cfg.seed),
        epsilon=cfg.epsilon,
    )
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        errors_dir = out_dir / "errors"
        if cfg.dump_errors:
            errors_dir.mkdir(exist_ok=True)

        def on_epoch(record, before, after):
            if cfg.dump_errors:
                err = sampler.compute_error(after, before, (record.epoch - 1, record.epoch))
                dataio.dump_error_vector(err, record.epoch, errors_dir / f"epoch_{record.epoch:04d}.csv")

        report = sampler.train_with_gradsamp(spec, train_ds, val_ds, run_cfg, on_epoch=on_epoch)
        dataio.write_metrics_csv(report.records, out_dir / "metrics.csv")
        dataio.dump_params(report.final_params, out_dir / "params.csv")
        _write_flops_csv(report.ledger, out_dir / "flops.csv")
    except OSError as e:
        raise ArtifactError(str(e)) from e
    if report.records:
        last = report.records[-1]
        print(f"epochs run: {len(report.records)}/{cfg.epochs}")
        print(f"final val_acc: {dataio.fmt_real(last.val_acc)}")
        print(f"training flops saved: {dataio.fmt_real(report.ledger.savings_fraction())}")
    if report.diverged:
        print("run diverged: non-finite loss", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_fedsim(args) -> int:
    cfg = _load_experiment(args)
    out_dir = _resolve_out_dir(args, cfg.out_dir, "fedsim")
    dataset = dataio.resolve_dataset(cfg)
    train_ds, val_ds = dataio.split_dataset(dataset, cfg.val_fraction, derive(cfg.seed, "split"))
    spec = mlp(dataset.features.shape[1], cfg.hidden, dataset.classes)
    aggregator = fedsim.FedProx(cfg.mu) if cfg.aggregator == "fedprox" else fedsim.FedAvg()
    try:
        setup = fedsim.FlSetup(
            model=spec,
            total_clients=cfg.clients,
            selected_per_round=cfg.selected,
            rounds=cfg.rounds,
            local_epochs=cfg.local_epochs,
            aggregator=aggregator,
            round_strategy=cfg.strategy,
            seeds=FedSeeds.from_master(cfg.seed),
            hyper=SgdHyper(cfg.eta, cfg.momentum, cfg.weight_decay),
            batch_size=cfg.batch_size,
            epsilon=cfg.epsilon,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        report = fedsim.run_federated(setup, train_ds, val_ds)
        dataio.write_metrics_csv(report.records, out_dir / "rounds.csv")
        dataio.dump_params(report.final_params, out_dir / "params.csv")
    except OSError as e:
        raise ArtifactError(str(e)) from e
    if report.records:
        last = report.records[-1]
        skipped = sum(1 for r in report.records if r.mode == "sampled")
        print(f"rounds run: {len(report.records)}/{cfg.rounds} ({skipped} sampled)")
        print(f"final val_acc: {dataio.fmt_real(last.val_acc)}")
        print(f"total comm cost: {sum(r.communication_cost for r in report.records)}")
    if report.diverged:
        print("run diverged: non-finite client loss", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


NORMTEST_HEADER = ["layer", "n", "status", "k2", "p_value", "pass"]


def cmd_normtest(args) -> int:
    values, partition = dataio.read_dump(args.input)
    err = sampler.EpochError(values, partition, (-1, -1))
    report = stats.layer_normality_report(err, alpha=args.alpha)
    out_path = Path(args.out) if args.out else Path(args.input).with_suffix(".normtest.csv")
    try:
        with open(out_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(NORMTEST_HEADER)
            for e in report.entries:
                if e.skipped:
                    w.writerow([e.layer, e.n, "skipped", "", "", ""])
                else:
                    w.writerow(
                        [
                            e.layer,
                            e.n,
                            "tested",
                            dataio.fmt_real(e.result.k2),
                            dataio.fmt_real(e.result.p_value),
                            str(e.result.passed).lower(),
                        ]
                    )
    except OSError as e:
        raise ArtifactError(str(e)) from e
    for e in report.entries:
        if e.skipped:
            print(f"{e.layer}: n={e.n} skipped (too small to test)")
        else:
            verdict = "pass" if e.result.passed else "FAIL"
            print(
                f"{e.layer}: n={e.n} K2={e.result.k2:.4f} p={e.result.p_value:.6g} {verdict}"
            )
    eligible = report.eligible
    if eligible:
        passed = sum(1 for e in eligible if e.result.passed)
        print(f"overall: {passed}/{len(eligible)} eligible layers pass at alpha={args.alpha:g}")
    else:
        print("overall: no layer large enough to test")
    return EXIT_OK


def cmd_histdump(args) -> int:
    run_dir = Path(args.run_dir)
    epochs = [int(e) for e in args.epochs.split(",") if e.strip()]
    layers = [l.strip() for l in args.layers.split(",") if l.strip()] if args.layers else None
    out_dir = Path(args.out) if args.out else run_dir / "hist"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(str(e)) from e
    wrote = 0
    for epoch in epochs:
        dump = run_dir / "errors" / f"epoch_{epoch:04d}.csv"
        values, partition = dataio.read_dump(dump)
        names = partition.names()
        selected = names if layers is None else [n for n in names if n in layers]
        for name in selected:
            seg = partition.view(values, name)
            hist = stats.histogram(seg, bins=args.bins)
            path = out_dir / f"epoch_{epoch:04d}_{name}.csv"
            dataio.write_histogram_csv(hist, name, epoch, path)
            wrote += 1
    print(f"wrote {wrote} histogram files to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradsamp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the master seed")

    p_train = sub.add_parser("train", help="run the training loop")
    add_config_args(p_train)
    p_train.set_defaults(func=cmd_train)

    p_fed = sub.add_parser("fedsim", help="run the federated simulator")
    add_config_args(p_fed)
    p_fed.set_defaults(func=cmd_fedsim)

    p_norm = sub.add_parser("normtest", help="normality test on an error dump")
    p_norm.add_argument("--input", required=True, help="error dump CSV (layer,index,value)")
    p_norm.add_argument("--alpha", type=float, default=0.05)
    p_norm.add_argument("--out", help="report CSV path")
    p_norm.set_defaults(func=cmd_normtest)

    p_hist = sub.add_parser("histdump", help="histograms from a run's error dumps")
    p_hist.add_argument("--run-dir", required=True, help="directory written by `gradsamp train`")
    p_hist.add_argument("--epochs", required=True, help="comma-separated epoch indices")
    p_hist.add_argument("--layers", help="comma-separated layer names (default: all)")
    p_hist.add_argument("--bins", type=int, default=40)
    p_hist.add_argument("--out", help="output directory (default: <run-dir>/hist)")
    p_hist.set_defaults(func=cmd_histdump)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ArtifactError, OSError) as e:
        print(f"artifact error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    raise SystemExit(main())
