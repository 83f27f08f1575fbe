import filecmp
import subprocess
import sys

import numpy as np
import pytest

from gradsamp import cli, dataio, sampler
from gradsamp.model import LayerPartition, ParamSlice


BASE_CFG = """\
[run]
task = train
seed = 42

[model]
hidden = 8

[data]
source = synthetic
n = 200
d = 2
classes = 3
spread = 0.5

[train]
epochs = 12
batch_size = 32
"""


@pytest.fixture
def base_cfg(tmp_path):
    path = tmp_path / "base.cfg"
    path.write_text(BASE_CFG)
    return path


def run_cli(*argv):
    return cli.main(list(argv))


# ---------------------------------------------------------------------------
# train


def test_train_strategy_wiring(base_cfg, tmp_path):
    out_never = tmp_path / "never"
    out_pe = tmp_path / "pe"
    assert run_cli("train", "--config", str(base_cfg), "--set", "strategy=never", "--out", str(out_never)) == 0
    assert (
        run_cli(
            "train",
            "--config",
            str(base_cfg),
            "--set",
            "strategy=periodic",
            "--set",
            "period=10",
            "--out",
            str(out_pe),
        )
        == 0
    )
    never_rows = dataio.read_metrics_csv(out_never / "metrics.csv")
    pe_rows = dataio.read_metrics_csv(out_pe / "metrics.csv")
    assert all(r.mode == "backprop" for r in never_rows)
    assert [r.epoch for r in pe_rows if r.mode == "sampled"] == [9]


def test_train_outputs_and_determinism(base_cfg, tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    argv = ["train", "--config", str(base_cfg), "--set", "strategy=periodic", "--set", "period=5"]
    assert run_cli(*argv, "--out", str(out1)) == 0
    assert run_cli(*argv, "--out", str(out2)) == 0
    for name in ["metrics.csv", "params.csv", "flops.csv"]:
        assert (out1 / name).exists()
        assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name
    errs1 = sorted(p.name for p in (out1 / "errors").iterdir())
    errs2 = sorted(p.name for p in (out2 / "errors").iterdir())
    assert errs1 == errs2 and len(errs1) == 12
    for name in errs1:
        assert filecmp.cmp(out1 / "errors" / name, out2 / "errors" / name, shallow=False)


def test_train_seed_changes_outputs(base_cfg, tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert run_cli("train", "--config", str(base_cfg), "--out", str(out1)) == 0
    assert run_cli("train", "--config", str(base_cfg), "--seed", "43", "--out", str(out2)) == 0
    assert not filecmp.cmp(out1 / "params.csv", out2 / "params.csv", shallow=False)


def test_train_malformed_config_exit_1(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[train]\nwarp_speed = 9\n")
    assert run_cli("train", "--config", str(cfg)) == 1
    assert "warp_speed" in capsys.readouterr().err


def test_train_missing_config_exit_1(tmp_path):
    assert run_cli("train", "--config", str(tmp_path / "absent.cfg")) == 1


def test_train_divergence_exit_2(base_cfg, tmp_path):
    code = run_cli(
        "train",
        "--config",
        str(base_cfg),
        "--set",
        "eta=1e9",
        "--set",
        "momentum=0.99",
        "--out",
        str(tmp_path / "div"),
    )
    assert code == 2


def test_out_dir_env_var(base_cfg, tmp_path, monkeypatch):
    env_dir = tmp_path / "envout"
    monkeypatch.setenv("GRADSAMP_OUT", str(env_dir))
    assert run_cli("train", "--config", str(base_cfg)) == 0
    assert (env_dir / "metrics.csv").exists()
    # --out beats the env var
    flag_dir = tmp_path / "flagout"
    assert run_cli("train", "--config", str(base_cfg), "--out", str(flag_dir)) == 0
    assert (flag_dir / "metrics.csv").exists()


# ---------------------------------------------------------------------------
# fedsim


def fed_cfg(tmp_path, extra=""):
    path = tmp_path / "fed.cfg"
    path.write_text(
        BASE_CFG.replace("task = train", "task = fedsim")
        + "\n[fedsim]\nclients = 5\nselected = 2\nrounds = 20\nlocal_epochs = 1\n"
        + extra
    )
    return path


def test_fedsim_periodic5_sampled_rows(tmp_path):
    cfg = fed_cfg(tmp_path, "[strategy]\nstrategy = periodic\nperiod = 5\n")
    out = tmp_path / "fl"
    assert run_cli("fedsim", "--config", str(cfg), "--out", str(out)) == 0
    rows = dataio.read_fed_metrics_csv(out / "rounds.csv")
    sampled = [r for r in rows if r[1] == "sampled"]
    assert len(sampled) == 4
    assert all(r[3] == 0 for r in sampled)  # zero comm cost


def test_fedsim_never_baseline_comm_cost(tmp_path):
    cfg = fed_cfg(tmp_path)
    out = tmp_path / "fl0"
    assert run_cli("fedsim", "--config", str(cfg), "--out", str(out)) == 0
    rows = dataio.read_fed_metrics_csv(out / "rounds.csv")
    assert sum(r[3] for r in rows) == 2 * 2 * 20


def test_fedsim_sc_gt_k_exit_1(tmp_path, capsys):
    cfg = fed_cfg(tmp_path)
    assert run_cli("fedsim", "--config", str(cfg), "--set", "selected=9") == 1


# ---------------------------------------------------------------------------
# normtest


def write_dump(tmp_path, layers):
    part_slices = []
    values = []
    off = 0
    for name, vals in layers:
        part_slices.append(ParamSlice(name, off, len(vals)))
        values.extend(vals)
        off += len(vals)
    err = sampler.EpochError(
        np.array(values), LayerPartition(tuple(part_slices)), (0, 1)
    )
    path = tmp_path / "dump.csv"
    dataio.dump_error_vector(err, 1, path)
    return path


def test_normtest_gaussian_vs_uniform_layers(tmp_path, capsys):
    rng = np.random.default_rng(0)
    dump = write_dump(
        tmp_path,
        [
            ("gauss0", rng.normal(size=3000).tolist()),
            ("gauss1", rng.normal(size=3000).tolist()),
            ("uni", rng.uniform(-1, 1, size=3000).tolist()),
            ("tiny", [0.1, 0.2]),
        ],
    )
    assert run_cli("normtest", "--input", str(dump)) == 0
    out = capsys.readouterr().out
    assert "uni: " in out and "FAIL" in out
    assert "skipped" in out
    report = (tmp_path / "dump.normtest.csv").read_text().splitlines()
    assert report[0] == "layer,n,status,k2,p_value,pass"
    by_layer = {line.split(",")[0]: line for line in report[1:]}
    assert by_layer["gauss0"].split(",")[5] == "true"
    assert by_layer["uni"].split(",")[5] == "false"
    assert by_layer["tiny"].split(",")[2] == "skipped"


def test_normtest_alpha_one_fails_everything(tmp_path, capsys):
    rng = np.random.default_rng(1)
    dump = write_dump(tmp_path, [("g", rng.normal(size=500).tolist())])
    assert run_cli("normtest", "--input", str(dump), "--alpha", "1.0") == 0
    assert "0/1 eligible" in capsys.readouterr().out


def test_normtest_missing_dump_exit_3(tmp_path):
    assert run_cli("normtest", "--input", str(tmp_path / "none.csv")) == 3


# ---------------------------------------------------------------------------
# histdump


def test_histdump_filters_and_conservation(base_cfg, tmp_path):
    run_dir = tmp_path / "run"
    assert run_cli("train", "--config", str(base_cfg), "--out", str(run_dir)) == 0
    assert (
        run_cli(
            "histdump",
            "--run-dir",
            str(run_dir),
            "--epochs",
            "5,10",
            "--layers",
            "dense0.w,dense1.w",
            "--bins",
            "8",
        )
        == 0
    )
    hist_dir = run_dir / "hist"
    files = sorted(p.name for p in hist_dir.iterdir())
    assert files == [
        "epoch_0005_dense0.w.csv",
        "epoch_0005_dense1.w.csv",
        "epoch_0010_dense0.w.csv",
        "epoch_0010_dense1.w.csv",
    ]
    rows = dataio.read_histogram_csv(hist_dir / "epoch_0005_dense0.w.csv")
    assert sum(r["count"] for r in rows) == 2 * 8  # dense0.w has 2*8 entries


def test_histdump_missing_epoch_exit_3(base_cfg, tmp_path, capsys):
    run_dir = tmp_path / "run2"
    assert run_cli("train", "--config", str(base_cfg), "--out", str(run_dir)) == 0
    assert run_cli("histdump", "--run-dir", str(run_dir), "--epochs", "99") == 3
    assert "no such dump" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# module execution smoke test


def test_module_invocation_smoke(base_cfg, tmp_path):
    out = tmp_path / "smoke"
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "gradsamp",
            "train",
            "--config",
            str(base_cfg),
            "--set",
            "epochs=5",
            "--out",
            str(out),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "final val_acc" in proc.stdout
