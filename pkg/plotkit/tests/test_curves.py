import csv

import pytest

from plotkit.cli import main as plotkit_main
from plotkit.csvio import SchemaError
from plotkit.curves import plot_fl_round_curves, plot_training_curves


def write_metrics(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mode", "train_loss", "val_acc", "epoch_flops", "cum_flops"])
        w.writerows(rows)
    return path


def write_rounds(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["round", "mode", "val_acc", "comm_cost", "cum_flops"])
        w.writerows(rows)
    return path


@pytest.fixture
def two_runs(tmp_path):
    a = write_metrics(
        tmp_path / "never.csv",
        [[k, "backprop", 0.9 - 0.05 * k, 0.4 + 0.05 * k, 1000, 1000 * (k + 1)] for k in range(10)],
    )
    b = write_metrics(
        tmp_path / "pe5.csv",
        [
            [k, "sampled" if (k + 1) % 5 == 0 and k >= 2 else "backprop",
             "" if (k + 1) % 5 == 0 and k >= 2 else 0.9 - 0.05 * k,
             0.4 + 0.05 * k, 10 if (k + 1) % 5 == 0 and k >= 2 else 1000, 1000 * (k + 1)]
            for k in range(10)
        ],
    )
    return a, b


def test_two_run_comparison_renders(two_runs, tmp_path):
    out = tmp_path / "curves.png"
    plot_training_curves(list(two_runs), out)
    assert out.exists() and out.stat().st_size > 0


def test_missing_column_clear_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("epoch,val_acc\n0,0.5\n")
    with pytest.raises(SchemaError, match="expected columns"):
        plot_training_curves([bad], tmp_path / "x.png")


def test_fl_round_csv_accepted_by_fl_variant(tmp_path):
    rounds = write_rounds(
        tmp_path / "rounds.csv",
        [[r, "sampled" if r in (4, 9) else "aggregated", 0.5 + 0.02 * r,
          0 if r in (4, 9) else 4, 5000 * (r + 1)] for r in range(10)],
    )
    out = tmp_path / "fl.png"
    plot_fl_round_curves([rounds], out)
    assert out.exists() and out.stat().st_size > 0


def test_fl_schema_rejected_by_train_variant(tmp_path):
    rounds = write_rounds(tmp_path / "rounds.csv", [[0, "aggregated", 0.5, 4, 100]])
    with pytest.raises(SchemaError):
        plot_training_curves([rounds], tmp_path / "x.png")


def test_cli_roundtrip(two_runs, tmp_path, capsys):
    out = tmp_path / "cli.png"
    code = plotkit_main(["curves", "--metrics", str(two_runs[0]), str(two_runs[1]), "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert "wrote" in capsys.readouterr().out


def test_cli_error_exit(tmp_path, capsys):
    code = plotkit_main(["curves", "--metrics", str(tmp_path / "none.csv"), "--out", str(tmp_path / "x.png")])
    assert code == 1
    assert "error" in capsys.readouterr().err
