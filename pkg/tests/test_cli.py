"""End-to-end tests for the command-line harness."""

import csv
import json

import numpy as np
import pytest

from d2dpower.cli import cli_main

TINY_CONFIG = """
[channel]
n = 2
seed = 0

[train]
epochs = 1
batch_size = 8
eval_every = 1
n_train = 8
n_val = 4
n_test = 4

[bench]
sizes = [2]
trials_per_size = 2
repetitions = 5
warmup = 1
"""


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TINY_CONFIG)
    return path


def test_no_arguments_is_usage_error(capsys):
    assert cli_main([]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand_is_usage_error(capsys):
    assert cli_main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_is_usage_error(capsys):
    assert cli_main(["generate", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_help_exits_zero(capsys):
    assert cli_main(["--help"]) == 0
    assert "generate" in capsys.readouterr().out


def test_missing_config_file_names_path(capsys, tmp_path):
    missing = tmp_path / "absent.toml"
    code = cli_main(["bench", "timing", "--config", str(missing)])
    assert code == 1
    assert "absent.toml" in capsys.readouterr().err


def test_bad_threads_rejected(capsys, tiny_config):
    assert cli_main(["generate", "--config", str(tiny_config), "--threads", "0"]) == 1


def test_generate_writes_dataset(tiny_config, tmp_path, capsys):
    out = tmp_path / "data"
    code = cli_main(["generate", "--config", str(tiny_config), "--out-dir", str(out)])
    assert code == 0
    manifest = json.loads((out / "dataset.json").read_text())
    assert manifest["counts"] == {"train": 8, "val": 4, "test": 4}
    assert manifest["splits"]["train"] == list(range(0, 8))
    arrays = np.load(out / "dataset.npz")
    assert arrays["train_h"].shape == (8, 2, 2)
    assert arrays["test_h"].shape == (4, 2, 2)


def test_generate_seed_override_changes_split_seeds(tiny_config, tmp_path):
    out = tmp_path / "data5"
    cli_main(["generate", "--config", str(tiny_config), "--out-dir", str(out), "--seed", "5"])
    manifest = json.loads((out / "dataset.json").read_text())
    assert manifest["splits"]["train"] == list(range(5, 13))


def test_train_eval_bench_pipeline(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"

    code = cli_main(["train", "--config", str(tiny_config), "--out-dir", str(out)])
    assert code == 0
    ckpt = out / "wugnn_checkpoint.json"
    assert ckpt.exists()
    assert (out / "wugnn_curve.csv").exists()

    code = cli_main(
        ["eval", "--config", str(tiny_config), "--checkpoint", str(ckpt), "--out-dir", str(out)]
    )
    assert code == 0
    report = json.loads((out / "eval_report.json").read_text())
    assert report["n"] == 2
    assert report["count"] == 4

    code = cli_main(
        [
            "bench", "scalability",
            "--config", str(tiny_config),
            "--wugnn", str(ckpt),
            "--out-dir", str(out),
        ]
    )
    assert code == 0
    with open(out / "scalability.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n", "method", "mean_rate", "std_rate", "trials"]
    assert {row[1] for row in rows[1:]} == {"wmmse", "wugnn"}

    code = cli_main(
        [
            "bench", "timing",
            "--config", str(tiny_config),
            "--wugnn", str(ckpt),
            "--threads", "1",
            "--out-dir", str(out),
        ]
    )
    assert code == 0
    timing = json.loads((out / "timing.json").read_text())
    assert timing["environment"]["threads"] == 1
    assert timing["repetitions"] == 5
    with open(out / "timing.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n", "method", "median_s", "p10_s", "p90_s", "reps"]


def test_train_gnn_model_flag(tiny_config, tmp_path):
    out = tmp_path / "gnnrun"
    code = cli_main(
        ["train", "--config", str(tiny_config), "--model", "gnn", "--out-dir", str(out)]
    )
    assert code == 0
    assert (out / "gnn_checkpoint.json").exists()


def test_eval_fresh_size(tiny_config, tmp_path):
    out = tmp_path / "fresh"
    cli_main(["train", "--config", str(tiny_config), "--out-dir", str(out)])
    code = cli_main(
        [
            "eval",
            "--config", str(tiny_config),
            "--checkpoint", str(out / "wugnn_checkpoint.json"),
            "--n", "3",
            "--count", "4",
            "--out-dir", str(out),
        ]
    )
    assert code == 0
    report = json.loads((out / "eval_report.json").read_text())
    assert report["n"] == 3
    assert report["count"] == 4


def test_bench_without_checkpoints_marks_skipped(tiny_config, tmp_path, capsys):
    out = tmp_path / "bare"
    code = cli_main(
        ["bench", "scalability", "--config", str(tiny_config), "--out-dir", str(out)]
    )
    assert code == 0
    report = json.loads((out / "scalability.json").read_text())
    assert sorted(report["skipped"]) == ["gnn", "wugnn"]
    assert {r["method"] for r in report["records"]} == {"wmmse"}


def test_bench_rejects_wrong_checkpoint_kind(tiny_config, tmp_path, capsys):
    out = tmp_path / "mismatch"
    cli_main(["train", "--config", str(tiny_config), "--model", "gnn", "--out-dir", str(out)])
    code = cli_main(
        [
            "bench", "scalability",
            "--config", str(tiny_config),
            "--wugnn", str(out / "gnn_checkpoint.json"),
            "--out-dir", str(out),
        ]
    )
    assert code == 1
    assert "gnn_baseline" in capsys.readouterr().err


def test_eval_missing_checkpoint_is_usage_error(tiny_config, tmp_path, capsys):
    code = cli_main(
        [
            "eval",
            "--config", str(tiny_config),
            "--checkpoint", str(tmp_path / "ghost.json"),
        ]
    )
    assert code == 1
    assert "ghost.json" in capsys.readouterr().err
