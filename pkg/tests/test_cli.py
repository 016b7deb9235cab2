"""Exercises the command line end to end, in process."""

import json

import numpy as np
import pytest

from safescale.cli import main
from safescale.tasks import TrainedPredictor
from safescale.traceio import file_sha256

CONFIG = {
    "episodes": 6,
    "master_seed": 91,
    "labeling": {"deltas": [0.0, 0.02]},
    "train_defaults": {
        "learning_rate": 1e-3,
        "batch_size": 128,
        "max_epochs": 2,
        "patience": 2,
        "val_fraction": 0.25,
    },
}


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, config_path):
    """A simulated + labeled campaign shared by the command tests."""
    root = tmp_path_factory.mktemp("cliwork")
    trace = root / "trace.csv"
    assert main(["simulate", "--config", config_path, "--out", str(trace)]) == 0
    labeldir = root / "labelout"
    assert main(["label", str(trace), "--config", config_path, "--out", str(labeldir)]) == 0
    return root


def test_simulate_reports_level_shares(config_path, tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["simulate", "--config", config_path, "--episodes", "3", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "episodes: 3" in text
    assert "level 0:" in text and "level 1:" in text
    assert out.is_file()


def test_simulate_is_deterministic(config_path, tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["simulate", "--config", config_path, "--episodes", "3", "--out", str(a)]) == 0
    assert main(["simulate", "--config", config_path, "--episodes", "3", "--out", str(b)]) == 0
    assert file_sha256(a) == file_sha256(b)
    c = tmp_path / "c.csv"
    assert main(["simulate", "--config", config_path, "--episodes", "3", "--seed", "5", "--out", str(c)]) == 0
    assert file_sha256(a) != file_sha256(c)


def test_label_prints_model_and_is_idempotent(workdir, config_path, capsys, tmp_path):
    capsys.readouterr()
    labeled = workdir / "labelout" / "labeled.csv"
    assert labeled.is_file()
    assert (workdir / "labelout" / "cluster_model.json").is_file()
    # Relabeling a labeled file ignores the stored labels and reproduces them.
    again = tmp_path / "again"
    assert main(["label", str(labeled), "--config", config_path, "--out", str(again)]) == 0
    text = capsys.readouterr().out
    assert "P = " in text
    assert file_sha256(again / "labeled.csv") == file_sha256(labeled)


def test_train_eval_predict_roundtrip(workdir, config_path, tmp_path, capsys):
    labeled = str(workdir / "labelout" / "labeled.csv")
    model = str(workdir / "labelout" / "cluster_model.json")
    traindir = tmp_path / "train"
    assert (
        main(
            [
                "train",
                labeled,
                "--config",
                config_path,
                "--task",
                "regress_one_step",
                "--cluster-model",
                model,
                "--out",
                str(traindir),
            ]
        )
        == 0
    )
    predictor = traindir / "predictor.json"
    assert predictor.is_file()
    assert (traindir / "trainlog.csv").is_file()

    # The eval command needs a dataset CSV; reproduce writes one, but here
    # the quickest source is the pipeline-format test dataset.
    from safescale.labeling import (
        LabeledTrace,
        WindowSpec,
        build_dataset,
        write_dataset_csv,
    )
    from safescale.traceio import read_labeled_csv

    traces, clusters = read_labeled_csv(labeled)
    ds = build_dataset(
        [LabeledTrace(trace=tr, cluster=cl) for tr, cl in zip(traces, clusters)],
        WindowSpec("one_step", 0),
    )
    data_csv = tmp_path / "ds.csv"
    write_dataset_csv(data_csv, ds)

    evaldir = tmp_path / "eval"
    capsys.readouterr()
    assert (
        main(
            [
                "eval",
                str(predictor),
                str(data_csv),
                "--config",
                config_path,
                "--deltas",
                "0,0.02",
                "--out",
                str(evaldir),
            ]
        )
        == 0
    )
    text = capsys.readouterr().out
    assert "delta 0:" in text and "delta 0.02:" in text and "delta avg:" in text
    report = (evaldir / "report.csv").read_text().splitlines()
    assert len(report) == 4
    assert (evaldir / "heatmap_regress_one_step.csv").is_file()

    capsys.readouterr()
    assert main(["predict", str(predictor), "--input", "0,0,0.9,2.5,0,1"]) == 0
    value = float(capsys.readouterr().out.strip())
    assert 0.0 <= value <= 1.0


def test_train_without_model_flag_rebuilds_centroids(workdir, config_path, tmp_path):
    labeled = str(workdir / "labelout" / "labeled.csv")
    outdir = tmp_path / "nomodel"
    code = main(
        [
            "train",
            labeled,
            "--config",
            config_path,
            "--task",
            "classify_one_step",
            "--out",
            str(outdir),
        ]
    )
    assert code == 0
    pred = TrainedPredictor.load(outdir / "predictor.json")
    stored = json.loads((workdir / "labelout" / "cluster_model.json").read_text())
    assert list(pred.cluster.centroids) == pytest.approx(stored["centroids"], abs=1e-12)


def test_train_drop_goals_ablation(workdir, config_path, tmp_path):
    labeled = str(workdir / "labelout" / "labeled.csv")
    outdir = tmp_path / "ablate"
    code = main(
        [
            "train",
            labeled,
            "--config",
            config_path,
            "--task",
            "regress_n_step",
            "--w",
            "2",
            "--drop-goals",
            "--delta",
            "0.02",
            "--out",
            str(outdir),
        ]
    )
    assert code == 0
    assert TrainedPredictor.load(outdir / "predictor.json").in_width == 6


def test_reproduce_cli(tmp_path, capsys):
    cfg = {
        **CONFIG,
        "episodes": 4,
        "labeling": {"deltas": [0.0]},
        "train_defaults": {**CONFIG["train_defaults"], "max_epochs": 1},
        "tasks": [{"name": "reg", "kind": "regress_one_step", "w": 0}],
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(cfg))
    outdir = tmp_path / "out"
    assert main(["reproduce", "--config", str(path), "--out", str(outdir)]) == 0
    text = capsys.readouterr().out
    assert "P = " in text
    assert (outdir / "metadata.json").is_file()
    assert (outdir / "reports" / "table_one_step.csv").is_file()


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["train", "x.csv", "--task", "lstm", "--out", "o"])
    assert err.value.code == 2


def test_config_errors_exit_2(config_path, tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "absent.json"), "--out", "t.csv"]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["simulate", "--config", config_path, "--episodes", "0", "--out", "t.csv"]) == 2


def test_runtime_errors_exit_3(config_path, tmp_path, capsys):
    assert main(["label", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]) == 3
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert main(["label", str(bad), "--out", str(tmp_path)]) == 3


def test_predict_width_mismatch_exits_2(workdir, config_path, tmp_path, capsys):
    labeled = str(workdir / "labelout" / "labeled.csv")
    outdir = tmp_path / "m"
    assert (
        main(
            [
                "train",
                labeled,
                "--config",
                config_path,
                "--task",
                "regress_one_step",
                "--out",
                str(outdir),
            ]
        )
        == 0
    )
    capsys.readouterr()
    assert main(["predict", str(outdir / "predictor.json"), "--input", "1,2,3"]) == 2
    assert "6 comma-separated values" in capsys.readouterr().err
