"""End-to-end reproduction pipeline.

``reproduce`` drives simulate -> label -> split -> datasets -> train ->
evaluate under one output directory, with every stage's stream derived
from the master seed and recorded in metadata.json.  Stages write their
outputs as they finish, so a failing stage leaves earlier artifacts
intact; failures carry the stage name.  When the config names an
imported trace, the label-onward stages run a second time on it under
``imported/``.
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
from pathlib import Path

import numpy as np

from safescale.config import RunConfig
from safescale.evaluation import (
    EvalReport,
    RetrainRecipe,
    evaluate,
    make_heatmap,
    noise_sweep,
    render_report,
)
from safescale.labeling import (
    LabeledTrace,
    SupervisedDataset,
    WindowSpec,
    assign_labels,
    build_dataset,
    cluster_scalings,
    split_traces,
    write_dataset_csv,
)
from safescale.seeding import derive_seed
from safescale.simulate import EpisodeTrace, run_campaign
from safescale.tasks import TrainedPredictor, train_task, write_training_log
from safescale.traceio import file_sha256, read_trace_csv, write_labeled_csv, write_trace_csv


class PipelineError(RuntimeError):
    """A stage failure, tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def _stage_seeds(master_seed: int, run: RunConfig, prefix: str = "") -> dict:
    seeds = {
        "simulate": derive_seed(master_seed, prefix + "simulate"),
        "split": derive_seed(master_seed, prefix + "split"),
        "train": {t.name: derive_seed(master_seed, prefix + "train", t.name) for t in run.tasks},
        "noise": {t.name: derive_seed(master_seed, prefix + "noise", t.name) for t in run.tasks},
    }
    return seeds


def _window_key(task_mode: str, w: int) -> str:
    return task_mode if task_mode == "one_step" else f"{task_mode}_w{w}"


def _run_branch(
    run: RunConfig,
    traces: list[EpisodeTrace],
    outdir: Path,
    seeds: dict,
) -> dict:
    """Label -> split -> datasets -> train -> evaluate over one campaign."""
    manifest: dict = {"outputs": {}}
    outputs = manifest["outputs"]

    with _stage("label"):
        all_s = np.concatenate([tr.s for tr in traces])
        model = cluster_scalings(all_s, eps=run.eps, min_pts=run.min_pts)
        model.save(outdir / "cluster_model.json")
        labeled = assign_labels(traces, model)
        write_labeled_csv(outdir / "labeled.csv", traces, [lt.cluster for lt in labeled])
        outputs["cluster_model"] = "cluster_model.json"
        outputs["labeled"] = "labeled.csv"
        manifest["p"] = model.p
        manifest["centroids"] = list(model.centroids)

    with _stage("split"):
        train_lt, test_lt = split_traces(labeled, run.train_fraction, seeds["split"])
        write_labeled_csv(outdir / "train_labeled.csv", [lt.trace for lt in train_lt], [lt.cluster for lt in train_lt])
        write_labeled_csv(outdir / "test_labeled.csv", [lt.trace for lt in test_lt], [lt.cluster for lt in test_lt])
        split_info = {
            "seed": seeds["split"],
            "train_fraction": run.train_fraction,
            "train_episodes": sorted(lt.episode_id for lt in train_lt),
            "test_episodes": sorted(lt.episode_id for lt in test_lt),
            "train_rows": int(sum(len(lt) for lt in train_lt)),
            "test_rows": int(sum(len(lt) for lt in test_lt)),
        }
        with open(outdir / "split.json", "w") as f:
            json.dump(split_info, f, indent=1)
            f.write("\n")
        outputs["split"] = "split.json"

    with _stage("datasets"):
        ds_dir = outdir / "datasets"
        ds_dir.mkdir(exist_ok=True)
        train_ds: dict[str, SupervisedDataset] = {}
        test_ds: dict[str, SupervisedDataset] = {}
        for section in run.tasks:
            key = _window_key(section.task.dataset_mode, section.task.w)
            if key in train_ds:
                continue
            window = WindowSpec(section.task.dataset_mode, section.task.w)
            train_ds[key] = build_dataset(train_lt, window)
            test_ds[key] = build_dataset(test_lt, window)
            write_dataset_csv(ds_dir / f"test_{key}.csv", test_ds[key])
            outputs[f"test_dataset_{key}"] = f"datasets/test_{key}.csv"

    predictors: dict[str, TrainedPredictor] = {}
    with _stage("train"):
        pred_dir = outdir / "predictors"
        pred_dir.mkdir(exist_ok=True)
        fp = file_sha256(outdir / "train_labeled.csv")
        for section in run.tasks:
            key = _window_key(section.task.dataset_mode, section.task.w)
            config = dataclasses.replace(section.train, seed=seeds["train"][section.name])
            pred, log = train_task(section.task, train_ds[key], model, config, fingerprint=fp)
            pred.save(pred_dir / f"{section.name}.json")
            write_training_log(pred_dir / f"{section.name}_trainlog.csv", log)
            predictors[section.name] = pred
            outputs[f"predictor_{section.name}"] = f"predictors/{section.name}.json"

    with _stage("evaluate"):
        thresholds = run.scene.safety.thresholds
        tables: dict[str, list[EvalReport]] = {}
        heatmaps = {}
        for section in run.tasks:
            key = _window_key(section.task.dataset_mode, section.task.w)
            pred = predictors[section.name]
            config = dataclasses.replace(section.train, seed=seeds["train"][section.name])
            if section.task.dataset_mode in ("one_step", "n_step"):
                recipe = RetrainRecipe(
                    task=section.task,
                    train_dataset=train_ds[key],
                    cluster=model,
                    config=config,
                    name=section.name,
                )
                rows = noise_sweep(
                    recipe,
                    test_ds[key],
                    deltas=run.deltas,
                    mode="retrain",
                    thresholds=thresholds,
                    noise_seed=seeds["noise"][section.name],
                    base=pred,
                )
                tables.setdefault(f"table_{section.task.dataset_mode}", []).extend(rows)
            else:
                tables.setdefault("table_average", []).append(
                    evaluate(pred, test_ds[key], name=section.name, thresholds=thresholds)
                )
                heatmaps[section.name] = make_heatmap(
                    pred, test_ds[key], cell=run.heatmap_cell, name=section.name
                )
        written = render_report(tables, heatmaps, outdir / "reports")
        outputs["reports"] = sorted(str(p.relative_to(outdir)) for p in written)

    return manifest


def reproduce(run: RunConfig, outdir: str | Path) -> dict:
    """Run the full pipeline; returns the manifest that was written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = _stage_seeds(run.master_seed, run)
    manifest = {
        "master_seed": run.master_seed,
        "episodes": run.episodes,
        "stage_seeds": seeds,
        "config": run.raw,
    }
    with open(outdir / "metadata.json", "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")

    with _stage("simulate"):
        traces = run_campaign(run.scene, run.episodes, seeds["simulate"], run.workers)
        write_trace_csv(outdir / "trace.csv", traces)

    manifest.update(_run_branch(run, traces, outdir, seeds))

    if run.import_trace is not None:
        imp_dir = outdir / "imported"
        imp_dir.mkdir(exist_ok=True)
        with _stage("import"):
            imported = read_trace_csv(run.import_trace)
        imp_seeds = _stage_seeds(run.master_seed, run, prefix="import-")
        manifest["imported"] = _run_branch(run, imported, imp_dir, imp_seeds)

    return manifest
