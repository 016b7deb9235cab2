"""Command line front end.

Subcommands mirror the pipeline stages (simulate, label, train, eval,
predict, reproduce).  A JSON config file supplies defaults; flags
override it.  Exit codes: 0 success, 2 usage or config error, 3
runtime or data error.  No environment variables are consulted.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from safescale.config import ConfigError, RunConfig, load_config, parse_config
from safescale.evaluation import make_heatmap, noise_sweep, render_report
from safescale.labeling import (
    ClusterModel,
    LabeledTrace,
    NoiseSpec,
    WindowSpec,
    assign_labels,
    build_dataset,
    cluster_scalings,
    drop_goal_features,
    inject_dataset_noise,
    read_dataset_csv,
)
from safescale.nn.optim import TrainConfig
from safescale.pipeline import reproduce
from safescale.seeding import derive_seed
from safescale.simulate import run_campaign
from safescale.tasks import (
    TASK_KINDS,
    TaskKind,
    TrainedPredictor,
    predict_scaling,
    train_task,
    write_training_log,
)
from safescale.traceio import (
    file_sha256,
    read_labeled_csv,
    read_trace_csv,
    write_labeled_csv,
    write_trace_csv,
)


def _load_run(args: argparse.Namespace) -> RunConfig:
    return parse_config(load_config(getattr(args, "config", None)))


def cmd_simulate(args: argparse.Namespace) -> int:
    run = _load_run(args)
    episodes = args.episodes if args.episodes is not None else run.episodes
    if episodes < 1:
        raise ConfigError(f"--episodes must be >= 1, got {episodes}")
    seed = args.seed if args.seed is not None else run.master_seed
    workers = args.workers if args.workers is not None else run.workers
    traces = run_campaign(run.scene, episodes, seed, max_workers=workers)
    write_trace_csv(args.out, traces)
    total = sum(len(tr) for tr in traces)
    print(f"episodes: {episodes}")
    print(f"samples: {total}")
    all_s = np.concatenate([tr.s for tr in traces])
    for level in run.scene.safety.levels:
        share = float((all_s == level).mean())
        print(f"level {level:g}: {share:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_label(args: argparse.Namespace) -> int:
    run = _load_run(args)
    eps = args.eps if args.eps is not None else run.eps
    min_pts = args.min_pts if args.min_pts is not None else run.min_pts
    traces = read_trace_csv(args.trace)
    model = cluster_scalings(np.concatenate([tr.s for tr in traces]), eps=eps, min_pts=min_pts)
    labeled = assign_labels(traces, model)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    model.save(outdir / "cluster_model.json")
    write_labeled_csv(outdir / "labeled.csv", traces, [lt.cluster for lt in labeled])
    print(f"P = {model.p}")
    print("centroids: " + ", ".join("%.9g" % c for c in model.centroids))
    print(f"wrote {outdir / 'cluster_model.json'} and {outdir / 'labeled.csv'}")
    return 0


def _centroids_from_labels(labeled: list[LabeledTrace], eps: float, min_pts: int) -> ClusterModel:
    """Rebuild a centroid set from stored labels as per-label means."""
    s = np.concatenate([lt.trace.s for lt in labeled])
    c = np.concatenate([lt.cluster for lt in labeled])
    centroids = tuple(float(s[c == j].mean()) for j in range(1, int(c.max()) + 1))
    return ClusterModel(centroids=centroids, eps=eps, min_pts=min_pts)


def cmd_train(args: argparse.Namespace) -> int:
    run = _load_run(args)
    task = TaskKind(kind=args.task, w=args.w)
    traces, clusters = read_labeled_csv(args.data)
    labeled = [LabeledTrace(trace=tr, cluster=cl) for tr, cl in zip(traces, clusters)]
    if args.cluster_model is not None:
        model = ClusterModel.load(args.cluster_model)
    else:
        model = _centroids_from_labels(labeled, run.eps, run.min_pts)
    ds = build_dataset(labeled, WindowSpec(task.dataset_mode, task.w))
    if args.drop_goals:
        ds = drop_goal_features(ds)
    seed = args.seed if args.seed is not None else run.master_seed
    if args.delta > 0.0:
        ds = inject_dataset_noise(ds, NoiseSpec(args.delta, derive_seed(seed, "train-noise", args.delta)))
    overrides = {
        "seed": seed,
        "max_epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "patience": args.patience,
        "val_fraction": args.val_fraction,
    }
    base = run.raw.get("train_defaults", {})
    config_dict = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        config = TrainConfig.from_dict(config_dict)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"training settings: {exc}") from exc
    pred, log = train_task(task, ds, model, config, fingerprint=file_sha256(args.data))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    pred.save(outdir / "predictor.json")
    write_training_log(outdir / "trainlog.csv", log)
    print(f"task: {task.kind} (w={task.w}), rows: {ds.n_rows}, delta: {args.delta:g}")
    print(f"epochs run: {pred.network.epochs_run}, best epoch: {log.best_epoch}, "
          f"best val loss: {log.best_val:.6g}")
    print(f"wrote {outdir / 'predictor.json'} and {outdir / 'trainlog.csv'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run = _load_run(args)
    pred = TrainedPredictor.load(args.predictor)
    ds = read_dataset_csv(args.data)
    deltas = tuple(float(d) for d in args.deltas.split(","))
    thresholds = run.scene.safety.thresholds
    name = pred.task.kind
    rows = noise_sweep(
        pred,
        ds,
        deltas=deltas,
        mode="eval_only",
        thresholds=thresholds,
        noise_seed=args.noise_seed,
        name=name,
    )
    grid = make_heatmap(pred, ds, cell=args.heatmap_cell, name=name)
    written = render_report({"report": rows}, {name: grid}, args.out)
    for r in rows:
        delta = r.delta if isinstance(r.delta, str) else "%g" % r.delta
        acc = "" if r.accuracy is None else f", accuracy {r.accuracy:.4f}"
        print(f"delta {delta}: mse {r.mse:.6g}{acc}")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    pred = TrainedPredictor.load(args.predictor)
    values = np.asarray([float(v) for v in args.input.split(",")], dtype=np.float64)
    if values.shape[0] != pred.in_width:
        raise ConfigError(
            f"--input needs {pred.in_width} comma-separated values for this predictor, "
            f"got {values.shape[0]}"
        )
    print("%.9g" % predict_scaling(pred, values))
    return 0


def cmd_reproduce(args: argparse.Namespace) -> int:
    run = _load_run(args)
    overrides = {}
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        raw = dict(run.raw)
        raw.update(overrides)
        run = parse_config(raw)
    manifest = reproduce(run, args.out)
    print(f"episodes: {run.episodes}, master seed: {run.master_seed}")
    print(f"P = {manifest.get('p')}, centroids: {manifest.get('centroids')}")
    print(f"artifacts under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safescale",
        description="Simulate a shared workcell, self-label safety scalings, "
        "train predictors, and evaluate them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a campaign and write the trace CSV")
    p.add_argument("--config", help="JSON run config (defaults apply when omitted)")
    p.add_argument("--episodes", type=int, help="number of episodes")
    p.add_argument("--seed", type=int, help="campaign master seed")
    p.add_argument("--workers", type=int, help="parallel episode workers")
    p.add_argument("--out", required=True, help="output trace CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("label", help="cluster scalings and label a trace")
    p.add_argument("trace", help="campaign trace CSV")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--eps", type=float, help="density radius in scaling units")
    p.add_argument("--min-pts", type=int, dest="min_pts", help="min points for a core value")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train one predictor from a labeled trace")
    p.add_argument("data", help="labeled trace CSV")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--task", required=True, choices=TASK_KINDS)
    p.add_argument("--w", type=int, default=0, help="horizon in ticks")
    p.add_argument("--delta", type=float, default=0.0, help="training noise std in meters")
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--cluster-model", dest="cluster_model", help="cluster model JSON (else rebuilt from labels)")
    p.add_argument("--drop-goals", dest="drop_goals", action="store_true", help="ablation: drop gr/gh features")
    p.add_argument("--epochs", type=int, help="max training epochs")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a predictor on a dataset CSV")
    p.add_argument("predictor", help="predictor JSON")
    p.add_argument("data", help="supervised dataset CSV")
    p.add_argument("--config", help="JSON run config (threshold source)")
    p.add_argument("--deltas", default="0", help="comma list of test noise stds")
    p.add_argument("--noise-seed", dest="noise_seed", type=int, default=0)
    p.add_argument("--heatmap-cell", dest="heatmap_cell", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="decode one input row through a predictor")
    p.add_argument("predictor", help="predictor JSON")
    p.add_argument("--input", required=True, help="comma-separated feature values")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("reproduce", help="run the full pipeline under one seed")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--episodes", type=int, help="override episode count")
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--workers", type=int, help="override worker count")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime/data errors map to one exit code
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
