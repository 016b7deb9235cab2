"""Metric math, boundary masking, heatmap binning, and report files."""

import json
import math

import numpy as np
import pytest

from safescale.evaluation import (
    EvalError,
    EvalReport,
    RetrainRecipe,
    boundary_mask,
    evaluate,
    make_heatmap,
    noise_sweep,
    read_report_csv,
    render_report,
    write_heatmap_pgm,
    write_report_csv,
)
from safescale.labeling import ClusterModel, SupervisedDataset
from safescale.nn import Dense, TrainConfig
from safescale.tasks import (
    TaskKind,
    TrainedPredictor,
    build_classification_net,
    build_regression_net,
    predict_batch,
)

CENTROIDS = (0.0, 0.25, 0.5, 0.75, 1.0)
THRESHOLDS = (1.2, 1.5, 1.9, 2.4)


def dataset(features, target_s, cluster=None, mode="one_step", w=0):
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    return SupervisedDataset(
        mode=mode,
        w=w,
        feature_names=("xr_x", "xr_y", "xr_z", "xh_x", "xh_y", "xh_z")[: features.shape[1]],
        episode=np.zeros(n, dtype=np.int64),
        t=np.arange(n) * 0.1,
        features=features,
        target_s=np.asarray(target_s, dtype=np.float64),
        target_cluster=None if cluster is None else np.asarray(cluster, dtype=np.int64),
    )


def constant_regressor(value):
    net = build_regression_net(6, seed=0)
    for layer in net.layers:
        if isinstance(layer, Dense):
            layer.w[...] = 0.0
            layer.b[...] = 0.0
    head = [l for l in net.layers if isinstance(l, Dense)][-1]
    head.b[...] = value
    return TrainedPredictor(task=TaskKind("regress_one_step"), network=net, cluster=None)


def constant_classifier(k, p=5):
    """Always predicts 1-based class k."""
    net = build_classification_net(6, p, seed=0)
    for layer in net.layers:
        if isinstance(layer, Dense):
            layer.w[...] = 0.0
            layer.b[...] = 0.0
    head = [l for l in net.layers if isinstance(l, Dense)][-1]
    head.b[k - 1] = 4.0
    model = ClusterModel(centroids=CENTROIDS[:p], eps=0.02, min_pts=10)
    return TrainedPredictor(task=TaskKind("classify_one_step"), network=net, cluster=model)


def random_dataset(n=500, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.uniform(-1.5, 2.5, size=(n, 6))
    cluster = rng.integers(1, 6, n)
    return dataset(feats, np.asarray(CENTROIDS)[cluster - 1], cluster)


def test_mse_matches_naive_recompute():
    ds = random_dataset(seed=1)
    pred = constant_regressor(0.5)
    rep = evaluate(pred, ds)
    naive = math.fsum((0.5 - t) ** 2 for t in ds.target_s) / ds.n_rows
    assert rep.mse == pytest.approx(naive, abs=1e-12)
    assert rep.rows == ds.n_rows
    assert rep.accuracy is None and rep.boundary_excluded_accuracy is None
    assert rep.predictor == "regress_one_step"
    assert rep.delta == 0.0


def test_constant_half_on_binary_targets():
    ds = dataset(np.zeros((8, 6)), [0.0, 1.0] * 4)
    rep = evaluate(constant_regressor(0.5), ds, name="flat", delta=0.02)
    assert rep.mse == 0.25
    assert rep.predictor == "flat"
    assert rep.delta == 0.02


def test_classification_accuracy_and_boundary_exclusion():
    rng = np.random.default_rng(2)
    n = 300
    feats = np.zeros((n, 6))
    feats[:, 3] = rng.uniform(0.5, 3.0, n)  # distance = xh_x
    d = np.linalg.norm(feats[:, 0:3] - feats[:, 3:6], axis=1)
    cluster = rng.integers(1, 6, n)
    ds = dataset(feats, np.asarray(CENTROIDS)[cluster - 1], cluster)
    pred = constant_classifier(3)
    rep = evaluate(pred, ds, thresholds=THRESHOLDS)
    hit = cluster == 3
    assert rep.accuracy == pytest.approx(hit.mean(), abs=1e-15)
    keep = np.ones(n, dtype=bool)
    for thr in THRESHOLDS:
        keep &= np.abs(d - thr) >= 0.05
    assert keep.any() and not keep.all()
    assert rep.boundary_excluded_accuracy == pytest.approx(hit[keep].mean(), abs=1e-15)
    # Without thresholds there is nothing to exclude.
    assert evaluate(pred, ds).boundary_excluded_accuracy is None


def test_boundary_mask_margin_is_inclusive():
    # Exact binary values so the >= comparison is unambiguous.
    feats = np.zeros((4, 6))
    feats[:, 3] = [1.25, 1.125, 0.75, 1.0]
    ds = dataset(feats, np.zeros(4))
    mask = boundary_mask(ds, thresholds=(1.0,), margin=0.25)
    assert mask.tolist() == [True, False, True, False]


def test_boundary_mask_matches_naive_loop():
    ds = random_dataset(seed=3)
    mask = boundary_mask(ds, THRESHOLDS)
    d = np.linalg.norm(ds.features[:, 0:3] - ds.features[:, 3:6], axis=1)
    want = [all(abs(di - thr) >= 0.05 for thr in THRESHOLDS) for di in d]
    assert mask.tolist() == want


def test_evaluate_compat_errors():
    ds = random_dataset(seed=4)
    with pytest.raises(EvalError, match="empty"):
        evaluate(constant_regressor(0.5), ds.select(np.zeros(ds.n_rows, dtype=bool)))
    wide = dataset(np.zeros((5, 3)), np.zeros(5))
    with pytest.raises(EvalError, match="features"):
        evaluate(constant_regressor(0.5), wide)
    bare = dataset(np.zeros((5, 6)), np.zeros(5))
    with pytest.raises(EvalError, match="cluster"):
        evaluate(constant_classifier(1), bare)


def test_heatmap_hand_placed_cells():
    feats = np.zeros((2, 6))
    feats[0, 3:5] = (0.55, 1.23)
    feats[1, 3:5] = (0.01, 0.01)
    ds = dataset(feats, [0.3, 0.5])
    grid = make_heatmap(constant_regressor(0.5), ds)
    assert grid.metric == "abs_error"
    assert (grid.origin_x, grid.origin_y) == (0.0, 0.0)
    assert grid.shape == (6, 13)
    assert grid.total == 2
    assert grid.counts[5, 12] == 1 and grid.counts[0, 0] == 1
    assert grid.mean_metric[5, 12] == pytest.approx(0.2, abs=1e-12)
    assert grid.mean_metric[0, 0] == 0.0
    empties = np.ones((6, 13), dtype=bool)
    empties[5, 12] = empties[0, 0] = False
    assert np.isnan(grid.mean_metric[empties]).all()
    assert grid.counts[empties].sum() == 0


def test_heatmap_negative_coordinates_offset_origin():
    feats = np.zeros((1, 6))
    feats[0, 3:5] = (-0.35, -1.01)
    ds = dataset(feats, [0.0])
    grid = make_heatmap(constant_regressor(0.0), ds)
    assert grid.origin_x == pytest.approx(-0.4)
    assert grid.origin_y == pytest.approx(-1.1)
    assert grid.counts.sum() == 1


def test_heatmap_conservation():
    ds = random_dataset(n=700, seed=5)
    pred = constant_regressor(0.4)
    grid = make_heatmap(pred, ds)
    assert grid.total == ds.n_rows
    occupied = grid.counts > 0
    weighted = float((grid.counts[occupied] * grid.mean_sq[occupied]).sum()) / grid.total
    assert weighted == pytest.approx(evaluate(pred, ds).mse, abs=1e-9)


def test_heatmap_classification_metric_is_hit_rate():
    ds = random_dataset(n=200, seed=6)
    grid = make_heatmap(constant_classifier(2), ds)
    assert grid.metric == "correct"
    occupied = grid.counts > 0
    hits = float((grid.counts[occupied] * grid.mean_metric[occupied]).sum())
    assert hits == pytest.approx((ds.target_cluster == 2).sum(), abs=1e-9)


def test_heatmap_empty_dataset_and_bad_cell():
    ds = random_dataset(seed=7)
    empty = ds.select(np.zeros(ds.n_rows, dtype=bool))
    grid = make_heatmap(constant_regressor(0.5), empty)
    assert grid.shape == (0, 0)
    assert grid.total == 0
    with pytest.raises(EvalError, match="cell"):
        make_heatmap(constant_regressor(0.5), ds, cell=0.0)


def test_pgm_bytes_exact(tmp_path):
    feats = np.zeros((2, 6))
    feats[0, 3:5] = (0.55, 1.23)
    feats[1, 3:5] = (0.01, 0.01)
    ds = dataset(feats, [0.3, 0.5])
    grid = make_heatmap(constant_regressor(0.5), ds)
    path = tmp_path / "grid.pgm"
    write_heatmap_pgm(path, grid)
    img = np.full((13, 6), 128, dtype=np.uint8)
    img[13 - 1 - 12, 5] = 0  # peak error cell renders black
    img[13 - 1 - 0, 0] = 255  # zero error renders white
    assert path.read_bytes() == b"P5\n6 13\n255\n" + img.tobytes()


def test_pgm_zero_peak_renders_white(tmp_path):
    feats = np.zeros((1, 6))
    feats[0, 3:5] = (0.05, 0.05)
    ds = dataset(feats, [0.5])
    grid = make_heatmap(constant_regressor(0.5), ds)
    path = tmp_path / "flat.pgm"
    write_heatmap_pgm(path, grid)
    assert path.read_bytes() == b"P5\n1 1\n255\n" + bytes([255])


def test_report_csv_roundtrip(tmp_path):
    reports = [
        EvalReport("regress_one_step", 0.0, 1.5e-3, None, None, 1000),
        EvalReport("classify_one_step", 0.02, 2.5e-3, 0.97, 0.9991, 1000),
        EvalReport("classify_one_step", "avg", 2e-3, 0.98, None, 1000),
    ]
    path = tmp_path / "report.csv"
    write_report_csv(path, reports)
    assert read_report_csv(path) == reports
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n")
    with pytest.raises(EvalError):
        read_report_csv(bad)


def test_noise_sweep_eval_only():
    ds = random_dataset(seed=8)
    pred = constant_regressor(0.5)
    plain = evaluate(pred, ds, name="flat")
    reports = noise_sweep(pred, ds, deltas=(0.0, 0.02, 0.05), name="flat", noise_seed=3)
    assert [r.delta for r in reports] == [0.0, 0.02, 0.05, "avg"]
    assert reports[0].mse == plain.mse
    # A constant predictor is noise-immune; targets never change either.
    assert reports[1].mse == plain.mse
    assert reports[-1].mse == pytest.approx(np.mean([r.mse for r in reports[:3]]), abs=1e-15)
    assert all(r.predictor == "flat" for r in reports)


def test_noise_sweep_perturbs_predictions():
    # A net that reads xh_x sees the injected noise.
    ds = random_dataset(seed=9)
    net = build_regression_net(6, seed=0)
    dense = [l for l in net.layers if isinstance(l, Dense)]
    for layer in dense:
        layer.w[...] = 0.0
        layer.b[...] = 0.0
    dense[0].w[3, 0] = 1.0  # unit 0 carries xh_x through every block
    for layer in dense[1:-1]:
        layer.w[0, 0] = 1.0
    dense[-1].w[0, 0] = 0.05
    dense[-1].b[...] = 0.5
    pred = TrainedPredictor(task=TaskKind("regress_one_step"), network=net, cluster=None)
    reports = noise_sweep(pred, ds, deltas=(0.0, 0.05))
    assert reports[0].mse != reports[1].mse


def test_noise_sweep_validation():
    ds = random_dataset(seed=10)
    pred = constant_regressor(0.5)
    with pytest.raises(EvalError, match="sorted"):
        noise_sweep(pred, ds, deltas=(0.05, 0.0))
    with pytest.raises(EvalError, match="mode"):
        noise_sweep(pred, ds, mode="refit")
    with pytest.raises(EvalError, match="RetrainRecipe"):
        noise_sweep(pred, ds, mode="retrain")
    recipe = RetrainRecipe(
        task=TaskKind("regress_one_step"),
        train_dataset=ds,
        cluster=None,
        config=TrainConfig(max_epochs=1, batch_size=16),
        name="r",
    )
    with pytest.raises(EvalError, match="TrainedPredictor"):
        noise_sweep(recipe, ds, mode="eval_only")


def test_noise_sweep_retrain_reuses_base_at_zero():
    train_ds = random_dataset(n=80, seed=11)
    test_ds = random_dataset(n=60, seed=12)
    base = constant_regressor(0.5)
    recipe = RetrainRecipe(
        task=TaskKind("regress_one_step"),
        train_dataset=train_ds,
        cluster=None,
        config=TrainConfig(learning_rate=1e-3, batch_size=16, max_epochs=2, val_fraction=0.25, seed=1),
        name="sweep",
    )
    reports = noise_sweep(recipe, test_ds, deltas=(0.0, 0.05), mode="retrain", base=base)
    assert reports[0].mse == evaluate(base, test_ds).mse
    assert [r.delta for r in reports] == [0.0, 0.05, "avg"]
    # The delta = 0.05 entry really was retrained, not the base.
    assert reports[1].mse != evaluate(base, test_ds).mse


def test_render_report_file_set(tmp_path):
    ds = random_dataset(n=40, seed=13)
    pred = constant_regressor(0.5)
    reports = noise_sweep(pred, ds, deltas=(0.0, 0.02))
    grid = make_heatmap(pred, ds)
    empty = make_heatmap(pred, ds.select(np.zeros(ds.n_rows, dtype=bool)))
    written = render_report({"report": reports}, {"flat": grid, "none": empty}, tmp_path)
    names = sorted(p.name for p in written)
    assert names == [
        "heatmap_flat.csv",
        "heatmap_flat.meta.json",
        "heatmap_flat.pgm",
        "heatmap_none.csv",
        "heatmap_none.meta.json",
        "report.csv",
    ]
    assert all(p.exists() for p in written)
    meta = json.loads((tmp_path / "heatmap_flat.meta.json").read_text())
    assert meta["rows"] == 40
    assert meta["shape"] == list(grid.shape)
    body = (tmp_path / "heatmap_flat.csv").read_text().splitlines()
    assert body[0] == "cell_x,cell_y,count,mean_metric"
    assert len(body) == 1 + grid.shape[0] * grid.shape[1]
