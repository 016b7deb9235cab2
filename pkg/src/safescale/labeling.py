"""Self-labeling and supervised dataset construction.

The recorded scaling values are clustered with a density criterion
(1-D DBSCAN: a point is core if at least ``min_pts`` values fall within
``eps`` of it, clusters are maximal eps-chains of core points), each
cluster is summarized by the mean of its members, and every sample is
then labeled with the index of its nearest centroid.  Datasets for the
three prediction problems are cut from labeled traces: current-step
rows, rows with targets shifted ``w`` ticks ahead, and rows with the
forward window average as the target.  Windows never cross episode
boundaries.  Optional sensor noise perturbs the horizontal components
of the observed human position; targets always stay clean.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from safescale.seeding import make_rng
from safescale.simulate import EpisodeTrace, Sample

DEFAULT_EPS = 0.02
DEFAULT_MIN_PTS = 10

_XH_HORIZONTAL = slice(3, 5)  # xh_x, xh_y inside a feature row


class ClusteringError(RuntimeError):
    """Raised when density clustering cannot produce a usable model."""


@dataclass(frozen=True)
class ClusterModel:
    """Centroids (ascending) plus the density parameters that found them."""

    centroids: tuple[float, ...]
    eps: float
    min_pts: int

    def __post_init__(self) -> None:
        if len(self.centroids) < 1:
            raise ClusteringError("a cluster model needs at least one centroid")
        if self.eps <= 0 or self.min_pts < 1:
            raise ClusteringError(f"eps must be > 0 and min_pts >= 1, got {self.eps}, {self.min_pts}")
        arr = np.asarray(self.centroids, dtype=np.float64)
        if not (np.isfinite(arr).all() and arr.min() >= 0.0 and arr.max() <= 1.0):
            raise ClusteringError(f"centroids must lie in [0, 1], got {self.centroids}")
        if len(self.centroids) > 1 and not (np.diff(arr) > 0).all():
            raise ClusteringError(f"centroids must be strictly increasing, got {self.centroids}")

    @property
    def p(self) -> int:
        return len(self.centroids)

    def assign(self, values: np.ndarray) -> np.ndarray:
        """1-based index of the nearest centroid per value; ties take the lower index."""
        c = np.asarray(self.centroids, dtype=np.float64)
        mids = 0.5 * (c[:-1] + c[1:])
        # searchsorted(side="left") maps a value exactly on a midpoint to
        # the lower cluster, which is the declared tie rule.
        return np.searchsorted(mids, np.asarray(values, dtype=np.float64), side="left") + 1

    def assign_one(self, value: float) -> int:
        return int(self.assign(np.asarray([value]))[0])

    def to_dict(self) -> dict:
        return {
            "format": "safescale-cluster-model",
            "eps": self.eps,
            "min_pts": self.min_pts,
            "p": self.p,
            "centroids": list(self.centroids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterModel":
        try:
            return cls(
                centroids=tuple(float(c) for c in data["centroids"]),
                eps=float(data["eps"]),
                min_pts=int(data["min_pts"]),
            )
        except KeyError as exc:
            raise ClusteringError(f"cluster model file is missing key {exc}") from exc

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClusterModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _dbscan_1d(vals: np.ndarray, eps: float, min_pts: int) -> list[tuple[int, int]]:
    """Member slices [start, end) per cluster on the sorted value array.

    Core points are eps-chained into clusters; non-core points within
    eps of a core join it, with overlaps between adjacent clusters cut
    at the midpoint between their facing cores (ties go low).  Points
    beyond eps of every core are noise and belong to no slice.
    """
    n = vals.shape[0]
    counts = np.searchsorted(vals, vals + eps, side="right") - np.searchsorted(
        vals, vals - eps, side="left"
    )
    core = np.flatnonzero(counts >= min_pts)
    if core.size == 0:
        raise ClusteringError(
            f"no cluster satisfies min_pts={min_pts} within eps={eps}; "
            "loosen eps or lower min_pts"
        )
    breaks = np.flatnonzero(np.diff(vals[core]) > eps)
    runs = np.split(core, breaks + 1)
    slices: list[tuple[int, int]] = []
    prev_end = 0
    for k, run in enumerate(runs):
        first_core, last_core = vals[run[0]], vals[run[-1]]
        start = int(np.searchsorted(vals, first_core - eps, side="left"))
        end = int(np.searchsorted(vals, last_core + eps, side="right"))
        if k + 1 < len(runs):
            cut = 0.5 * (last_core + vals[runs[k + 1][0]])
            end = min(end, int(np.searchsorted(vals, cut, side="right")))
        start = max(start, prev_end)
        slices.append((start, end))
        prev_end = end
    return slices


def cluster_scalings(
    values: Sequence[float] | np.ndarray,
    eps: float = DEFAULT_EPS,
    min_pts: int = DEFAULT_MIN_PTS,
) -> ClusterModel:
    """Density-cluster scaling observations and return the centroid model."""
    vals = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if vals.size == 0:
        raise ClusteringError("cannot cluster an empty value set")
    if not (np.isfinite(vals).all() and vals[0] >= 0.0 and vals[-1] <= 1.0):
        raise ClusteringError("scaling values must lie in [0, 1]")
    slices = _dbscan_1d(vals, eps, min_pts)
    centroids = tuple(float(vals[a:b].mean()) for a, b in slices)
    return ClusterModel(centroids=centroids, eps=eps, min_pts=min_pts)


@dataclass(frozen=True)
class LabeledSample(Sample):
    cluster_index: int = 0


@dataclass(eq=False)
class LabeledTrace:
    """An episode trace plus its 1-based cluster index per sample."""

    trace: EpisodeTrace
    cluster: np.ndarray

    def __len__(self) -> int:
        return len(self.trace)

    @property
    def episode_id(self) -> int:
        return self.trace.episode_id

    def sample(self, i: int) -> LabeledSample:
        base = self.trace.sample(i)
        return LabeledSample(**vars(base), cluster_index=int(self.cluster[i]))


def assign_labels(traces: Iterable[EpisodeTrace], model: ClusterModel) -> list[LabeledTrace]:
    return [LabeledTrace(trace=tr, cluster=model.assign(tr.s)) for tr in traces]


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian noise on the horizontal components of xh."""

    delta: float
    seed: int

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")


def inject_noise(traces: list[EpisodeTrace], spec: NoiseSpec) -> list[EpisodeTrace]:
    """Perturbed copies of the traces; s and goals stay untouched."""
    rng = make_rng(spec.seed)
    out = []
    for tr in traces:
        xh = tr.xh.copy()
        xh[:, :2] += rng.normal(0.0, spec.delta, size=(len(tr), 2))
        out.append(replace(tr, xh=xh))
    return out


_MODES = ("one_step", "n_step", "average")


@dataclass(frozen=True)
class WindowSpec:
    mode: str
    w: int = 0

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.mode == "one_step":
            if self.w != 0:
                raise ValueError(f"one_step requires w = 0, got {self.w}")
        elif self.w < 1:
            raise ValueError(f"{self.mode} requires w >= 1, got {self.w}")


_STATE_FEATURES = ("xr_x", "xr_y", "xr_z", "xh_x", "xh_y", "xh_z")
_GOAL_FEATURES = ("gr_x", "gr_y", "gr_z", "gh_x", "gh_y", "gh_z")


@dataclass(eq=False)
class SupervisedDataset:
    """Row-aligned arrays for one prediction problem.

    ``target_cluster`` is None for the average task, whose target is a
    window mean rather than a level.  ``w`` is -1 when the dataset was
    loaded from a file that does not record its horizon.
    """

    mode: str
    w: int
    feature_names: tuple[str, ...]
    episode: np.ndarray
    t: np.ndarray
    features: np.ndarray
    target_s: np.ndarray
    target_cluster: np.ndarray | None

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def episode_ids(self) -> np.ndarray:
        seen = {}
        for e in self.episode:
            seen.setdefault(int(e), None)
        return np.asarray(list(seen), dtype=np.int64)

    def select(self, mask: np.ndarray) -> "SupervisedDataset":
        return SupervisedDataset(
            mode=self.mode,
            w=self.w,
            feature_names=self.feature_names,
            episode=self.episode[mask],
            t=self.t[mask],
            features=self.features[mask],
            target_s=self.target_s[mask],
            target_cluster=None if self.target_cluster is None else self.target_cluster[mask],
        )


def build_dataset(labeled: Sequence[LabeledTrace], window: WindowSpec) -> SupervisedDataset:
    """Cut supervised rows from labeled traces per the window mode."""
    names = _STATE_FEATURES if window.mode == "one_step" else _STATE_FEATURES + _GOAL_FEATURES
    w = window.w
    ep_l, t_l, x_l, s_l, c_l = [], [], [], [], []
    for lt in labeled:
        tr = lt.trace
        n = len(tr)
        if n < w + 1:
            warnings.warn(
                f"episode {tr.episode_id} has {n} samples, shorter than w+1={w + 1}; skipped",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        rows = n - w
        feats = [tr.xr, tr.xh] if window.mode == "one_step" else [tr.xr, tr.xh, tr.gr, tr.gh]
        x_l.append(np.hstack(feats)[:rows])
        ep_l.append(np.full(rows, tr.episode_id, dtype=np.int64))
        t_l.append(tr.t[:rows])
        if window.mode == "average":
            win = np.lib.stride_tricks.sliding_window_view(tr.s, w + 1)
            s_l.append(win.mean(axis=-1))
        else:
            s_l.append(tr.s[w:])
            c_l.append(lt.cluster[w:])
    if not x_l:
        raise ClusteringError(f"no episode is long enough for w={w}; nothing to learn from")
    return SupervisedDataset(
        mode=window.mode,
        w=w,
        feature_names=names,
        episode=np.concatenate(ep_l),
        t=np.concatenate(t_l),
        features=np.vstack(x_l),
        target_s=np.concatenate(s_l),
        target_cluster=np.concatenate(c_l) if window.mode != "average" else None,
    )


def drop_goal_features(ds: SupervisedDataset) -> SupervisedDataset:
    """The 6-wide ablation: same rows and targets, goal columns removed."""
    if ds.n_features != 12:
        raise ValueError(f"goal dropping expects 12 features, got {ds.n_features}")
    return SupervisedDataset(
        mode=ds.mode,
        w=ds.w,
        feature_names=ds.feature_names[:6],
        episode=ds.episode,
        t=ds.t,
        features=ds.features[:, :6].copy(),
        target_s=ds.target_s,
        target_cluster=ds.target_cluster,
    )


def inject_dataset_noise(ds: SupervisedDataset, spec: NoiseSpec) -> SupervisedDataset:
    """Perturb the xh_x/xh_y feature columns; targets stay clean."""
    feats = ds.features.copy()
    rng = make_rng(spec.seed)
    feats[:, _XH_HORIZONTAL] += rng.normal(0.0, spec.delta, size=(ds.n_rows, 2))
    return SupervisedDataset(
        mode=ds.mode,
        w=ds.w,
        feature_names=ds.feature_names,
        episode=ds.episode,
        t=ds.t,
        features=feats,
        target_s=ds.target_s,
        target_cluster=ds.target_cluster,
    )


def _split_episode_ids(
    ids: Sequence[int],
    rows: Sequence[int],
    train_fraction: float,
    seed: int,
) -> tuple[set[int], set[int]]:
    """Greedy whole-episode split targeting the row fraction."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(ids) < 2:
        raise ValueError(f"episode split needs at least 2 episodes, got {len(ids)}")
    rng = make_rng(seed)
    order = rng.permutation(len(ids))
    target = train_fraction * float(sum(rows))
    train: set[int] = set()
    got = 0.0
    for j in order:
        if got >= target:
            break
        new = got + rows[j]
        if new <= target or (new - target) < (target - got):
            train.add(ids[j])
            got = new
    if not train:
        train.add(ids[order[0]])
    if len(train) == len(ids):
        train.discard(ids[order[len(ids) - 1]])
    test = set(ids) - train
    return train, test


def split_traces(
    labeled: Sequence[LabeledTrace],
    train_fraction: float,
    seed: int,
) -> tuple[list[LabeledTrace], list[LabeledTrace]]:
    ids = [lt.episode_id for lt in labeled]
    rows = [len(lt) for lt in labeled]
    train_ids, _ = _split_episode_ids(ids, rows, train_fraction, seed)
    train = [lt for lt in labeled if lt.episode_id in train_ids]
    test = [lt for lt in labeled if lt.episode_id not in train_ids]
    return train, test


def split_dataset(
    ds: SupervisedDataset,
    train_fraction: float,
    seed: int,
) -> tuple[SupervisedDataset, SupervisedDataset]:
    """Whole-episode split of a built dataset, randomized by seed."""
    ids = ds.episode_ids()
    counts = [int((ds.episode == e).sum()) for e in ids]
    train_ids, _ = _split_episode_ids([int(e) for e in ids], counts, train_fraction, seed)
    mask = np.isin(ds.episode, sorted(train_ids))
    return ds.select(mask), ds.select(~mask)


def write_dataset_csv(path: str | Path, ds: SupervisedDataset) -> None:
    header = "episode,t," + ",".join(ds.feature_names) + ",target_s,target_cluster"
    cols = [ds.episode.astype(np.float64)[:, None], ds.t[:, None], ds.features, ds.target_s[:, None]]
    pieces = ["%d", "%.9g"] + ["%.9g"] * ds.n_features + ["%.17g"]
    if ds.target_cluster is not None:
        cols.append(ds.target_cluster.astype(np.float64)[:, None])
        pieces.append("%d")
    else:
        pieces.append("")
    mat = np.hstack(cols)
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        np.savetxt(f, mat, fmt=",".join(pieces))


def read_dataset_csv(path: str | Path) -> SupervisedDataset:
    with open(path, "r", newline="") as f:
        header = f.readline().strip().split(",")
        if header[:2] != ["episode", "t"] or header[-2:] != ["target_s", "target_cluster"]:
            raise ClusteringError(f"{path} is not a supervised dataset file")
        names = tuple(header[2:-2])
        first = f.readline()
        has_cluster = bool(first) and not first.rstrip("\r\n").endswith(",")
        ncols = len(header) if has_cluster else len(header) - 1
        f.seek(0)
        f.readline()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mat = np.loadtxt(f, delimiter=",", ndmin=2, usecols=range(ncols))
    if mat.size == 0:
        mat = mat.reshape(0, ncols)
    nf = len(names)
    mode = "average" if not has_cluster else ("one_step" if nf == 6 else "n_step")
    return SupervisedDataset(
        mode=mode,
        w=-1,
        feature_names=names,
        episode=mat[:, 0].astype(np.int64),
        t=mat[:, 1],
        features=mat[:, 2 : 2 + nf],
        target_s=mat[:, 2 + nf],
        target_cluster=mat[:, 3 + nf].astype(np.int64) if has_cluster else None,
    )
