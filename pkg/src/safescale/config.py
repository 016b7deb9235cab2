"""Run configuration: one JSON document drives the whole pipeline.

Every default lives here in the schema, not in command code.  Command
line flags override config values; seeds are hierarchical (one master
seed, per-stage streams derived from it) so a config plus a master seed
pins every output byte.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from safescale.labeling import DEFAULT_EPS, DEFAULT_MIN_PTS
from safescale.nn.optim import TrainConfig
from safescale.scene import SceneConfig, SceneError, default_scene
from safescale.tasks import TaskError, TaskKind


class ConfigError(ValueError):
    """Raised when a run configuration fails validation."""


def default_config() -> dict:
    """The stock pipeline: thousand-episode campaign, all six predictors."""
    return {
        "master_seed": 20240117,
        "episodes": 1000,
        "workers": 1,
        "scene": default_scene().to_dict(),
        "labeling": {
            "eps": DEFAULT_EPS,
            "min_pts": DEFAULT_MIN_PTS,
            "train_fraction": 0.8,
            "deltas": [0.0, 0.02, 0.05],
        },
        "train_defaults": TrainConfig().to_dict(),
        "tasks": [
            {"name": "one_step_classification", "kind": "classify_one_step", "w": 0},
            {"name": "one_step_regression", "kind": "regress_one_step", "w": 0},
            {"name": "n_step_classification_w20", "kind": "classify_n_step", "w": 20},
            {"name": "n_step_regression_w20", "kind": "regress_n_step", "w": 20},
            {"name": "average_w140", "kind": "average_window", "w": 140},
            {"name": "average_w190", "kind": "average_window", "w": 190},
        ],
        "eval": {"heatmap_cell": 0.1},
        "import_trace": None,
    }


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None) -> dict:
    """Defaults merged with the JSON document at ``path`` (if given)."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path) as f:
            user = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return _merge(cfg, user)


@dataclass(frozen=True)
class TaskSection:
    name: str
    task: TaskKind
    train: TrainConfig


@dataclass(frozen=True)
class RunConfig:
    master_seed: int
    episodes: int
    workers: int
    scene: SceneConfig
    eps: float
    min_pts: int
    train_fraction: float
    deltas: tuple[float, ...]
    tasks: tuple[TaskSection, ...]
    heatmap_cell: float
    import_trace: str | None
    raw: dict


def parse_config(cfg: dict) -> RunConfig:
    """Validate the merged document into typed sections."""
    try:
        scene = SceneConfig.from_dict(cfg["scene"])
    except (KeyError, SceneError, ValueError) as exc:
        raise ConfigError(f"scene section: {exc}") from exc

    lab = cfg.get("labeling", {})
    try:
        eps = float(lab["eps"])
        min_pts = int(lab["min_pts"])
        fraction = float(lab["train_fraction"])
        deltas = tuple(float(d) for d in lab["deltas"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"labeling section: {exc}") from exc
    if eps <= 0 or min_pts < 1:
        raise ConfigError(f"labeling: eps must be > 0 and min_pts >= 1, got {eps}, {min_pts}")
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"labeling: train_fraction must lie in (0, 1), got {fraction}")
    if any(d < 0 for d in deltas) or list(deltas) != sorted(deltas):
        raise ConfigError(f"labeling: deltas must be non-negative and ascending, got {deltas}")

    episodes = int(cfg.get("episodes", 1000))
    if episodes < 2:
        raise ConfigError(f"episodes must be >= 2 (the split needs both sides), got {episodes}")
    workers = int(cfg.get("workers", 1))
    master_seed = int(cfg.get("master_seed", 0))

    defaults = cfg.get("train_defaults", {})
    tasks = []
    names = set()
    for entry in cfg.get("tasks", []):
        try:
            name = entry["name"]
            task = TaskKind(kind=entry["kind"], w=int(entry.get("w", 0)))
            train = TrainConfig.from_dict(_merge(defaults, entry.get("train", {})))
        except (KeyError, TypeError, ValueError, TaskError) as exc:
            raise ConfigError(f"task section {entry.get('name', entry)}: {exc}") from exc
        if name in names:
            raise ConfigError(f"duplicate task name {name!r}")
        names.add(name)
        tasks.append(TaskSection(name=name, task=task, train=train))

    ev = cfg.get("eval", {})
    cell = float(ev.get("heatmap_cell", 0.1))
    if cell <= 0:
        raise ConfigError(f"eval.heatmap_cell must be positive, got {cell}")

    imp = cfg.get("import_trace")
    if imp is not None and not isinstance(imp, str):
        raise ConfigError(f"import_trace must be a path string or null, got {imp!r}")

    return RunConfig(
        master_seed=master_seed,
        episodes=episodes,
        workers=workers,
        scene=scene,
        eps=eps,
        min_pts=min_pts,
        train_fraction=fraction,
        deltas=deltas,
        tasks=tuple(tasks),
        heatmap_cell=cell,
        import_trace=imp,
        raw=cfg,
    )
