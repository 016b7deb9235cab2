"""Box-transfer cell simulator.

One episode runs two independent processes on a shared clock:

* the robot carries boxes from the conveyor pick point to the table
  slots (one trajectory per leg, visiting slots in a seeded random
  order, returning home when every slot is filled);
* the operator carries boxes from the inbound slots to the outbound
  slots along randomized paths, dwelling at each station, and walks
  back to the rest station after the last box.

Each tick evaluates the staircase safety function on the current
human-robot distance, records a sample, then advances the robot by
``s * v_nom * dt`` and the human by ``human_speed * dt``.  The episode
ends when both processes are done.  All randomness flows through one
``numpy`` Generator per episode with a fixed draw order (robot slot
permutation, inbound permutation, outbound permutation, then per-leg
path noise and dwells in temporal order), so a (config, seed) pair
fully determines the trace.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from safescale.safety import Position3
from safescale.scene import SceneConfig, WorkspaceBounds
from safescale.seeding import derive_seed, make_rng

_Vec = tuple[float, float, float]


class SimulationError(RuntimeError):
    """Raised when an episode cannot run to completion."""


@dataclass(frozen=True)
class Sample:
    """One recorded tick: states, goals, and the applied scaling."""

    episode_id: int
    t: float
    xr: Position3
    xh: Position3
    gr: Position3
    gh: Position3
    s: float


@dataclass(eq=False)
class EpisodeTrace:
    """Column-array storage for one episode's samples.

    ``t`` is seconds from episode start; position arrays are (n, 3);
    ``s`` holds the recorded scaling per tick.  ``n_clamped`` counts
    perturbed human waypoints that had to be clamped to the workspace.
    """

    episode_id: int
    seed: int
    t: np.ndarray
    xr: np.ndarray
    xh: np.ndarray
    gr: np.ndarray
    gh: np.ndarray
    s: np.ndarray
    n_clamped: int = 0

    def __len__(self) -> int:
        return self.t.shape[0]

    def sample(self, i: int) -> Sample:
        return Sample(
            episode_id=self.episode_id,
            t=float(self.t[i]),
            xr=Position3.from_sequence(self.xr[i]),
            xh=Position3.from_sequence(self.xh[i]),
            gr=Position3.from_sequence(self.gr[i]),
            gh=Position3.from_sequence(self.gh[i]),
            s=float(self.s[i]),
        )

    def __iter__(self):
        return (self.sample(i) for i in range(len(self)))

    def as_matrix(self) -> np.ndarray:
        """Rows in trace-file column order: episode,t,xr,xh,gr,gh,s."""
        n = len(self)
        ep = np.full((n, 1), float(self.episode_id))
        return np.hstack([ep, self.t[:, None], self.xr, self.xh, self.gr, self.gh, self.s[:, None]])


def _clamp(p: _Vec, bounds: WorkspaceBounds | None) -> tuple[_Vec, bool]:
    if bounds is None:
        return p, False
    return bounds.clamp(p)


def _plan_path(
    start: _Vec,
    goal: _Vec,
    rng: np.random.Generator,
    goal_sigma: float,
    midpoint_sigma: float,
    bounds: WorkspaceBounds | None,
) -> tuple[list[_Vec], int]:
    """[midpoint', goal'] waypoints with horizontal Gaussian perturbation.

    Draw order: goal dx, goal dy, midpoint dx, midpoint dy.  The start
    point is where the agent already stands, so it is not part of the
    returned list.  Returns the waypoints and the clamp count.
    """
    gx = goal[0] + rng.normal(0.0, goal_sigma)
    gy = goal[1] + rng.normal(0.0, goal_sigma)
    g, gcl = _clamp((gx, gy, goal[2]), bounds)
    mx = 0.5 * (start[0] + g[0]) + rng.normal(0.0, midpoint_sigma)
    my = 0.5 * (start[1] + g[1]) + rng.normal(0.0, midpoint_sigma)
    m, mcl = _clamp((mx, my, 0.5 * (start[2] + g[2])), bounds)
    return [m, g], int(gcl) + int(mcl)


def plan_human_path(
    start: Position3,
    nominal_goal: Position3,
    rng: np.random.Generator,
    goal_sigma: float = 0.05,
    midpoint_sigma: float = 0.25,
    bounds: WorkspaceBounds | None = None,
) -> list[Position3]:
    """Randomized walking path [start, midpoint', goal'].

    goal' adds horizontal N(0, goal_sigma^2) to the nominal goal;
    midpoint' adds horizontal N(0, midpoint_sigma^2) to the arithmetic
    midpoint of start and goal'.  Perturbed points falling outside
    ``bounds`` are clamped onto them.
    """
    wps, _ = _plan_path(start.as_tuple(), nominal_goal.as_tuple(), rng, goal_sigma, midpoint_sigma, bounds)
    return [start] + [Position3.from_sequence(w) for w in wps]


def _advance(pos: _Vec, path: list[_Vec], dist: float) -> _Vec:
    """Move ``dist`` meters along ``path``, consuming reached waypoints in place."""
    while dist > 0.0 and path:
        nxt = path[0]
        seg = math.dist(pos, nxt)
        if seg <= dist:
            pos = nxt
            path.pop(0)
            dist -= seg
        else:
            f = dist / seg
            pos = (
                pos[0] + f * (nxt[0] - pos[0]),
                pos[1] + f * (nxt[1] - pos[1]),
                pos[2] + f * (nxt[2] - pos[2]),
            )
            dist = 0.0
    return pos


def robot_tick(
    pos: Position3,
    remaining_path: list[Position3],
    s: float,
    v_nom: float,
    dt: float,
) -> tuple[Position3, list[Position3]]:
    """One Euler step of the TCP along its piecewise-linear path."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"scaling must lie in [0, 1], got {s}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    path = [p.as_tuple() for p in remaining_path]
    new = _advance(pos.as_tuple(), path, s * v_nom * dt)
    return Position3.from_sequence(new), [Position3.from_sequence(p) for p in path]


def simulate_episode(cfg: SceneConfig, seed: int, episode_id: int = 0) -> EpisodeTrace:
    rng = make_rng(seed)
    wp = {k: v.as_tuple() for k, v in cfg.robot_waypoints.items()}
    st = {k: v.as_tuple() for k, v in cfg.human_stations.items()}

    slots = cfg.table_slot_names()
    robot_order = [slots[i] for i in rng.permutation(len(slots))]
    inbound = cfg.inbound_slot_names()
    in_order = [inbound[i] for i in rng.permutation(len(inbound))]
    outbound = cfg.outbound_slot_names()
    out_order = [outbound[i] for i in rng.permutation(len(outbound))][: len(in_order)]

    # Robot itinerary: pick at the conveyor before each place, home at the end.
    itinerary: list[_Vec] = [wp["conveyor"]]
    for name in robot_order:
        itinerary.extend([wp[name], wp["conveyor"]])
    itinerary[-1] = wp["home"]

    # Human leg goals: first inbound box, then alternate outbound/inbound, rest last.
    leg_goals: list[_Vec] = []
    for k, in_name in enumerate(in_order):
        leg_goals.extend([st[in_name], st[out_order[k]]])
    leg_goals.append(st["rest"])

    levels = cfg.safety.levels
    thresholds = cfg.safety.thresholds
    tick = cfg.tick
    v_nom = cfg.robot_nominal_speed
    h_step = cfg.human_speed * tick
    dwell_lo, dwell_hi = cfg.dwell_range
    max_steps = int(round(cfg.max_duration / tick))
    n_clamped = 0

    r_pos = wp["home"]
    r_leg = 0
    r_path: list[_Vec] = [itinerary[0]]
    gr = itinerary[0]

    h_pos = st["rest"]
    h_leg = 0
    h_path, ncl = _plan_path(h_pos, leg_goals[0], rng, cfg.goal_sigma, cfg.midpoint_sigma, cfg.bounds)
    n_clamped += ncl
    gh = h_path[-1]
    dwell_left = 0.0
    human_done = False

    t_l: list[float] = []
    xr_l: list[_Vec] = []
    xh_l: list[_Vec] = []
    gr_l: list[_Vec] = []
    gh_l: list[_Vec] = []
    s_l: list[float] = []

    i = 0
    while r_path or not human_done:
        if i >= max_steps:
            raise SimulationError(
                f"episode {episode_id} exceeded max_duration {cfg.max_duration} s "
                f"({max_steps} ticks) without completing"
            )
        s = levels[bisect_left(thresholds, math.dist(r_pos, h_pos))]
        t_l.append(i * tick)
        xr_l.append(r_pos)
        xh_l.append(h_pos)
        gr_l.append(gr)
        gh_l.append(gh)
        s_l.append(s)

        if r_path:
            if s > 0.0:
                r_pos = _advance(r_pos, r_path, s * v_nom * tick)
            if not r_path:
                r_leg += 1
                if r_leg < len(itinerary):
                    r_path = [itinerary[r_leg]]
                    gr = itinerary[r_leg]

        if not human_done:
            if h_path:
                h_pos = _advance(h_pos, h_path, h_step)
                if not h_path:
                    if h_leg == len(leg_goals) - 1:
                        human_done = True
                    else:
                        dwell_left = rng.uniform(dwell_lo, dwell_hi)
            else:
                dwell_left -= tick
                if dwell_left <= 1e-12:
                    h_leg += 1
                    h_path, ncl = _plan_path(
                        h_pos, leg_goals[h_leg], rng, cfg.goal_sigma, cfg.midpoint_sigma, cfg.bounds
                    )
                    n_clamped += ncl
                    gh = h_path[-1]
        i += 1

    return EpisodeTrace(
        episode_id=episode_id,
        seed=seed,
        t=np.asarray(t_l, dtype=np.float64),
        xr=np.asarray(xr_l, dtype=np.float64),
        xh=np.asarray(xh_l, dtype=np.float64),
        gr=np.asarray(gr_l, dtype=np.float64),
        gh=np.asarray(gh_l, dtype=np.float64),
        s=np.asarray(s_l, dtype=np.float64),
        n_clamped=n_clamped,
    )


def _run_episode(args: tuple[SceneConfig, int, int]) -> EpisodeTrace:
    cfg, seed, episode_id = args
    return simulate_episode(cfg, seed, episode_id)


def run_campaign(
    cfg: SceneConfig,
    n_episodes: int,
    master_seed: int,
    max_workers: int | None = None,
) -> list[EpisodeTrace]:
    """Simulate ``n_episodes`` independent episodes, ordered by index.

    Episode i uses the stream derived from (master_seed, "episode", i),
    so results do not depend on ``max_workers``.
    """
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    jobs = [(cfg, derive_seed(master_seed, "episode", i), i) for i in range(n_episodes)]
    if max_workers is None or max_workers <= 1:
        traces = []
        for job in jobs:
            try:
                traces.append(_run_episode(job))
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(f"episode {job[2]} failed: {exc}") from exc
        return traces
    chunk = max(1, n_episodes // (max_workers * 8))
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_episode, jobs, chunksize=chunk))
