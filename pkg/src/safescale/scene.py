"""Workcell layout and simulation parameters.

The cell is a box-transfer scenario: the robot cycles between a conveyor
pick point and two tables of place slots, while the operator carries
boxes from an inbound area to two outbound areas placed close to the
robot tables, so safety slowdowns actually occur.  Waypoints and stations
are named; groups are selected by name prefix (``table_``, ``inbound_``,
``out_a_`` / ``out_b_``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from safescale.safety import Position3, StaircaseSafetyFunction


class SceneError(ValueError):
    """Raised when a scene configuration violates its invariants."""


@dataclass(frozen=True)
class WorkspaceBounds:
    """Axis-aligned bounds used to clamp perturbed human waypoints."""

    lo: Position3
    hi: Position3

    def __post_init__(self) -> None:
        if not (self.lo.x < self.hi.x and self.lo.y < self.hi.y and self.lo.z < self.hi.z):
            raise SceneError("workspace bounds must have lo < hi on every axis")

    def clamp(self, p: tuple[float, float, float]) -> tuple[tuple[float, float, float], bool]:
        x = min(max(p[0], self.lo.x), self.hi.x)
        y = min(max(p[1], self.lo.y), self.hi.y)
        z = min(max(p[2], self.lo.z), self.hi.z)
        clamped = (x, y, z) != p
        return (x, y, z), clamped

    def contains(self, p: Position3) -> bool:
        return (
            self.lo.x <= p.x <= self.hi.x
            and self.lo.y <= p.y <= self.hi.y
            and self.lo.z <= p.z <= self.hi.z
        )


@dataclass(frozen=True)
class SceneConfig:
    robot_waypoints: dict[str, Position3]
    human_stations: dict[str, Position3]
    safety: StaircaseSafetyFunction
    bounds: WorkspaceBounds
    robot_nominal_speed: float = 1.0
    human_speed: float = 0.5
    goal_sigma: float = 0.05
    midpoint_sigma: float = 0.25
    dwell_range: tuple[float, float] = (2.0, 4.0)
    tick: float = 0.1
    max_duration: float = 600.0

    def __post_init__(self) -> None:
        if self.tick <= 0:
            raise SceneError(f"tick must be positive, got {self.tick}")
        if self.robot_nominal_speed <= 0 or self.human_speed <= 0:
            raise SceneError("speeds must be positive")
        if self.goal_sigma < 0 or self.midpoint_sigma < 0:
            raise SceneError("sigmas must be non-negative")
        lo, hi = self.dwell_range
        if lo < 0 or hi < lo:
            raise SceneError(f"dwell range must satisfy 0 <= min <= max, got {self.dwell_range}")
        if self.max_duration <= 0:
            raise SceneError("max_duration must be positive")
        for name in ("home", "conveyor"):
            if name not in self.robot_waypoints:
                raise SceneError(f"robot_waypoints must contain {name!r}")
        if not self.table_slot_names():
            raise SceneError("robot_waypoints must contain at least one 'table_' slot")
        if "rest" not in self.human_stations:
            raise SceneError("human_stations must contain 'rest'")
        if not self.inbound_slot_names():
            raise SceneError("human_stations must contain at least one 'inbound_' slot")
        if not self.outbound_slot_names():
            raise SceneError("human_stations must contain at least one 'out_' slot")
        if len(self.outbound_slot_names()) < len(self.inbound_slot_names()):
            raise SceneError("outbound slots must hold at least as many boxes as the inbound area")
        for name, p in {**self.robot_waypoints, **self.human_stations}.items():
            if not self.bounds.contains(p):
                raise SceneError(f"waypoint {name!r} at {p.as_tuple()} lies outside the workspace bounds")

    def table_slot_names(self) -> list[str]:
        return sorted(n for n in self.robot_waypoints if n.startswith("table_"))

    def inbound_slot_names(self) -> list[str]:
        return sorted(n for n in self.human_stations if n.startswith("inbound_"))

    def outbound_slot_names(self) -> list[str]:
        return sorted(n for n in self.human_stations if n.startswith("out_"))

    def to_dict(self) -> dict:
        return {
            "robot_waypoints": {k: list(v.as_tuple()) for k, v in self.robot_waypoints.items()},
            "human_stations": {k: list(v.as_tuple()) for k, v in self.human_stations.items()},
            "safety": self.safety.to_dict(),
            "workspace_bounds": {
                "min": list(self.bounds.lo.as_tuple()),
                "max": list(self.bounds.hi.as_tuple()),
            },
            "robot_nominal_speed": self.robot_nominal_speed,
            "human_speed": self.human_speed,
            "goal_sigma": self.goal_sigma,
            "midpoint_sigma": self.midpoint_sigma,
            "dwell_range": list(self.dwell_range),
            "tick": self.tick,
            "max_duration": self.max_duration,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        try:
            wb = data["workspace_bounds"]
            return cls(
                robot_waypoints={k: Position3.from_sequence(v) for k, v in data["robot_waypoints"].items()},
                human_stations={k: Position3.from_sequence(v) for k, v in data["human_stations"].items()},
                safety=StaircaseSafetyFunction.from_dict(data["safety"]),
                bounds=WorkspaceBounds(Position3.from_sequence(wb["min"]), Position3.from_sequence(wb["max"])),
                robot_nominal_speed=float(data.get("robot_nominal_speed", 1.0)),
                human_speed=float(data.get("human_speed", 0.5)),
                goal_sigma=float(data.get("goal_sigma", 0.05)),
                midpoint_sigma=float(data.get("midpoint_sigma", 0.25)),
                dwell_range=tuple(float(v) for v in data.get("dwell_range", (2.0, 4.0))),
                tick=float(data.get("tick", 0.1)),
                max_duration=float(data.get("max_duration", 600.0)),
            )
        except KeyError as exc:
            raise SceneError(f"scene config is missing required key {exc}") from exc


def default_scene() -> SceneConfig:
    """The stock cell: conveyor + 2x5 table slots, 6 inbound and 2x3 outbound box slots."""
    robot = {
        "home": Position3(0.0, 0.0, 0.9),
        "conveyor": Position3(0.0, -0.9, 0.6),
    }
    for k in range(5):
        y = 0.45 + 0.15 * k
        robot[f"table_a_{k + 1}"] = Position3(-0.85, y, 0.55)
        robot[f"table_b_{k + 1}"] = Position3(0.85, y, 0.55)
    human = {"rest": Position3(3.1, -0.5, 1.0)}
    for k in range(6):
        human[f"inbound_{k + 1}"] = Position3(2.7, -1.25 + 0.3 * k, 1.0)
    for k in range(3):
        y = 1.55 + 0.25 * k
        human[f"out_a_{k + 1}"] = Position3(-1.35, y, 1.0)
        human[f"out_b_{k + 1}"] = Position3(1.35, y, 1.0)
    return SceneConfig(
        robot_waypoints=robot,
        human_stations=human,
        safety=StaircaseSafetyFunction(
            levels=(0.0, 0.25, 0.5, 0.75, 1.0),
            thresholds=(1.2, 1.5, 1.9, 2.4),
        ),
        bounds=WorkspaceBounds(Position3(-2.2, -2.2, 0.0), Position3(3.6, 2.6, 2.2)),
    )
