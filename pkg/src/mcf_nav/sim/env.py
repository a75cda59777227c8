"""Unicycle robot with a 180-degree lidar in a static arena."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from ..errors import ArenaConfigError
from .geometry import ray_circle_distances, ray_segment_distances, wrap_angle
from .world import WorldSpec

logger = logging.getLogger("mcf_nav.sim")

N_BINS = 15
OBS_DIM = N_BINS + 4
MAX_RESET_ATTEMPTS = 1000

DoneReason = Literal["goal", "collision", "timeout", "running"]
Point = tuple[float, float]


@dataclass(frozen=True)
class RobotState:
    """Ground-truth pose, last executed action and elapsed step count."""

    x: float
    y: float
    theta: float
    prev_action: tuple[float, float] = (0.0, 0.0)
    steps: int = 0


@dataclass(frozen=True)
class Observation:
    """The 19-value policy input."""

    lidar_bins: tuple[float, ...]
    angle_to_goal: float
    dist_to_goal: float
    prev_v: float
    prev_w: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [*self.lidar_bins, self.angle_to_goal, self.dist_to_goal, self.prev_v, self.prev_w],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Observation":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (OBS_DIM,):
            raise ValueError(f"observation must have {OBS_DIM} values, got {values.shape}")
        return cls(
            lidar_bins=tuple(float(v) for v in values[:N_BINS]),
            angle_to_goal=float(values[N_BINS]),
            dist_to_goal=float(values[N_BINS + 1]),
            prev_v=float(values[N_BINS + 2]),
            prev_w=float(values[N_BINS + 3]),
        )


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: int
    done: bool
    done_reason: DoneReason
    scan: np.ndarray


def beam_bearings(world: WorldSpec) -> np.ndarray:
    """Beam bearings relative to the heading, from -fov/2 to +fov/2."""
    n = world.lidar.beams
    half = world.lidar.fov / 2.0
    return -half + np.arange(n) * (world.lidar.fov / (n - 1))


def goal_bearing(state: RobotState, goal: Point) -> float:
    """Bearing error to the goal in radians, wrapped to (-pi, pi]."""
    return wrap_angle(math.atan2(goal[1] - state.y, goal[0] - state.x) - state.theta)


def goal_distance(state: RobotState, goal: Point) -> float:
    return math.hypot(goal[0] - state.x, goal[1] - state.y)


def lidar_scan(
    state: RobotState, world: WorldSpec, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Range to the nearest surface along each beam, capped at the sensor range.

    Additive Gaussian noise is applied when ``world.lidar.noise_sigma > 0`` and a
    generator is supplied.
    """
    angles = state.theta + beam_bearings(world)
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    origin = np.array([state.x, state.y])
    ranges = np.minimum(
        ray_segment_distances(origin, directions, world.segment_array),
        ray_circle_distances(origin, directions, world.circle_array),
    )
    max_range = world.lidar.max_range
    ranges = np.minimum(ranges, max_range)
    if rng is not None and world.lidar.noise_sigma > 0.0:
        ranges = ranges + rng.normal(0.0, world.lidar.noise_sigma, size=ranges.shape)
        ranges = np.clip(ranges, 0.0, max_range)
    return ranges


def make_observation(
    state: RobotState, goal: Point, scan: np.ndarray, world: WorldSpec
) -> Observation:
    """Min-pool the scan into 15 bins and append goal bearing, distance and last action."""
    scan = np.asarray(scan, dtype=np.float64)
    if scan.shape != (world.lidar.beams,):
        raise ValueError(f"scan must have {world.lidar.beams} ranges, got {scan.shape}")
    bins = scan.reshape(N_BINS, -1).min(axis=1) / world.lidar.max_range
    bins = np.clip(bins, 0.0, 1.0)
    angle = goal_bearing(state, goal) / math.pi
    dist = min(goal_distance(state, goal) / world.diagonal, 1.0)
    return Observation(
        lidar_bins=tuple(float(b) for b in bins),
        angle_to_goal=max(-1.0, min(1.0, angle)),
        dist_to_goal=dist,
        prev_v=float(state.prev_action[0]),
        prev_w=float(state.prev_action[1]),
    )


def _sample_free(world: WorldSpec, region: tuple[float, float, float, float], rng: np.random.Generator, what: str) -> Point:
    for _ in range(MAX_RESET_ATTEMPTS):
        x = float(rng.uniform(region[0], region[2]))
        y = float(rng.uniform(region[1], region[3]))
        if world.is_free(x, y):
            return x, y
    raise ArenaConfigError(
        f"{world.name}: could not sample a free {what} after {MAX_RESET_ATTEMPTS} attempts"
    )


def reset(world: WorldSpec, seed: int) -> tuple[RobotState, Point, Observation]:
    """Sample a start pose and goal, deterministically for ``seed``."""
    rng = np.random.default_rng(seed)
    x, y = _sample_free(world, world.start_region, rng, "start")
    goal = _sample_free(world, world.goal_region, rng, "goal")
    theta = wrap_angle(float(rng.uniform(-math.pi, math.pi)))
    state = RobotState(x=x, y=y, theta=theta)
    obs = make_observation(state, goal, lidar_scan(state, world), world)
    return state, goal, obs


def _terminal_check(state: RobotState, world: WorldSpec, goal: Point) -> tuple[int, DoneReason]:
    if not world.is_free(state.x, state.y):
        return 0, "collision"
    if goal_distance(state, goal) < world.d_threshold:
        return 1, "goal"
    if state.steps >= world.max_steps:
        return 0, "timeout"
    return 0, "running"


def step(
    state: RobotState,
    action: tuple[float, float],
    world: WorldSpec,
    goal: Point,
    rng: np.random.Generator | None = None,
) -> tuple[RobotState, StepResult]:
    """Integrate one unicycle step and evaluate the sparse reward."""
    v_cmd, w_cmd = float(action[0]), float(action[1])
    if not (math.isfinite(v_cmd) and math.isfinite(w_cmd)):
        raise ValueError(f"action must be finite, got {action}")
    v_cmd = min(max(v_cmd, -1.0), 1.0)
    w_cmd = min(max(w_cmd, -1.0), 1.0)

    speed = v_cmd * world.v_max
    new_state = RobotState(
        x=state.x + speed * math.cos(state.theta) * world.dt,
        y=state.y + speed * math.sin(state.theta) * world.dt,
        theta=wrap_angle(state.theta + w_cmd * world.w_max * world.dt),
        prev_action=(v_cmd, w_cmd),
        steps=state.steps + 1,
    )
    reward, reason = _terminal_check(new_state, world, goal)
    scan = lidar_scan(new_state, world, rng)
    obs = make_observation(new_state, goal, scan, world)
    return new_state, StepResult(
        observation=obs, reward=reward, done=reason != "running", done_reason=reason, scan=scan
    )


class NavigationEnv:
    """Single-owner episode runner around :func:`reset` and :func:`step`.

    Tracks the current state, goal, traveled distance and the sensor-noise
    generator, so callers only pass actions.
    """

    def __init__(self, world: WorldSpec, noise_rng: np.random.Generator | None = None) -> None:
        self.world = world
        self.noise_rng = noise_rng
        self.state: RobotState | None = None
        self.goal: Point = (0.0, 0.0)
        self.scan: np.ndarray = np.full(world.lidar.beams, world.lidar.max_range)
        self.obs: Observation | None = None
        self.path_length = 0.0
        self.done = False

    def reset(self, seed: int) -> Observation:
        self.state, self.goal, _ = reset(self.world, seed)
        self.scan = lidar_scan(self.state, self.world, self.noise_rng)
        self.obs = make_observation(self.state, self.goal, self.scan, self.world)
        self.path_length = 0.0
        self.done = False
        return self.obs

    def place(self, state: RobotState, goal: Point) -> Observation:
        """Start an episode from an explicit pose and goal."""
        self.state = replace(state, steps=0)
        self.goal = goal
        self.scan = lidar_scan(self.state, self.world, self.noise_rng)
        self.obs = make_observation(self.state, self.goal, self.scan, self.world)
        self.path_length = 0.0
        self.done = False
        return self.obs

    @property
    def bearing(self) -> float:
        if self.state is None:
            raise RuntimeError("environment has not been reset")
        return goal_bearing(self.state, self.goal)

    def step(self, action: tuple[float, float]) -> StepResult:
        if self.state is None or self.done:
            raise RuntimeError("call reset() before step()")
        previous = self.state
        self.state, result = step(previous, action, self.world, self.goal, self.noise_rng)
        self.path_length += math.hypot(self.state.x - previous.x, self.state.y - previous.y)
        self.scan = result.scan
        self.obs = result.observation
        self.done = result.done
        return result
