"""2-D laser-scan navigation simulator."""

from .arenas import arena_by_name, arena_names, builtin_arenas, resolve_arena, unseen_arena
from .env import (
    N_BINS,
    OBS_DIM,
    NavigationEnv,
    Observation,
    RobotState,
    StepResult,
    goal_bearing,
    lidar_scan,
    make_observation,
    reset,
    step,
)
from .world import LidarSpec, WorldSpec, load_world, parse_world

__all__ = [
    "N_BINS",
    "OBS_DIM",
    "LidarSpec",
    "NavigationEnv",
    "Observation",
    "RobotState",
    "StepResult",
    "WorldSpec",
    "arena_by_name",
    "arena_names",
    "builtin_arenas",
    "goal_bearing",
    "lidar_scan",
    "load_world",
    "make_observation",
    "parse_world",
    "reset",
    "resolve_arena",
    "step",
    "unseen_arena",
]
