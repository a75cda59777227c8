"""Hand-authored arenas, ordered by clutter, plus one held-out arena."""

from pathlib import Path
from typing import Any

from ..errors import ArenaConfigError
from .world import WorldSpec, load_world

_BOUNDS = (0.0, 0.0, 10.0, 5.0)
_START = (0.5, 1.5, 1.0, 3.5)
_GOAL = (9.0, 1.5, 9.5, 3.5)

_ARENAS: dict[str, dict[str, Any]] = {
    "open": {},
    "scattered": {
        "circles": [
            (3.0, 1.6, 0.45),
            (4.5, 3.4, 0.5),
            (6.0, 1.8, 0.4),
            (7.6, 3.3, 0.4),
            (5.2, 0.7, 0.3),
            (3.2, 4.3, 0.3),
        ],
    },
    "wall_gaps": {
        "walls": [
            (3.5, 0.0, 3.5, 3.0),
            (6.5, 2.0, 6.5, 5.0),
        ],
    },
    # U-shaped pocket opening toward the start; the goal sits behind it
    "dead_end": {
        "walls": [
            (6.0, 1.0, 6.0, 4.0),
            (3.5, 1.0, 6.0, 1.0),
            (3.5, 4.0, 6.0, 4.0),
        ],
    },
    "corridor": {
        "walls": [
            (0.0, 1.5, 10.0, 1.5),
            (0.0, 3.5, 10.0, 3.5),
            (4.0, 1.5, 4.0, 2.6),
            (6.0, 2.4, 6.0, 3.5),
        ],
        "start_region": (0.5, 1.9, 1.0, 3.1),
        "goal_region": (9.0, 1.9, 9.5, 3.1),
    },
}

_UNSEEN: dict[str, Any] = {
    "walls": [(5.0, 0.0, 5.0, 2.2)],
    "circles": [
        (3.0, 3.5, 0.5),
        (7.0, 2.5, 0.45),
        (2.5, 1.2, 0.35),
        (8.0, 4.2, 0.3),
    ],
}

TRAINING_ARENAS = tuple(_ARENAS)
UNSEEN_ARENA = "unseen"


def _build(name: str, overrides: dict[str, Any]) -> WorldSpec:
    spec: dict[str, Any] = {
        "name": name,
        "bounds": _BOUNDS,
        "start_region": _START,
        "goal_region": _GOAL,
    }
    spec.update(overrides)
    return WorldSpec(**spec)


def builtin_arenas() -> list[WorldSpec]:
    """The five training arenas: open, scattered, wall_gaps, dead_end, corridor."""
    return [_build(name, overrides) for name, overrides in _ARENAS.items()]


def unseen_arena() -> WorldSpec:
    """Held-out arena used only for generalization runs."""
    return _build(UNSEEN_ARENA, _UNSEEN)


def arena_names() -> list[str]:
    return [*TRAINING_ARENAS, UNSEEN_ARENA]


def arena_by_name(name: str) -> WorldSpec:
    if name == UNSEEN_ARENA:
        return unseen_arena()
    if name in _ARENAS:
        return _build(name, _ARENAS[name])
    raise ArenaConfigError(f"Unknown arena '{name}'; choose from {', '.join(arena_names())}")


def resolve_arena(ref: str) -> WorldSpec:
    """Look up a built-in arena by name, or load one from a JSON path."""
    if ref in arena_names():
        return arena_by_name(ref)
    if ref.endswith(".json") or Path(ref).exists():
        return load_world(Path(ref))
    return arena_by_name(ref)
