"""SPL and actuation-time evaluation against an A* shortest-path reference.

``report.json`` schema::

    {"tool", "version", "config_hash",
     "rows": [{"method", "env", "SPL", "actuation_steps", "successes",
               "episodes"}],
     "mean_path_length": {method: {env: metres}},
     "episodes": [{"method", "env", "arena", "seed", "success", "traveled",
                   "shortest", "steps", "done_reason"}],
     "skipped": [{"env", "arena", "seed", "reason"}]}
"""

import heapq
import logging
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import seeding
from .config import ApfConfig, DeployConfig, Method, RunConfig, config_hash
from .deploy import LEARNED_CONTROLLERS, EnsembleBundle, run_episode
from .errors import BundleError, ParameterError, UndefinedMetricError, UnreachableError
from .manifest import artifact_header, write_json
from .sim import NavigationEnv, WorldSpec, resolve_arena

logger = logging.getLogger("mcf_nav.evalkit")

REPORT_COLUMNS = ("method", "env", "SPL", "actuation_steps", "successes", "episodes")
SQRT2 = math.sqrt(2.0)

# (di, dj, cost) for the 8-connected neighbourhood
_MOVES = (
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
)


@dataclass(frozen=True)
class GridPlan:
    resolution: float
    occupancy: np.ndarray
    path: list[tuple[int, int]]
    path_length: float


def occupancy_grid(world: WorldSpec, resolution: float) -> np.ndarray:
    """Boolean (nx, ny) grid, True where a disc robot centred on the cell would collide."""
    x0, y0, x1, y1 = world.bounds
    nx = max(1, math.ceil((x1 - x0) * resolution))
    ny = max(1, math.ceil((y1 - y0) * resolution))
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    xs = x0 + (ii + 0.5) / resolution
    ys = y0 + (jj + 0.5) / resolution
    centers = np.column_stack([xs.ravel(), ys.ravel()])
    blocked = world.clearance(centers) < world.robot_radius
    return blocked.reshape(nx, ny)


def world_to_cell(world: WorldSpec, resolution: float, point: tuple[float, float]) -> tuple[int, int]:
    nx = max(1, math.ceil((world.bounds[2] - world.bounds[0]) * resolution))
    ny = max(1, math.ceil((world.bounds[3] - world.bounds[1]) * resolution))
    i = int((point[0] - world.bounds[0]) * resolution)
    j = int((point[1] - world.bounds[1]) * resolution)
    return min(max(i, 0), nx - 1), min(max(j, 0), ny - 1)


def grid_neighbors(occupancy: np.ndarray, cell: tuple[int, int]) -> Iterator[tuple[int, int, float]]:
    """Free 8-connected neighbours; diagonals may not cut blocked corners."""
    nx, ny = occupancy.shape
    i, j = cell
    for di, dj, cost in _MOVES:
        ni, nj = i + di, j + dj
        if not (0 <= ni < nx and 0 <= nj < ny) or occupancy[ni, nj]:
            continue
        if di and dj and (occupancy[i + di, j] or occupancy[i, j + dj]):
            continue
        yield ni, nj, cost


def _octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) - min(dx, dy) + SQRT2 * min(dx, dy)


def astar_on_grid(
    occupancy: np.ndarray, start: tuple[int, int], goal: tuple[int, int]
) -> tuple[list[tuple[int, int]], float]:
    """Shortest 8-connected path in cell units; ties go to the lowest cell index."""
    if occupancy[start] or occupancy[goal]:
        raise UnreachableError(f"start {start} or goal {goal} lies in an inflated obstacle")
    ny = occupancy.shape[1]
    g: dict[tuple[int, int], float] = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    closed: set[tuple[int, int]] = set()
    heap = [(_octile(start, goal), start[0] * ny + start[1], start)]
    while heap:
        _, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in parent:
                cell = parent[cell]
                path.append(cell)
            return path[::-1], g[goal]
        closed.add(cell)
        for ni, nj, cost in grid_neighbors(occupancy, cell):
            nxt = (ni, nj)
            candidate = g[cell] + cost
            if nxt in closed or candidate >= g.get(nxt, math.inf):
                continue
            g[nxt] = candidate
            parent[nxt] = cell
            heapq.heappush(heap, (candidate + _octile(nxt, goal), ni * ny + nj, nxt))
    raise UnreachableError(f"no grid path from {start} to {goal}")


def astar_shortest(
    world: WorldSpec,
    start: tuple[float, float],
    goal: tuple[float, float],
    resolution: float = 20.0,
    occupancy: np.ndarray | None = None,
) -> GridPlan:
    """Shortest collision-free path length in metres on the inflated occupancy grid."""
    grid = occupancy if occupancy is not None else occupancy_grid(world, resolution)
    path, cost = astar_on_grid(
        grid, world_to_cell(world, resolution, start), world_to_cell(world, resolution, goal)
    )
    return GridPlan(resolution=resolution, occupancy=grid, path=path, path_length=cost / resolution)


@dataclass(frozen=True)
class EpisodeOutcome:
    success: bool
    traveled: float
    shortest: float


def spl(episodes: Sequence[EpisodeOutcome]) -> float:
    """Success weighted by normalised inverse path length."""
    if not episodes:
        raise UndefinedMetricError("SPL is undefined for an empty episode list")
    total = 0.0
    for ep in episodes:
        if ep.shortest <= 0.0 or ep.traveled < 0.0:
            raise ParameterError(
                f"need shortest > 0 and traveled >= 0, got {ep.shortest}, {ep.traveled}"
            )
        if ep.success:
            total += ep.shortest / max(ep.shortest, ep.traveled)
    return total / len(episodes)


@dataclass(frozen=True)
class EpisodeResult:
    method: str
    env: str
    arena: str
    seed: int
    success: bool
    traveled: float
    shortest: float
    steps: int
    done_reason: str


@dataclass
class EvalReport:
    cfg_hash: str
    episodes: list[EpisodeResult] = field(default_factory=list)
    skipped: list[dict[str, Any]] = field(default_factory=list)

    def rows(self) -> list[dict[str, Any]]:
        groups: dict[tuple[str, str], list[EpisodeResult]] = {}
        for ep in self.episodes:
            groups.setdefault((ep.method, ep.env), []).append(ep)
        rows = []
        for (method, env), eps in groups.items():
            rows.append(
                {
                    "method": method,
                    "env": env,
                    "SPL": spl([EpisodeOutcome(e.success, e.traveled, e.shortest) for e in eps]),
                    "actuation_steps": float(np.mean([e.steps for e in eps])),
                    "successes": sum(e.success for e in eps),
                    "episodes": len(eps),
                }
            )
        return rows

    def mean_path_lengths(self) -> dict[str, dict[str, float]]:
        """Mean traveled distance in metres, keyed by method then env."""
        sums: dict[str, dict[str, list[float]]] = {}
        for ep in self.episodes:
            sums.setdefault(ep.method, {}).setdefault(ep.env, []).append(ep.traveled)
        return {
            method: {env: float(np.mean(values)) for env, values in envs.items()}
            for method, envs in sums.items()
        }

    def to_json(self) -> dict[str, Any]:
        return {
            **artifact_header(self.cfg_hash),
            "rows": self.rows(),
            "mean_path_length": self.mean_path_lengths(),
            "episodes": [asdict(ep) for ep in self.episodes],
            "skipped": self.skipped,
        }

    def to_markdown(self) -> str:
        """Method rows with one SPL / actuation column pair per environment group."""
        rows = self.rows()
        envs = list(dict.fromkeys(r["env"] for r in rows))
        methods = list(dict.fromkeys(r["method"] for r in rows))
        by_key = {(r["method"], r["env"]): r for r in rows}

        header = "| Method |" + "".join(f" {env} SPL | {env} Actuation (Steps) |" for env in envs)
        rule = "|---|" + "---:|---:|" * len(envs)
        lines = ["# Evaluation", "", header, rule]
        for method in methods:
            cells = []
            for env in envs:
                row = by_key.get((method, env))
                cells.append(
                    f" {row['SPL']:.3f} | {row['actuation_steps']:.1f} |" if row else " - | - |"
                )
            lines.append(f"| {method} |" + "".join(cells))
        lines.append("")
        for env in envs:
            n = max((by_key[(m, env)]["episodes"] for m in methods if (m, env) in by_key), default=0)
            lines.append(f"- {env}: {n} episodes per method")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: Path) -> None:
        write_json(out_dir / "report.json", self.to_json())
        md_path = out_dir / "report.md"
        md_path.parent.mkdir(parents=True, exist_ok=True)
        md_path.write_text(self.to_markdown(), encoding="utf-8")


def episode_seeds(seeds: Sequence[int], episodes: int) -> list[int]:
    """Evaluation start/goal seeds shared by every method."""
    result: list[int] = []
    for seed in seeds:
        rng = seeding.stream(seed, seeding.EVAL)
        result.extend(int(x) for x in rng.integers(0, 2**31 - 1, size=episodes))
    return result


def evaluate_methods(
    methods: Sequence[Method],
    env_groups: Mapping[str, Sequence[str]],
    episodes: int,
    seeds: Sequence[int],
    apf: ApfConfig,
    deploy: DeployConfig,
    bundle: EnsembleBundle | None = None,
    resolution: float = 20.0,
    cfg_hash: str = "",
) -> EvalReport:
    """Run every method on the same start/goal pairs of each environment group.

    ``env_groups`` maps a report label (``train``, ``unseen``) to arena names;
    episodes are spread over a group's arenas round-robin.
    """
    needs_bundle = sorted(set(methods) & LEARNED_CONTROLLERS)
    if needs_bundle and bundle is None:
        raise BundleError(f"methods {', '.join(needs_bundle)} need a trained ensemble bundle")

    report = EvalReport(cfg_hash)
    ep_seeds = episode_seeds(seeds, episodes)
    for env_label, arena_names in env_groups.items():
        worlds = [resolve_arena(name) for name in arena_names]
        grids = {w.name: occupancy_grid(w, resolution) for w in worlds}
        for k, ep_seed in enumerate(ep_seeds):
            world = worlds[k % len(worlds)]
            env = NavigationEnv(world)
            env.reset(ep_seed)
            assert env.state is not None
            try:
                plan = astar_shortest(
                    world, (env.state.x, env.state.y), env.goal, resolution, grids[world.name]
                )
            except UnreachableError as e:
                logger.warning("Skipping %s seed %d: %s", world.name, ep_seed, e)
                report.skipped.append(
                    {"env": env_label, "arena": world.name, "seed": ep_seed, "reason": str(e)}
                )
                continue
            for method in methods:
                record = run_episode(method, world, ep_seed, apf, deploy, bundle)
                report.episodes.append(
                    EpisodeResult(
                        method=method,
                        env=env_label,
                        arena=world.name,
                        seed=ep_seed,
                        success=record.success,
                        traveled=record.path_length,
                        shortest=plan.path_length,
                        steps=record.steps,
                        done_reason=record.done_reason,
                    )
                )
        logger.info("Evaluated %d methods on %s (%s)", len(methods), env_label, ", ".join(arena_names))
    return report


def evaluate_config(
    cfg: RunConfig,
    env_groups: Mapping[str, Sequence[str]],
    bundle: EnsembleBundle | None = None,
) -> EvalReport:
    return evaluate_methods(
        cfg.eval.methods,
        env_groups,
        cfg.eval.episodes,
        cfg.eval.seeds,
        cfg.apf,
        cfg.deploy,
        bundle,
        cfg.eval.grid_resolution,
        config_hash(cfg),
    )


def _rect_center(rect: tuple[float, float, float, float]) -> tuple[float, float]:
    return (rect[0] + rect[2]) / 2.0, (rect[1] + rect[3]) / 2.0


def check_arena(
    world: WorldSpec,
    resolution: float = 20.0,
    prior_rollouts: int = 0,
    apf: ApfConfig | None = None,
) -> dict[str, Any]:
    """Reachability of goal from start region, and optionally the prior's SPL."""
    plan = astar_shortest(
        world, _rect_center(world.start_region), _rect_center(world.goal_region), resolution
    )
    result: dict[str, Any] = {
        "arena": world.name,
        "reachable": True,
        "shortest_path": plan.path_length,
    }
    if prior_rollouts > 0:
        apf = apf or ApfConfig()
        grid = plan.occupancy
        outcomes = []
        for ep_seed in range(prior_rollouts):
            record = run_episode("prior", world, ep_seed, apf, DeployConfig())
            start = (record.start[0], record.start[1])
            try:
                shortest = astar_shortest(world, start, record.goal, resolution, grid).path_length
            except UnreachableError:
                continue
            outcomes.append(EpisodeOutcome(record.success, record.path_length, shortest))
        result["prior_spl"] = spl(outcomes) if outcomes else None
        result["prior_rollouts"] = len(outcomes)
    return result
