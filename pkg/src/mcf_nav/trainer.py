"""Guided-exploration training loop, comparison modes and multi-seed suites.

Every environment step fuses the policy's Gaussian with the prior's fixed-width
exploration Gaussian under the gate ``alpha``, samples the executed action from
the composite, stores it off-policy and runs SAC updates. Modes differ only in
how ``alpha`` is chosen and how the replay buffer is seeded:

    mcf          reverse-logistic alpha(t), 1 -> 0
    no_gating    alpha fixed at 0.5
    e2e          alpha fixed at 0 (policy only)
    demo_buffer  alpha fixed at 0, buffer pre-filled with prior demonstrations
                 and sampled 50/50
"""

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import seeding
from .config import RunConfig, TrainMode, config_hash
from .errors import TrainingDivergenceError
from .gaussfuse import DiagGaussian2, GatingSchedule, alpha_at, fuse_gated, sample
from .manifest import artifact_header, write_csv, write_json, write_provenance
from .prior_apf import apf_action, prior_distribution_train
from .sac import ReplayBuffer, SacAgent, fill_demos
from .sim import NavigationEnv, Observation, WorldSpec, arena_by_name
from .sim.geometry import point_segment_distances

logger = logging.getLogger("mcf_nav.trainer")

CURVE_HEADER = ("step", "episode", "mean_path_len", "min", "max", "success_rate", "alpha")
HEATMAP_HEADER = ("i", "j", "count")
SNAPSHOT_HEADER = (
    "step",
    "alpha",
    "policy_mean_v",
    "policy_var_v",
    "policy_mean_w",
    "policy_var_w",
    "prior_mean_v",
    "prior_var_v",
    "prior_mean_w",
    "prior_var_w",
    "fused_mean_v",
    "fused_var_v",
    "fused_mean_w",
    "fused_var_w",
)
AGGREGATE_HEADER = ("mode", "step", "mean", "band_low", "band_high", "std", "success_rate", "n_seeds")
PRIOR_PATH_HEADER = ("arena", "seed", "step", "x", "y")
NEAR_PATH_HEADER = ("mode", "arena", "seed", "radius", "fraction")
NEAR_PATH_RADII = (0.5, 1.0)

ActFn = Callable[[Observation, np.ndarray, float], tuple[float, float]]


def failure_path_length(world: WorldSpec) -> float:
    """Path length recorded for failed episodes: the distance coverable before timeout."""
    return world.max_steps * world.v_max * world.dt


def alpha_for_step(
    mode: TrainMode, schedule: GatingSchedule, step: int, fixed_alpha: float | None = None
) -> float:
    """Gate value used at ``step`` by each training mode."""
    if fixed_alpha is not None:
        return fixed_alpha
    if mode == "mcf":
        return alpha_at(schedule, step)
    if mode == "no_gating":
        return 0.5
    return 0.0


@dataclass(frozen=True)
class CurvePoint:
    step: int
    episode: int
    mean_path_length: float
    min_path_length: float
    max_path_length: float
    success_rate: float
    alpha: float
    path_lengths: tuple[float, ...] = ()

    def row(self) -> tuple[Any, ...]:
        return (
            self.step,
            self.episode,
            self.mean_path_length,
            self.min_path_length,
            self.max_path_length,
            self.success_rate,
            self.alpha,
        )


@dataclass
class LearningCurve:
    points: list[CurvePoint] = field(default_factory=list)

    def append(self, point: CurvePoint) -> None:
        if self.points and point.step < self.points[-1].step:
            raise ValueError("curve steps must be non-decreasing")
        self.points.append(point)

    def value_at(self, step: int) -> CurvePoint | None:
        """Latest evaluation at or before ``step``."""
        latest = None
        for point in self.points:
            if point.step > step:
                break
            latest = point
        return latest


@dataclass
class VisitationGrid:
    """Counts of robot positions on a regular grid over the arena bounds."""

    bounds: tuple[float, float, float, float]
    resolution: float
    counts: np.ndarray

    @classmethod
    def for_world(cls, world: WorldSpec, resolution: float) -> "VisitationGrid":
        x0, y0, x1, y1 = world.bounds
        shape = (max(1, math.ceil((x1 - x0) * resolution)), max(1, math.ceil((y1 - y0) * resolution)))
        return cls(world.bounds, resolution, np.zeros(shape, dtype=np.int64))

    def cell(self, x: float, y: float) -> tuple[int, int]:
        i = int((x - self.bounds[0]) * self.resolution)
        j = int((y - self.bounds[1]) * self.resolution)
        return (
            min(max(i, 0), self.counts.shape[0] - 1),
            min(max(j, 0), self.counts.shape[1] - 1),
        )

    def add(self, x: float, y: float) -> None:
        i, j = self.cell(x, y)
        self.counts[i, j] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cell_centers(self) -> np.ndarray:
        ii, jj = np.meshgrid(
            np.arange(self.counts.shape[0]), np.arange(self.counts.shape[1]), indexing="ij"
        )
        xs = self.bounds[0] + (ii + 0.5) / self.resolution
        ys = self.bounds[1] + (jj + 0.5) / self.resolution
        return np.column_stack([xs.ravel(), ys.ravel()])

    def fraction_near_path(self, path: Sequence[tuple[float, float]], radius: float) -> float:
        """Share of visits whose cell centre lies within ``radius`` of a polyline."""
        if self.total == 0 or not path:
            return 0.0
        pts = np.asarray(path, dtype=np.float64)
        if len(pts) == 1:
            pts = np.vstack([pts, pts])
        segments = np.hstack([pts[:-1], pts[1:]])
        near = point_segment_distances(self.cell_centers(), segments) <= radius
        return float(self.counts.ravel()[near].sum() / self.total)

    def fraction_near_rect(self, rect: tuple[float, float, float, float], radius: float) -> float:
        """Share of visits within ``radius`` of an axis-aligned rectangle."""
        if self.total == 0:
            return 0.0
        centers = self.cell_centers()
        dx = np.maximum(np.maximum(rect[0] - centers[:, 0], centers[:, 0] - rect[2]), 0.0)
        dy = np.maximum(np.maximum(rect[1] - centers[:, 1], centers[:, 1] - rect[3]), 0.0)
        near = np.hypot(dx, dy) <= radius
        return float(self.counts.ravel()[near].sum() / self.total)

    def rows(self) -> list[tuple[int, int, int]]:
        return [
            (int(i), int(j), int(self.counts[i, j]))
            for i in range(self.counts.shape[0])
            for j in range(self.counts.shape[1])
        ]


@dataclass(frozen=True)
class Snapshot:
    step: int
    alpha: float
    policy: DiagGaussian2
    prior: DiagGaussian2
    fused: DiagGaussian2

    def row(self) -> tuple[float, ...]:
        return (
            self.step,
            self.alpha,
            *self.policy.to_row(),
            *self.prior.to_row(),
            *self.fused.to_row(),
        )


@dataclass(frozen=True)
class ExplorationRecord:
    step: int
    alpha: float
    prior: DiagGaussian2
    fused: DiagGaussian2
    action: tuple[float, float]
    x: float
    y: float


@dataclass
class TrainResult:
    mode: TrainMode
    seed: int
    agent: SacAgent
    curve: LearningCurve
    alpha_trace: list[float]
    snapshots: list[Snapshot]
    exploration: list[ExplorationRecord]
    heatmaps: dict[str, VisitationGrid]
    demo_count: int
    steps: int
    episodes: int


def run_policy_episodes(
    act: ActFn, worlds: Sequence[WorldSpec], episode_seeds: Sequence[int]
) -> tuple[list[float], list[bool]]:
    """Roll out a deterministic controller once per seed; returns path lengths and successes.

    Failed episodes record :func:`failure_path_length`.
    """
    lengths: list[float] = []
    successes: list[bool] = []
    for k, ep_seed in enumerate(episode_seeds):
        world = worlds[k % len(worlds)]
        env = NavigationEnv(world)
        obs = env.reset(ep_seed)
        reason = "running"
        while not env.done:
            result = env.step(act(obs, env.scan, env.bearing))
            obs = result.observation
            reason = result.done_reason
        success = reason == "goal"
        successes.append(success)
        lengths.append(env.path_length if success else failure_path_length(world))
    return lengths, successes


def curve_point(
    step: int, episode: int, alpha: float, lengths: Sequence[float], successes: Sequence[bool]
) -> CurvePoint:
    return CurvePoint(
        step=step,
        episode=episode,
        mean_path_length=float(np.mean(lengths)),
        min_path_length=float(np.min(lengths)),
        max_path_length=float(np.max(lengths)),
        success_rate=float(np.mean(successes)),
        alpha=alpha,
        path_lengths=tuple(float(x) for x in lengths),
    )


def evaluation_seeds(seed: int, count: int) -> list[int]:
    """Held-out start/goal seeds for periodic evaluation, shared by every mode."""
    rng = seeding.stream(seed, seeding.EVAL)
    return [int(x) for x in rng.integers(2**30, 2**31 - 1, size=count)]


def train_one(cfg: RunConfig, mode: TrainMode, seed: int) -> TrainResult:
    """Train one SAC agent with the exploration rule of ``mode``.

    Deterministic for a given configuration and seed.
    """
    tcfg = cfg.train
    schedule = cfg.gating.schedule(tcfg.total_steps)
    worlds = [arena_by_name(name) for name in tcfg.arenas]

    agent = SacAgent(cfg.sac, seeding.stream(seed, seeding.POLICY_INIT))
    buffer = ReplayBuffer(cfg.sac.buffer_capacity)
    env_rng = seeding.stream(seed, seeding.ENV)
    explore_rng = seeding.stream(seed, seeding.EXPLORE)
    update_rng = seeding.stream(seed, seeding.UPDATE)
    eval_seeds = evaluation_seeds(seed, tcfg.eval_episodes)

    demo_count = 0
    if mode == "demo_buffer":
        demo_count = fill_demos(buffer, cfg.apf, worlds, tcfg.demo_episodes, seed)

    # one grid per arena; episodes cycle through the arenas
    heatmaps = (
        {world.name: VisitationGrid.for_world(world, tcfg.heatmap_resolution) for world in worlds}
        if tcfg.heatmap_episodes > 0
        else {}
    )
    curve = LearningCurve()
    alpha_trace: list[float] = []
    snapshots: list[Snapshot] = []
    exploration: list[ExplorationRecord] = []

    def evaluate_agent(obs: Observation, scan: np.ndarray, bearing: float) -> tuple[float, float]:
        return agent.deterministic_action(obs.as_array())

    episode = 0
    env = NavigationEnv(worlds[0])

    def start_episode() -> None:
        nonlocal env
        env = NavigationEnv(worlds[episode % len(worlds)])
        ep_seed = tcfg.fixed_episode_seed
        draw = int(env_rng.integers(0, 2**30))
        env.reset(ep_seed if ep_seed is not None else draw)
        if episode < tcfg.heatmap_episodes and env.state is not None and env.world.name in heatmaps:
            heatmaps[env.world.name].add(env.state.x, env.state.y)

    logger.info("Training mode=%s seed=%d for %d steps", mode, seed, tcfg.total_steps)
    start_episode()
    steps_done = 0
    for t in range(tcfg.total_steps):
        assert env.obs is not None and env.state is not None
        obs_arr = env.obs.as_array()
        policy = agent.policy_distribution(obs_arr)
        prior = prior_distribution_train(env.scan, env.bearing, cfg.apf)
        alpha = alpha_for_step(mode, schedule, t, cfg.gating.fixed_alpha)
        fused = fuse_gated(policy, prior, alpha)
        action = sample(fused, explore_rng)

        result = env.step(action)
        terminal = result.done_reason in ("goal", "collision")
        buffer.add(obs_arr, action, result.reward, result.observation.as_array(), terminal)
        alpha_trace.append(alpha)
        steps_done = t + 1

        if t % tcfg.snapshot_every == 0:
            snapshots.append(Snapshot(t, alpha, policy, prior, fused))
        if tcfg.record_exploration:
            exploration.append(
                ExplorationRecord(t, alpha, prior, fused, action, env.state.x, env.state.y)
            )
        if episode < tcfg.heatmap_episodes and env.world.name in heatmaps:
            heatmaps[env.world.name].add(env.state.x, env.state.y)

        if (
            steps_done >= cfg.sac.update_after
            and len(buffer) >= cfg.sac.batch_size
            and steps_done % cfg.sac.update_every == 0
        ):
            try:
                for _ in range(cfg.sac.update_every):
                    agent.update(buffer, update_rng, stratified=mode == "demo_buffer")
            except TrainingDivergenceError as e:
                raise TrainingDivergenceError(f"{mode} seed {seed}: {e}", step=steps_done) from e

        if env.done:
            episode += 1
            logger.debug(
                "Episode %d ended (%s) after %d steps, alpha=%.3f",
                episode,
                result.done_reason,
                env.state.steps,
                alpha,
            )
            if episode % tcfg.eval_every_episodes == 0:
                lengths, successes = run_policy_episodes(evaluate_agent, worlds, eval_seeds)
                point = curve_point(steps_done, episode, alpha, lengths, successes)
                curve.append(point)
                logger.info(
                    "[%s/%d] step %d episode %d: mean path %.2f m, success %.0f%%",
                    mode,
                    seed,
                    steps_done,
                    episode,
                    point.mean_path_length,
                    100.0 * point.success_rate,
                )
            if tcfg.max_episodes is not None and episode >= tcfg.max_episodes:
                break
            start_episode()

    return TrainResult(
        mode=mode,
        seed=seed,
        agent=agent,
        curve=curve,
        alpha_trace=alpha_trace,
        snapshots=snapshots,
        exploration=exploration,
        heatmaps=heatmaps,
        demo_count=demo_count,
        steps=steps_done,
        episodes=episode,
    )


def visitation_from_rollouts(
    act: ActFn, world: WorldSpec, episodes: int, seed: int, resolution: float
) -> VisitationGrid:
    """Visitation grid of a fixed controller over ``episodes`` runs from the same start."""
    grid = VisitationGrid.for_world(world, resolution)
    for _ in range(episodes):
        env = NavigationEnv(world)
        obs = env.reset(seed)
        assert env.state is not None
        grid.add(env.state.x, env.state.y)
        while not env.done:
            result = env.step(act(obs, env.scan, env.bearing))
            obs = result.observation
            grid.add(env.state.x, env.state.y)
    return grid


def exploration_heatmap(
    cfg: RunConfig, mode: TrainMode, arena: str, episodes: int, seed: int
) -> VisitationGrid:
    """Early-training state coverage of ``mode`` with a fixed start and goal."""
    if episodes == 0:
        return VisitationGrid.for_world(arena_by_name(arena), cfg.train.heatmap_resolution)
    train = cfg.train.model_copy(
        update={
            "arenas": [arena],
            "max_episodes": episodes,
            "heatmap_episodes": episodes,
            "fixed_episode_seed": seed,
        }
    )
    result = train_one(cfg.model_copy(update={"train": train}), mode, seed)
    return result.heatmaps[arena_by_name(arena).name]


def prior_path(world: WorldSpec, episode_seed: int, cfg: RunConfig) -> list[tuple[float, float]]:
    """Positions visited by the deterministic prior from the episode's start."""
    env = NavigationEnv(world)
    env.reset(episode_seed)
    assert env.state is not None
    path = [(env.state.x, env.state.y)]
    while not env.done:
        action = apf_action(env.scan, env.bearing, cfg.apf)
        env.step((action.v, action.w))
        path.append((env.state.x, env.state.y))
    return path


@dataclass
class ExplorationStudy:
    """Early-training coverage of each mode next to the prior's path, same start and goal."""

    arena: str
    seed: int
    path: list[tuple[float, float]]
    grids: dict[str, VisitationGrid]

    def path_rows(self) -> list[tuple[Any, ...]]:
        return [(self.arena, self.seed, k, x, y) for k, (x, y) in enumerate(self.path)]

    def heatmap_rows(self) -> list[tuple[Any, ...]]:
        return [(mode, self.arena, *row) for mode, grid in self.grids.items() for row in grid.rows()]

    def near_path_rows(self, radii: Sequence[float] = NEAR_PATH_RADII) -> list[tuple[Any, ...]]:
        return [
            (mode, self.arena, self.seed, radius, grid.fraction_near_path(self.path, radius))
            for mode, grid in self.grids.items()
            for radius in radii
        ]


def exploration_study(
    cfg: RunConfig, modes: Sequence[TrainMode], arena: str, episodes: int, seed: int
) -> ExplorationStudy:
    """Run :func:`exploration_heatmap` for every mode from the episode ``seed`` fixes."""
    world = arena_by_name(arena)
    path = prior_path(world, seed, cfg)
    grids = {mode: exploration_heatmap(cfg, mode, arena, episodes, seed) for mode in modes}
    for mode, grid in grids.items():
        logger.info(
            "Exploration %s on %s: %.0f%% of %d visits within 1 m of the prior path",
            mode,
            world.name,
            100.0 * grid.fraction_near_path(path, 1.0),
            grid.total,
        )
    return ExplorationStudy(world.name, seed, path, grids)


def prior_curve_point(cfg: RunConfig, seed: int) -> CurvePoint:
    """The prior's score on the same evaluation episodes the learners see."""
    worlds = [arena_by_name(name) for name in cfg.train.arenas]

    def act(obs: Observation, scan: np.ndarray, bearing: float) -> tuple[float, float]:
        action = apf_action(scan, bearing, cfg.apf)
        return action.v, action.w

    lengths, successes = run_policy_episodes(act, worlds, evaluation_seeds(seed, cfg.train.eval_episodes))
    return curve_point(0, 0, 1.0, lengths, successes)


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def member_dir_name(index: int) -> str:
    return f"member_{index:02d}"


def write_run_artifacts(result: TrainResult, run_dir: Path, cfg_hash: str) -> None:
    """Checkpoints, curve, heatmap and snapshots of one training run."""
    run_dir.mkdir(parents=True, exist_ok=True)
    result.agent.save(run_dir)
    write_csv(run_dir / "curve.csv", CURVE_HEADER, (p.row() for p in result.curve.points))
    write_csv(run_dir / "snapshots.csv", SNAPSHOT_HEADER, (s.row() for s in result.snapshots))
    tables = ["curve.csv", "snapshots.csv"]
    if result.heatmaps:
        tables.append("heatmap.csv")
        write_csv(
            run_dir / "heatmap.csv",
            ("arena", *HEATMAP_HEADER),
            ((name, *row) for name, grid in result.heatmaps.items() for row in grid.rows()),
        )
    write_json(
        run_dir / "run.json",
        {
            **artifact_header(cfg_hash),
            "mode": result.mode,
            "seed": result.seed,
            "steps": result.steps,
            "episodes": result.episodes,
            "demo_transitions": result.demo_count,
            "status": "ok",
            "final_alpha": result.alpha_trace[-1] if result.alpha_trace else None,
            "files": tables,
        },
    )


def _run_task(cfg_json: str, mode: TrainMode, seed: int, run_dir: str) -> dict[str, Any]:
    """Worker entry point: train one (mode, seed) and write its artifacts."""
    cfg = RunConfig.model_validate_json(cfg_json)
    cfg_hash = config_hash(cfg)
    path = Path(run_dir)
    try:
        result = train_one(cfg, mode, seed)
    except Exception as e:
        logger.error("Run %s seed %d failed: %s", mode, seed, e)
        path.mkdir(parents=True, exist_ok=True)
        summary = {
            **artifact_header(cfg_hash),
            "mode": mode,
            "seed": seed,
            "status": "diverged" if isinstance(e, TrainingDivergenceError) else "failed",
            "error": str(e),
        }
        write_json(path / "run.json", summary)
        return summary
    write_run_artifacts(result, path, cfg_hash)
    return {
        "mode": mode,
        "seed": seed,
        "status": "ok",
        "curve": [p.row() for p in result.curve.points],
        "raw": [list(p.path_lengths) for p in result.curve.points],
    }


@dataclass
class SuiteResult:
    runs: list[dict[str, Any]]
    curves: dict[str, list[LearningCurve]]
    prior: CurvePoint | None

    @property
    def failed(self) -> list[dict[str, Any]]:
        return [run for run in self.runs if run["status"] != "ok"]


def _curve_from_rows(rows: Sequence[Sequence[Any]]) -> LearningCurve:
    curve = LearningCurve()
    for row in rows:
        curve.append(
            CurvePoint(
                step=int(row[0]),
                episode=int(row[1]),
                mean_path_length=float(row[2]),
                min_path_length=float(row[3]),
                max_path_length=float(row[4]),
                success_rate=float(row[5]),
                alpha=float(row[6]),
            )
        )
    return curve


def aggregate_curves(
    curves: Sequence[LearningCurve], total_steps: int, points: int = 50
) -> list[tuple[int, float, float, float, float, float, int]]:
    """Across-seed statistics on a common step grid.

    At grid step ``s`` each seed contributes its latest evaluation at or
    before ``s``. Rows: (step, mean, band_low, band_high, std, success_rate, n).
    """
    grid = sorted({max(1, round(total_steps * (k + 1) / points)) for k in range(points)})
    rows = []
    for step in grid:
        values = [p for p in (c.value_at(step) for c in curves) if p is not None]
        if not values:
            continue
        lengths = np.array([p.mean_path_length for p in values])
        rates = np.array([p.success_rate for p in values])
        rows.append(
            (
                step,
                float(lengths.mean()),
                float(lengths.min()),
                float(lengths.max()),
                float(lengths.std()),
                float(rates.mean()),
                len(values),
            )
        )
    return rows


def train_suite(cfg: RunConfig, out_dir: Path) -> SuiteResult:
    """Train every (mode, seed) pair and write per-run and aggregate artifacts.

    Layout::

        out/<mode>/member_NN/   checkpoints, curve.csv, heatmap.csv, run.json
        out/<mode>/manifest.json
        out/aggregate.csv
        out/prior.csv
        out/provenance.json     config hash and tool version for the two CSVs
    """
    cfg_hash = config_hash(cfg)
    cfg_json = cfg.model_dump_json()
    tasks = [
        (mode, seed, str(out_dir / mode / member_dir_name(index)))
        for mode in cfg.train.modes
        for index, seed in enumerate(cfg.train.seeds)
    ]
    logger.info("Running %d training runs with %d worker(s)", len(tasks), cfg.workers)

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_task, cfg_json, *task) for task in tasks]
            summaries = [f.result() for f in futures]
    else:
        summaries = [_run_task(cfg_json, *task) for task in tasks]

    curves: dict[str, list[LearningCurve]] = {}
    for summary in summaries:
        if summary["status"] == "ok":
            curves.setdefault(summary["mode"], []).append(_curve_from_rows(summary["curve"]))

    for mode in cfg.train.modes:
        members = [
            {"dir": member_dir_name(i), "seed": s, "status": summary["status"]}
            for i, (s, summary) in enumerate(
                zip(cfg.train.seeds, [x for x in summaries if x["mode"] == mode], strict=True)
            )
        ]
        write_json(
            out_dir / mode / "manifest.json",
            {**artifact_header(cfg_hash), "mode": mode, "members": members},
        )

    prior = prior_curve_point(cfg, cfg.train.seeds[0])
    write_csv(out_dir / "prior.csv", CURVE_HEADER, [prior.row()])

    aggregate_rows: list[tuple[Any, ...]] = []
    for mode, mode_curves in curves.items():
        for row in aggregate_curves(mode_curves, cfg.train.total_steps):
            aggregate_rows.append((mode, *row))
    write_csv(out_dir / "aggregate.csv", AGGREGATE_HEADER, aggregate_rows)
    write_provenance(out_dir, cfg_hash, ["aggregate.csv", "prior.csv"])
    write_json(
        out_dir / "suite.json",
        {
            **artifact_header(cfg_hash),
            "modes": list(cfg.train.modes),
            "seeds": list(cfg.train.seeds),
            "runs": [
                {k: v for k, v in s.items() if k in ("mode", "seed", "status", "error")}
                for s in summaries
            ],
        },
    )
    return SuiteResult(runs=summaries, curves=curves, prior=prior)
