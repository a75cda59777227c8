"""Deployment-time controllers: ensemble inference fused with the prior's MC distribution.

Trace format (JSON lines)::

    line 1      {"type": "header", "tool", "version", "config_hash", "controller",
                 "arena", "seed", "start", "goal", "deterministic",
                 "done_reason", "steps", "path_length", "success", "end"}
    line 2..    {"type": "step", "step", "x", "y", "theta", "action": [v, w],
                 "noise": [n_v, n_w] | null,
                 "policy" | "prior" | "fused": [mean_v, var_v, mean_w, var_w] | null,
                 "disagreement": [d_v, d_w] | null, "stagnation": bool,
                 "prior_degenerate": fraction | null}

For the fused controller ``action == clamp(fused.mean + sqrt(fused.var) * noise)``
holds on every step line; deterministic runs record zero noise. Step lines carry
the pose before the action; ``end`` and the last trajectory row hold the final pose.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import seeding
from .config import ApfConfig, DeployConfig, Method
from .errors import BundleError
from .gaussfuse import (
    DiagGaussian2,
    aggregate_ensemble,
    apply_noise,
    disagreement,
    fuse_product,
    sample_with_noise,
)
from .manifest import artifact_header, read_json, write_csv, write_jsonl
from .neural import Mlp
from .prior_apf import apf_action, prior_distribution_mc
from .sac import policy_distribution
from .sim import NavigationEnv, WorldSpec
from .sim.env import DoneReason

logger = logging.getLogger("mcf_nav.deploy")

CONTROLLERS: tuple[Method, ...] = ("mcf", "policy_only", "policy_member", "prior", "random")
LEARNED_CONTROLLERS = frozenset({"mcf", "policy_only", "policy_member"})
TRAJECTORY_HEADER = ("step", "x", "y", "ensemble_var_v", "ensemble_var_w")


@dataclass
class EnsembleBundle:
    """Independently trained actors used together at deployment."""

    members: list[Mlp]
    manifest: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise BundleError(f"an ensemble needs at least 2 members, got {len(self.members)}")
        first = self.members[0]
        if first.head != "gaussian":
            raise BundleError("ensemble members must be gaussian-head actors")
        for index, member in enumerate(self.members[1:], start=1):
            if not first.same_architecture(member):
                raise BundleError(
                    f"member {index} has layers {member.layer_sizes}, "
                    f"expected {first.layer_sizes}"
                )

    @property
    def size(self) -> int:
        return len(self.members)


def load_bundle(path: Path) -> EnsembleBundle:
    """Load the actors listed in a mode directory's ``manifest.json``.

    ``path`` may be the mode directory itself or a training output directory,
    in which case its ``mcf`` mode is used. Members that failed during training
    or whose checkpoint is absent are reported together.
    """
    root = path if (path / "manifest.json").exists() else path / "mcf"
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise BundleError(f"No ensemble manifest at {manifest_path}")
    manifest = read_json(manifest_path)

    absent: list[str] = []
    actors: list[Mlp] = []
    for member in manifest.get("members", []):
        actor_path = root / member["dir"] / "actor.mlp"
        if member.get("status", "ok") != "ok" or not actor_path.exists():
            absent.append(str(actor_path))
            continue
        actors.append(Mlp.load(actor_path))
    if absent:
        raise BundleError("Missing ensemble members:\n" + "\n".join(f"  {p}" for p in absent))
    logger.info("Loaded %d ensemble members from %s", len(actors), root)
    return EnsembleBundle(actors, manifest)


def member_means(bundle: EnsembleBundle, obs: np.ndarray) -> np.ndarray:
    """(N, 2) array of each member's action mean."""
    return np.array([policy_distribution(actor, obs).mean for actor in bundle.members])


def ensemble_distribution(
    bundle: EnsembleBundle, obs: np.ndarray, epsilon: float = 1e-6
) -> DiagGaussian2:
    """Unimodal approximation of the ensemble from its members' means.

    Member variances are not used.
    """
    return aggregate_ensemble(member_means(bundle, obs), epsilon)


@dataclass(frozen=True)
class TraceRow:
    step: int
    x: float
    y: float
    theta: float
    action: tuple[float, float]
    noise: tuple[float, float] | None = None
    policy: DiagGaussian2 | None = None
    prior: DiagGaussian2 | None = None
    fused: DiagGaussian2 | None = None
    disagreement: tuple[float, float] | None = None
    stagnation: bool = False
    prior_degenerate: float | None = None

    def to_json(self) -> dict[str, Any]:
        def dist(d: DiagGaussian2 | None) -> list[float] | None:
            return list(d.to_row()) if d is not None else None

        return {
            "type": "step",
            "step": self.step,
            "x": self.x,
            "y": self.y,
            "theta": self.theta,
            "action": list(self.action),
            "noise": list(self.noise) if self.noise is not None else None,
            "policy": dist(self.policy),
            "prior": dist(self.prior),
            "fused": dist(self.fused),
            "disagreement": list(self.disagreement) if self.disagreement is not None else None,
            "stagnation": self.stagnation,
            "prior_degenerate": self.prior_degenerate,
        }


@dataclass(frozen=True)
class FusionStep:
    action: tuple[float, float]
    noise: tuple[float, float]
    policy: DiagGaussian2
    prior: DiagGaussian2
    fused: DiagGaussian2
    disagreement: tuple[float, float]
    stagnation: bool
    prior_degenerate: float = 0.0


def is_stagnant(
    policy: DiagGaussian2, prior: DiagGaussian2, gap: float, max_var: float
) -> bool:
    """Both controllers confident yet far apart on some action dimension."""
    confident = bool(np.all(policy.var < max_var) and np.all(prior.var < max_var))
    return confident and max(disagreement(policy, prior)) > gap


def mcf_act(
    bundle: EnsembleBundle,
    apf: ApfConfig,
    deploy: DeployConfig,
    obs: np.ndarray,
    scan: np.ndarray,
    angle_to_goal: float,
    mc_rng: np.random.Generator,
    sample_rng: np.random.Generator,
    max_range: float = 5.0,
) -> FusionStep:
    """One fused deployment decision: ensemble x prior, then mean or sample."""
    policy = ensemble_distribution(bundle, obs, deploy.ensemble_epsilon)
    estimate = prior_distribution_mc(scan, angle_to_goal, apf, mc_rng, max_range)
    prior = estimate.distribution
    fused = fuse_product(policy, prior)
    if deploy.deterministic:
        noise = (0.0, 0.0)
        action = apply_noise(fused, noise)
    else:
        action, noise = sample_with_noise(fused, sample_rng)
    stagnation = is_stagnant(policy, prior, deploy.stagnation_gap, deploy.stagnation_var)
    if stagnation:
        logger.warning(
            "Confident policy and prior disagree (policy %s, prior %s); robot may stall",
            policy.mean.round(3).tolist(),
            prior.mean.round(3).tolist(),
        )
    return FusionStep(
        action, noise, policy, prior, fused, disagreement(policy, prior), stagnation, estimate.degenerate
    )


@dataclass
class EpisodeRecord:
    controller: Method
    arena: str
    seed: int
    start: tuple[float, float, float]
    goal: tuple[float, float]
    done_reason: DoneReason = "running"
    path_length: float = 0.0
    rows: list[TraceRow] = field(default_factory=list)
    end: tuple[float, float, float] | None = None

    @property
    def success(self) -> bool:
        return self.done_reason == "goal"

    @property
    def steps(self) -> int:
        return len(self.rows)

    def header(self, cfg_hash: str, deterministic: bool) -> dict[str, Any]:
        return {
            "type": "header",
            **artifact_header(cfg_hash),
            "controller": self.controller,
            "arena": self.arena,
            "seed": self.seed,
            "start": list(self.start),
            "goal": list(self.goal),
            "deterministic": deterministic,
            "done_reason": self.done_reason,
            "steps": self.steps,
            "path_length": self.path_length,
            "success": self.success,
            "end": list(self.end) if self.end is not None else None,
        }

    def write_trace(self, path: Path, cfg_hash: str, deterministic: bool = True) -> int:
        """Write the JSON-lines trace; returns the number of lines."""
        lines = [self.header(cfg_hash, deterministic), *(r.to_json() for r in self.rows)]
        return write_jsonl(path, lines)

    def write_trajectory(self, path: Path) -> int:
        """x, y and ensemble variance per step, for uncertainty-coloured path plots.

        One row per step plus a terminal row with the final pose and no variance.
        """
        rows: list[tuple[Any, ...]] = []
        for r in self.rows:
            var = r.policy.to_row() if r.policy is not None else None
            rows.append((r.step, r.x, r.y, var[1] if var else "", var[3] if var else ""))
        if self.end is not None:
            rows.append((self.steps, self.end[0], self.end[1], "", ""))
        return write_csv(path, TRAJECTORY_HEADER, rows)


def run_episode(
    controller: Method,
    world: WorldSpec,
    seed: int,
    apf: ApfConfig,
    deploy: DeployConfig,
    bundle: EnsembleBundle | None = None,
    member: int = 0,
) -> EpisodeRecord:
    """Drive one episode to termination with the chosen controller.

    ``seed`` fixes start, goal, prior MC noise, fused-action sampling and the
    random controller's draws.
    """
    if controller in LEARNED_CONTROLLERS and bundle is None:
        raise BundleError(f"controller '{controller}' needs a trained ensemble bundle")
    if controller == "policy_member" and bundle is not None and not 0 <= member < bundle.size:
        raise BundleError(f"member index {member} out of range for {bundle.size} members")

    mc_rng = seeding.stream(seed, seeding.PRIOR_MC)
    sample_rng = seeding.stream(seed, seeding.EXPLORE)
    random_rng = seeding.stream(seed, seeding.RANDOM_CONTROLLER)

    env = NavigationEnv(world)
    obs = env.reset(seed)
    assert env.state is not None
    record = EpisodeRecord(
        controller=controller,
        arena=world.name,
        seed=seed,
        start=(env.state.x, env.state.y, env.state.theta),
        goal=env.goal,
    )

    while not env.done:
        state = env.state
        assert state is not None
        obs_arr = obs.as_array()
        row: dict[str, Any] = {}
        if controller == "mcf":
            assert bundle is not None
            fusion = mcf_act(
                bundle, apf, deploy, obs_arr, env.scan, env.bearing, mc_rng, sample_rng,
                world.lidar.max_range,
            )
            action = fusion.action
            row = {
                "noise": fusion.noise,
                "policy": fusion.policy,
                "prior": fusion.prior,
                "fused": fusion.fused,
                "disagreement": fusion.disagreement,
                "stagnation": fusion.stagnation,
                "prior_degenerate": fusion.prior_degenerate,
            }
        elif controller == "policy_only":
            assert bundle is not None
            policy = ensemble_distribution(bundle, obs_arr, deploy.ensemble_epsilon)
            action = (policy.v.mean, policy.w.mean)
            row = {"policy": policy}
        elif controller == "policy_member":
            assert bundle is not None
            policy = policy_distribution(bundle.members[member], obs_arr)
            action = (policy.v.mean, policy.w.mean)
            row = {"policy": policy}
        elif controller == "prior":
            apf_out = apf_action(env.scan, env.bearing, apf)
            action = (apf_out.v, apf_out.w)
        else:
            draw = random_rng.uniform(-1.0, 1.0, size=2)
            action = (float(draw[0]), float(draw[1]))

        result = env.step(action)
        record.rows.append(
            TraceRow(step=state.steps, x=state.x, y=state.y, theta=state.theta, action=action, **row)
        )
        obs = result.observation
        record.done_reason = result.done_reason

    record.path_length = env.path_length
    record.end = (env.state.x, env.state.y, env.state.theta)
    logger.debug(
        "%s on %s seed %d: %s after %d steps", controller, world.name, seed, record.done_reason, record.steps
    )
    return record
