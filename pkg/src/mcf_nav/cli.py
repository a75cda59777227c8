"""Command-line entry point: train, eval, demo, plot-data and arena-check."""

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, TextIO

from pydantic import ValidationError

from .config import RunConfig, config_hash, format_validation_error, load_config
from .deploy import CONTROLLERS, LEARNED_CONTROLLERS, load_bundle, run_episode
from .errors import ConfigError, McfError, TrainingDivergenceError, UnreachableError
from .evalkit import check_arena, evaluate_config
from .gaussfuse import alpha_at
from .logging_utils import resolve_level, setup_logging
from .manifest import read_csv, write_csv, write_json, write_provenance
from .sim import arena_by_name, arena_names, resolve_arena
from .sim.arenas import UNSEEN_ARENA
from .trainer import (
    CURVE_HEADER,
    HEATMAP_HEADER,
    NEAR_PATH_HEADER,
    PRIOR_PATH_HEADER,
    SNAPSHOT_HEADER,
    exploration_study,
    train_suite,
)

logger = logging.getLogger("mcf_nav.cli")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

ALPHA_SCHEDULE_POINTS = 101

# CLI flag -> (config section, field, argument type)
_APF_OVERRIDES: dict[str, tuple[str, str, type]] = {
    "k_att": ("apf", "k_att", float),
    "k_rep": ("apf", "k_rep", float),
    "influence_radius": ("apf", "influence_radius", float),
    "k_heading": ("apf", "k_heading", float),
    "slowdown_radius": ("apf", "slowdown_radius", float),
    "mc_samples": ("apf", "mc_samples", int),
    "sensor_sigma": ("apf", "sensor_sigma", float),
    "variance_floor": ("apf", "variance_floor_c", float),
    "train_sigma": ("apf", "train_sigma", float),
}


def _csv_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _int_list(value: str) -> list[int]:
    try:
        return [int(item) for item in _csv_list(value)]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'") from e


def _add_common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--config", type=Path, default=None, help="Run configuration JSON")
    parser.add_argument("--out", type=Path, required=out_required, help="Output directory")
    parser.add_argument(
        "--log-level",
        choices=["debug", "info", "warn", "error"],
        default=None,
        help="Log verbosity (overrides $MCF_LOG and the config file)",
    )


def _add_apf_overrides(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("prior overrides")
    for flag, (section, key, kind) in _APF_OVERRIDES.items():
        group.add_argument(
            f"--{flag.replace('_', '-')}", dest=flag, type=kind, default=None, help=f"Sets {section}.{key}"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcf-nav",
        description="Multiplicative controller fusion for laser-scan goal navigation.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    # --- train ---
    train = subparsers.add_parser("train", help="Train policies for every (mode, seed) pair.")
    _add_common(train)
    train.add_argument("--mode", type=_csv_list, default=None, help="Modes, e.g. mcf,e2e")
    train.add_argument("--seeds", type=_int_list, default=None, help="Seeds, e.g. 0,1,2")
    train.add_argument("--total-steps", type=int, default=None, help="Environment steps per run")
    train.add_argument("--arenas", type=_csv_list, default=None, help="Training arenas")
    train.add_argument("--workers", type=int, default=None, help="Parallel training runs")
    _add_apf_overrides(train)

    # --- eval ---
    ev = subparsers.add_parser("eval", help="SPL / actuation-time report for each method.")
    _add_common(ev)
    ev.add_argument("--bundle", type=Path, default=None, help="Training output or mode directory")
    ev.add_argument(
        "--env",
        default=None,
        help="'train', 'unseen', or an arena name / JSON path (default: train and unseen)",
    )
    ev.add_argument("--episodes", type=int, default=None, help="Episodes per seed")
    ev.add_argument("--methods", type=_csv_list, default=None, help=f"From {', '.join(CONTROLLERS)}")
    ev.add_argument("--seeds", type=_int_list, default=None, help="Evaluation seeds")
    _add_apf_overrides(ev)

    # --- demo ---
    demo = subparsers.add_parser("demo", help="Run one traced episode.")
    _add_common(demo)
    demo.add_argument("--controller", choices=CONTROLLERS, default="mcf")
    demo.add_argument("--env", default=UNSEEN_ARENA, help="Arena name or JSON path")
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--bundle", type=Path, default=None)
    demo.add_argument("--member", type=int, default=0, help="Member index for policy_member")
    demo.add_argument(
        "--trace",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="Write the JSON-lines step trace",
    )
    demo.add_argument("--stochastic", action="store_true", help="Sample the fused distribution")

    # --- plot-data ---
    plot = subparsers.add_parser("plot-data", help="Export tidy CSVs from a training directory.")
    _add_common(plot, out_required=False)
    plot.add_argument("--run", type=Path, required=True, help="Training output directory")
    plot.add_argument(
        "--exploration-arena", default="corridor", help="Arena for the fixed-start coverage study"
    )
    plot.add_argument(
        "--exploration-episodes",
        type=int,
        default=None,
        help="Early-training episodes per mode for the coverage study (default train.heatmap_episodes, 0 skips)",
    )
    plot.add_argument("--exploration-seed", type=int, default=0, help="Episode seed fixing start and goal")

    # --- arena-check ---
    check = subparsers.add_parser("arena-check", help="Validate arenas and A* reachability.")
    _add_common(check, out_required=False)
    check.add_argument("arenas", nargs="*", help="Arena names or JSON paths (default: all)")
    check.add_argument("--prior-rollouts", type=int, default=0, help="Prior episodes for SPL")
    check.add_argument("--resolution", type=float, default=None, help="Grid cells per metre")
    return parser


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """CLI flags take precedence over the configuration file; result is re-validated."""
    data: dict[str, Any] = cfg.model_dump()
    command = args.command
    for flag, (section, key, _) in _APF_OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[section][key] = value
    if command == "train":
        if args.mode:
            data["train"]["modes"] = args.mode
        if args.seeds:
            data["train"]["seeds"] = args.seeds
        if args.total_steps is not None:
            data["train"]["total_steps"] = args.total_steps
        if args.arenas:
            data["train"]["arenas"] = args.arenas
        if args.workers is not None:
            data["workers"] = args.workers
    elif command == "eval":
        if args.methods:
            data["eval"]["methods"] = args.methods
        if args.episodes is not None:
            data["eval"]["episodes"] = args.episodes
        if args.seeds:
            data["eval"]["seeds"] = args.seeds
    elif command == "demo":
        data["deploy"]["deterministic"] = not args.stochastic
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid command-line override:\n{format_validation_error(e)}") from e


def _start_logging(
    args: argparse.Namespace, cfg: RunConfig, log_dir: Path | None
) -> TextIO | None:
    level = resolve_level(args.log_level, cfg.logging.level)
    if log_dir is None:
        logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
        logging.getLogger("mcf_nav").setLevel(level.upper() if level != "warn" else "WARNING")
        return None
    _, handle = setup_logging(log_dir, debug=level == "debug", level=level)
    return handle


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    out: Path = args.out
    write_json(out / "config.json", cfg.model_dump(mode="json"))
    result = train_suite(cfg, out)
    for run in result.failed:
        print(f"{run['mode']} seed {run['seed']}: {run['status']}: {run.get('error', '')}", file=sys.stderr)
    print(f"Wrote {len(result.runs)} run(s) to {out}")
    if any(run["status"] == "diverged" for run in result.failed):
        return EXIT_DIVERGED
    return EXIT_FAILED if result.failed else EXIT_OK


def _env_groups(env: str | None, cfg: RunConfig) -> dict[str, list[str]]:
    if env is None:
        return {"train": list(cfg.eval.train_arenas), "unseen": list(cfg.eval.unseen_arenas)}
    if env == "train":
        return {"train": list(cfg.eval.train_arenas)}
    if env == "unseen":
        return {"unseen": list(cfg.eval.unseen_arenas)}
    return {Path(env).stem if env.endswith(".json") else env: [env]}


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    needs_bundle = bool(set(cfg.eval.methods) & LEARNED_CONTROLLERS)
    bundle = load_bundle(args.bundle) if needs_bundle and args.bundle is not None else None
    report = evaluate_config(cfg, _env_groups(args.env, cfg), bundle)
    report.write(args.out)
    print(report.to_markdown(), end="")
    return EXIT_OK


def cmd_demo(args: argparse.Namespace, cfg: RunConfig) -> int:
    world = resolve_arena(args.env)
    bundle = (
        load_bundle(args.bundle)
        if args.controller in LEARNED_CONTROLLERS and args.bundle is not None
        else None
    )
    record = run_episode(args.controller, world, args.seed, cfg.apf, cfg.deploy, bundle, args.member)
    out: Path = args.out
    if args.trace:
        record.write_trace(out / "trace.jsonl", config_hash(cfg), cfg.deploy.deterministic)
    record.write_trajectory(out / "trajectory.csv")
    print(
        f"{args.controller} on {world.name} (seed {args.seed}): {record.done_reason} "
        f"after {record.steps} steps, {record.path_length:.2f} m"
    )
    return EXIT_OK


def _member_dirs(run_dir: Path) -> list[tuple[str, Path]]:
    return [
        (mode_dir.name, member)
        for mode_dir in sorted(p for p in run_dir.iterdir() if p.is_dir())
        for member in sorted(mode_dir.glob("member_*"))
        if member.is_dir()
    ]


def cmd_plot_data(args: argparse.Namespace, cfg: RunConfig) -> int:
    run_dir: Path = args.run
    if not run_dir.is_dir():
        raise ConfigError(f"Run directory not found: {run_dir}")
    members = [(m, d) for m, d in _member_dirs(run_dir) if (d / "curve.csv").exists()]
    if not members:
        raise ConfigError(f"No training curves under {run_dir}")
    out: Path = args.out or run_dir / "plot_data"
    if (run_dir / "config.json").exists():
        cfg = load_config(run_dir / "config.json")
    episodes = cfg.train.heatmap_episodes if args.exploration_episodes is None else args.exploration_episodes
    if episodes < 0:
        raise ConfigError(f"--exploration-episodes must be non-negative, got {episodes}")
    if episodes > 0:
        arena_by_name(args.exploration_arena)

    def gather(filename: str, header: Sequence[str]) -> list[list[str]]:
        rows = []
        for mode, member_dir in members:
            path = member_dir / filename
            if path.exists():
                rows.extend([mode, member_dir.name, *(r[h] for h in header)] for r in read_csv(path))
        return rows

    curves = gather("curve.csv", CURVE_HEADER)
    if (run_dir / "prior.csv").exists():
        curves.extend(["prior", "-", *(r[h] for h in CURVE_HEADER)] for r in read_csv(run_dir / "prior.csv"))
    write_csv(out / "curves.csv", ("mode", "member", *CURVE_HEADER), curves)
    heatmap_header = ("arena", *HEATMAP_HEADER)
    write_csv(out / "heatmaps.csv", ("mode", "member", *heatmap_header), gather("heatmap.csv", heatmap_header))
    write_csv(
        out / "gating_progression.csv",
        ("mode", "member", *SNAPSHOT_HEADER),
        gather("snapshots.csv", SNAPSHOT_HEADER),
    )

    total = cfg.train.total_steps
    schedule = cfg.gating.schedule(total)
    steps = sorted({round(k * total / (ALPHA_SCHEDULE_POINTS - 1)) for k in range(ALPHA_SCHEDULE_POINTS)})
    write_csv(out / "alpha_schedule.csv", ("step", "alpha"), ((s, alpha_at(schedule, s)) for s in steps))
    tables = ["curves.csv", "heatmaps.csv", "gating_progression.csv", "alpha_schedule.csv"]

    extra: dict[str, Any] = {"run": str(run_dir)}
    if episodes > 0:
        study = exploration_study(cfg, cfg.train.modes, args.exploration_arena, episodes, args.exploration_seed)
        write_csv(out / "prior_path.csv", PRIOR_PATH_HEADER, study.path_rows())
        write_csv(out / "exploration.csv", ("mode", "arena", *HEATMAP_HEADER), study.heatmap_rows())
        write_csv(out / "near_path.csv", NEAR_PATH_HEADER, study.near_path_rows())
        tables += ["prior_path.csv", "exploration.csv", "near_path.csv"]
        extra["exploration"] = {"arena": study.arena, "seed": study.seed, "episodes": episodes}
    write_provenance(out, config_hash(cfg), tables, **extra)
    print(f"Wrote plot data for {len(members)} run(s) to {out}")
    return EXIT_OK


def cmd_arena_check(args: argparse.Namespace, cfg: RunConfig) -> int:
    refs = args.arenas or arena_names()
    resolution = args.resolution or cfg.eval.grid_resolution
    results = []
    status = EXIT_OK
    for ref in refs:
        try:
            world = resolve_arena(ref)
            result = check_arena(world, resolution, args.prior_rollouts, cfg.apf)
        except UnreachableError as e:
            result = {"arena": ref, "reachable": False, "error": str(e)}
            status = EXIT_CONFIG
        results.append(result)
        print(json.dumps(result, sort_keys=True))
    if args.out is not None:
        write_json(args.out / "arena_check.json", results)
    return status


COMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "demo": cmd_demo,
    "plot-data": cmd_plot_data,
    "arena-check": cmd_arena_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    handle: TextIO | None = None
    try:
        cfg = apply_overrides(load_config(args.config), args)
        handle = _start_logging(args, cfg, args.out / "logs" if args.out is not None else None)
        logger.info("mcf-nav %s (config %s)", args.command, config_hash(cfg))
        return COMMANDS[args.command](args, cfg)
    except TrainingDivergenceError as e:
        print(f"Training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except McfError as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILED
    finally:
        if handle is not None:
            handle.close()


if __name__ == "__main__":
    sys.exit(main())
