"""
Command-line surface
Job: gen / play / learn / ga / batch / fixture / oracle subcommands writing
CSV + JSON under --out. Exit status 0 on success, 2 on invalid input,
3 when a built-in fixture fails its self-check.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from pydantic import ValidationError

from app.config import configure_logging
from app.engines.dynamics import run_repeated_game, trace_frame
from app.engines.ga import ga_optimize, ga_progress_frame
from app.engines.learning import average_external_regret, learning_frame, mixed_strategy_table, run_learning
from app.engines.oracle import build_fig1_fixture, compare_oracle
from app.engines.scenario import generate_topology, load_config
from app.errors import CRNError, FixtureError
from app.models import (
    EngineConfig,
    ExperimentPlan,
    GAConfig,
    LearningConfig,
    LearningScheduler,
    ResponseRule,
    RunnerKind,
    ScenarioConfig,
    Scheduler,
    Topology,
    parse_label,
)
from app.orchestrator import METRIC_FILES, profile_summary, run_plan
from app.storage import storage

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SELF_CHECK = 3

COLUMNS_HELP = """\
output files:
  gen      topology.json
  play     trace.csv (step, acting, changed, nu, nu_valid, valid_links, active_links), summary.json
  learn    learning.csv (step, nu, nu_valid, valid_links, active_links, discrete_capacity, mean_power),
           strategies.csv (link, strategy, probability), summary.json
  ga       ga_progress.csv (generation, best_nu, mean_nu), summary.json
  batch    aggregate.csv, {files}, instances.csv, manifest.json
  fixture  topology.json
  oracle   summary.json
""".format(files=", ".join(METRIC_FILES))


# ============================================================================
# HELPERS
# ============================================================================

def _out_dir(args, default: str) -> Path:
    target = Path(args.out).resolve() if args.out else storage.resolve(default)
    target.mkdir(parents=True, exist_ok=True)
    return target


def _write_json(data: dict, path: Path) -> None:
    storage.write_manifest(data, path)


def _scenario(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig.desk()
    if args.links:
        config = ScenarioConfig(**{**config.model_dump(), "link_count": args.links})
    return config


def _topology(args) -> Topology:
    if getattr(args, "topology", None):
        return storage.load_topology(Path(args.topology).resolve())
    return generate_topology(_scenario(args), seed=args.seed)


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_gen(args) -> int:
    topology = _topology(args)
    path = storage.dump_topology(topology, _out_dir(args, "gen") / "topology.json")
    print(f"Wrote {topology.n_links}-link topology to {path}")
    return EXIT_OK


def cmd_play(args) -> int:
    topology = _topology(args)
    label = parse_label(args.label or "DC-alpha/local", alpha=topology.config.sinr_threshold)
    if label.runner != RunnerKind.GAME:
        raise CRNError(f"'play' needs a repeated-game label, got {label.text}")
    engine = EngineConfig(
        scheduler=Scheduler(args.scheduler),
        response_rule=ResponseRule(args.response),
        max_steps=args.steps or 20000,
        rng_seed=args.seed,
    )
    trace = run_repeated_game(topology, label.game_spec, engine)
    out = _out_dir(args, "play")
    storage.write_frame(trace_frame(trace), out / "trace.csv")
    summary = {
        "label": label.text,
        "converged": trace.converged,
        "cycle_detected": trace.cycle_detected,
        "steps_used": trace.steps_used,
        "player_actions": trace.player_actions,
        "strategy_changes": trace.strategy_changes,
        **profile_summary(trace.final_profile, topology, label.capacity_mode, label.game_spec.alpha),
    }
    _write_json(summary, out / "summary.json")
    print(f"{label.text}: converged={trace.converged} cycle={trace.cycle_detected} "
          f"steps={trace.steps_used} NU={summary['nu']:.3f}")
    return EXIT_OK


def cmd_learn(args) -> int:
    topology = _topology(args)
    label = parse_label(args.label or "DCP-alpha/FS", alpha=topology.config.sinr_threshold)
    if label.runner != RunnerKind.LEARNING:
        raise CRNError(f"'learn' needs a learning label (.../FS or .../HM), got {label.text}")
    config = LearningConfig(
        algorithm=label.algorithm,
        beta=args.beta,
        total_steps=args.steps or 20000,
        scheduler=LearningScheduler(args.scheduler),
        rng_seed=args.seed,
    )
    trace = run_learning(topology, label.game_spec, config)
    out = _out_dir(args, "learn")
    storage.write_frame(learning_frame(trace), out / "learning.csv")
    tables = [mixed_strategy_table(trace, link, topology) for link in range(topology.n_links)]
    storage.write_frame(pd.concat(tables, ignore_index=True), out / "strategies.csv")
    summary = {
        "label": label.text,
        "total_steps": trace.total_steps,
        "window_start": trace.window_start,
        "mean_nu": trace.mean_nu,
        "mean_nu_valid": trace.mean_nu_valid,
        "mean_valid_links": trace.mean_valid_links,
        "mean_active_links": trace.mean_active_links,
        "mean_discrete_capacity": trace.mean_discrete_capacity,
        "mean_power": trace.mean_power,
        "average_external_regret": [average_external_regret(link, trace) for link in range(topology.n_links)],
    }
    _write_json(summary, out / "summary.json")
    print(f"{label.text}: windowed NU={trace.mean_nu:.3f} valid links={trace.mean_valid_links:.2f}")
    return EXIT_OK


def cmd_ga(args) -> int:
    topology = _topology(args)
    label = parse_label(args.label or "GA-DC")
    if label.runner != RunnerKind.GA:
        raise CRNError(f"'ga' needs GA-DC or GA-BC, got {label.text}")
    config = GAConfig(rng_seed=args.seed, **({"max_generations": args.steps} if args.steps else {}))
    result = ga_optimize(topology, label.capacity_mode, config)
    out = _out_dir(args, "ga")
    storage.write_frame(ga_progress_frame(result), out / "ga_progress.csv")
    summary = {
        "label": label.text,
        "generations": result.generations,
        "best_nu": result.best_nu,
        **profile_summary(result.best_profile, topology, label.capacity_mode, topology.config.sinr_threshold),
    }
    _write_json(summary, out / "summary.json")
    print(f"{label.text}: best NU={result.best_nu:.3f} after {result.generations} generations")
    return EXIT_OK


def cmd_batch(args) -> int:
    if args.config:
        with open(args.config, "r") as f:
            plan = ExperimentPlan(**json.load(f))
    else:
        plan = ExperimentPlan()
    updates = {}
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if args.links:
        updates["link_counts"] = [args.links]
    if args.label:
        updates["labels"] = [args.label]
    if args.instances:
        updates["instances"] = args.instances
    if updates:
        plan = ExperimentPlan(**{**plan.model_dump(), **updates})
    out = Path(args.out).resolve() if args.out else None
    rows = run_plan(plan, workers=args.workers, out=out)
    for row in rows:
        print(f"{row.label:24s} N={row.link_count:4d} NU={row.nu_mean:9.3f} ±{row.nu_std:7.3f} "
              f"valid={row.valid_links_mean:6.2f} failed={row.failed}")
    return EXIT_OK


def cmd_fixture(args) -> int:
    topology = build_fig1_fixture()
    path = storage.dump_topology(topology, _out_dir(args, "fixture") / "topology.json")
    print(f"Counterexample fixture verified (no pure NE); wrote {path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    topology = _topology(args)
    label = parse_label(args.label or "DC-alpha/potential", alpha=topology.config.sinr_threshold)
    result = compare_oracle(topology, label.capacity_mode, topology.config.sinr_threshold, args.budget)
    out = _out_dir(args, "oracle")
    summary = {
        "capacity_mode": label.capacity_mode.model_dump(mode="json"),
        "profiles_evaluated": result.profiles_evaluated,
        "optimum_nu": result.optimum_nu,
        "profile": [str(s) for s in result.profile.strategies()],
    }
    _write_json(summary, out / "summary.json")
    print(f"Optimum NU={result.optimum_nu:.3f} over {result.profiles_evaluated} profiles")
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crn",
        description="Distributed channel and power allocation games for cognitive radio networks",
        epilog=COLUMNS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default=None, help="Override CRN_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seed_default: Optional[int] = 1) -> argparse.ArgumentParser:
        p.add_argument("--config", help="Scenario JSON (powers in dBm, threshold in dB); plan JSON for batch")
        p.add_argument("--seed", type=int, default=seed_default, help="Random seed")
        p.add_argument("--out", help="Output directory (default: <data dir>/<command>)")
        p.add_argument("--label", help="Strategy label, e.g. DC-alpha/local, BCP-alpha/HM, GA-DC")
        p.add_argument("--links", type=int, help="Number of links")
        p.add_argument("--steps", type=int, help="Step / generation budget")
        return p

    for name, handler, text in (
        ("gen", cmd_gen, "emit a topology"),
        ("play", cmd_play, "run one repeated game"),
        ("learn", cmd_learn, "run one learning run"),
        ("ga", cmd_ga, "run the genetic algorithm"),
        ("oracle", cmd_oracle, "brute-force NU optimum"),
    ):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--topology", help="Load a topology JSON written by 'gen' instead of generating one")
        p.set_defaults(handler=handler)
        if name == "play":
            p.add_argument("--scheduler", choices=[s.value for s in Scheduler], default=Scheduler.ROUND_ROBIN.value)
            p.add_argument("--response", choices=[r.value for r in ResponseRule], default=ResponseRule.BEST.value)
        if name == "learn":
            p.add_argument("--scheduler", choices=[s.value for s in LearningScheduler],
                           default=LearningScheduler.SYNCHRONOUS.value)
            p.add_argument("--beta", type=float, default=0.1, help="FS learning parameter")
        if name == "oracle":
            p.add_argument("--budget", type=int, default=None, help="Max joint profiles (default CRN_ORACLE_BUDGET)")

    p = common(sub.add_parser("batch", help="run an experiment plan"), seed_default=None)
    p.add_argument("--instances", type=int, help="Instances per (label, link count)")
    p.add_argument("--workers", type=int, default=None, help="Worker processes (default CRN_WORKERS)")
    p.set_defaults(handler=cmd_batch)

    p = sub.add_parser("fixture", help="emit a built-in fixture")
    p.add_argument("name", choices=["fig1"])
    p.add_argument("--out", help="Output directory")
    p.set_defaults(handler=cmd_fixture)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except FixtureError as e:
        print(f"Fixture self-check failed: {e}", file=sys.stderr)
        return EXIT_SELF_CHECK
    except (CRNError, ValidationError, ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
