"""
Orchestrator
Job: Run an experiment plan in three phases:
  Phase 1 (Expand): one task per (label, link count, instance) with derived seeds
  Phase 2 (Run): fresh topology per task, dispatch to dynamics / learning / GA
  Phase 3 (Aggregate): ordered reduction to AggregateRows, CSVs and manifest
"""
import asyncio
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from app import __version__
from app.config import get_settings
from app.engines.dynamics import run_repeated_game
from app.engines.ga import ga_optimize
from app.engines.learning import run_learning
from app.engines.phy import network_utility, profile_metrics
from app.engines.scenario import generate_topology
from app.models import (
    AggregateRow,
    CapacityKind,
    CapacityMode,
    ExperimentPlan,
    InstanceResult,
    BatchStatus,
    RunnerKind,
    StrategyProfile,
    Topology,
    parse_label,
)
from app.storage import storage

logger = logging.getLogger("Orchestrator")

__all__ = ["parse_label", "derive_seed", "run_instance", "aggregate", "run_plan", "run_plan_async", "run_batch_background"]

Task = Tuple[str, int, int]

METRIC_FILES = {
    "nu.csv": ["label", "link_count", "instances", "failed", "nu_mean", "nu_std", "nu_valid_mean", "nu_valid_std"],
    "links.csv": ["label", "link_count", "instances", "failed", "valid_links_mean", "valid_links_std", "active_links_mean"],
    "iterations.csv": [
        "label", "link_count", "instances", "failed",
        "iterations_mean", "iterations_std", "iterations_per_link", "convergence_rate",
    ],
    "capacity_power.csv": ["label", "link_count", "instances", "failed", "discrete_capacity_mean", "mean_power_mean"],
}


def derive_seed(base_seed: int, *parts: Any) -> int:
    """base_seed XOR a stable 63-bit hash of parts (independent of PYTHONHASHSEED)"""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return (base_seed ^ int.from_bytes(digest, "little")) & (2**63 - 1)


def topology_seed(base_seed: int, link_count: int, instance: int) -> int:
    """Shared by every label so labels are compared on the same instances"""
    return derive_seed(base_seed, "topology", link_count, instance)


def run_seed(base_seed: int, label: str, link_count: int, instance: int) -> int:
    return derive_seed(base_seed, label, link_count, instance)


def profile_summary(profile: StrategyProfile, topology: Topology, mode: CapacityMode, alpha: float) -> Dict[str, Any]:
    """JSON-ready metrics of one profile"""
    metrics = profile_metrics(profile, topology, mode, alpha)
    return {
        "nu": metrics.nu,
        "nu_valid": metrics.nu_valid,
        "valid_links": metrics.valid_links,
        "active_links": metrics.active_links,
        "mean_power": metrics.mean_power,
        "profile": [str(s) for s in profile.strategies()],
    }


# ============================================================================
# PHASE 2: ONE INSTANCE
# ============================================================================

def run_instance(plan: ExperimentPlan, label_text: str, link_count: int, instance: int) -> InstanceResult:
    """
    Generate the instance topology and run the label's engine on it.
    Failures are returned as a result with `error` set, never raised.
    """
    seed = run_seed(plan.base_seed, label_text, link_count, instance)
    result = InstanceResult(label=label_text, link_count=link_count, instance=instance, seed=seed)
    try:
        scenario = plan.scenario.model_copy(update={"link_count": link_count})
        topology = generate_topology(scenario, seed=topology_seed(plan.base_seed, link_count, instance))
        label = parse_label(label_text, alpha=scenario.sinr_threshold)
        alpha = scenario.sinr_threshold
        mode = label.capacity_mode
        discrete = CapacityMode.dc_alpha()

        if label.runner == RunnerKind.LEARNING:
            config = plan.learning.model_copy(update={"rng_seed": seed, "algorithm": label.algorithm})
            trace = run_learning(topology, label.game_spec, config)
            return result.model_copy(update={
                "nu": trace.mean_nu,
                "nu_valid": trace.mean_nu_valid,
                "valid_links": trace.mean_valid_links,
                "active_links": trace.mean_active_links,
                "discrete_capacity": trace.mean_discrete_capacity,
                "mean_power": trace.mean_power,
                "iterations": float(trace.total_steps),
                "player_actions": float(trace.total_steps * link_count),
            })

        if label.runner == RunnerKind.GA:
            ga = ga_optimize(topology, mode, plan.ga.model_copy(update={"rng_seed": seed}), alpha)
            profile, iterations, actions, converged, cycle = ga.best_profile, ga.generations, 0, None, None
        else:
            engine = plan.engine.model_copy(update={"rng_seed": seed, "record_trajectory": False})
            trace = run_repeated_game(topology, label.game_spec, engine)
            profile, iterations, actions = trace.final_profile, trace.steps_used, trace.player_actions
            converged, cycle = trace.converged, trace.cycle_detected

        metrics = profile_metrics(profile, topology, mode, alpha)
        if mode.kind == CapacityKind.DISCRETE and mode.enforce_threshold:
            discrete_nu = metrics.nu
        else:
            discrete_nu = network_utility(profile, topology, discrete, alpha)
        return result.model_copy(update={
            "nu": metrics.nu,
            "nu_valid": metrics.nu_valid,
            "valid_links": float(metrics.valid_links),
            "active_links": float(metrics.active_links),
            "discrete_capacity": discrete_nu,
            "mean_power": metrics.mean_power,
            "iterations": float(iterations),
            "player_actions": float(actions),
            "converged": converged,
            "cycle_detected": cycle,
        })
    except Exception as e:
        logger.warning("Instance %s N=%d #%d failed: %s", label_text, link_count, instance, e)
        return result.model_copy(update={"error": f"{type(e).__name__}: {e}"})


# ============================================================================
# PHASE 3: AGGREGATION
# ============================================================================

def aggregate(results: List[InstanceResult]) -> List[AggregateRow]:
    """
    Mean and sample std (0 for a single instance) per (label, link count),
    in order of first appearance. Failed instances are counted, not averaged.
    """
    frame = pd.DataFrame([r.model_dump() for r in results])
    rows = []
    for (label, link_count), group in frame.groupby(["label", "link_count"], sort=False):
        ok = group[group["error"].isna()]
        failed = len(group) - len(ok)

        def mean(column: str) -> float:
            return float(ok[column].mean()) if len(ok) else float("nan")

        def std(column: str) -> float:
            return float(np.nan_to_num(ok[column].std(ddof=1))) if len(ok) else 0.0

        convergence = ok["converged"].dropna()
        rows.append(AggregateRow(
            label=label,
            link_count=int(link_count),
            instances=len(ok),
            failed=failed,
            nu_mean=mean("nu"),
            nu_std=std("nu"),
            nu_valid_mean=mean("nu_valid"),
            nu_valid_std=std("nu_valid"),
            valid_links_mean=mean("valid_links"),
            valid_links_std=std("valid_links"),
            active_links_mean=mean("active_links"),
            discrete_capacity_mean=mean("discrete_capacity"),
            mean_power_mean=mean("mean_power"),
            iterations_mean=mean("iterations"),
            iterations_std=std("iterations"),
            iterations_per_link=mean("player_actions") / int(link_count),
            convergence_rate=float(convergence.astype(bool).mean()) if len(convergence) else None,
        ))
    return rows


def aggregate_frame(rows: List[AggregateRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows])


def write_outputs(plan: ExperimentPlan, results: List[InstanceResult], rows: List[AggregateRow], out: Optional[Path] = None) -> Path:
    """One CSV per metric family, the per-instance table and a manifest"""
    target = storage.resolve(out or plan.output_dir)
    table = aggregate_frame(rows)
    storage.write_frame(table, target / "aggregate.csv")
    for name, columns in METRIC_FILES.items():
        storage.write_frame(table[columns], target / name)
    instances = pd.DataFrame([r.model_dump() for r in results])
    storage.write_frame(instances, target / "instances.csv")

    manifest: Dict[str, Any] = {
        "version": __version__,
        "plan": plan.model_dump(mode="json"),
        "seeds": [
            {
                "label": r.label,
                "link_count": r.link_count,
                "instance": r.instance,
                "run_seed": r.seed,
                "topology_seed": topology_seed(plan.base_seed, r.link_count, r.instance),
            }
            for r in results
        ],
        "failures": [
            {"label": r.label, "link_count": r.link_count, "instance": r.instance, "error": r.error}
            for r in results if r.error
        ],
        "columns": {
            "aggregate.csv": list(table.columns),
            **METRIC_FILES,
            "instances.csv": list(instances.columns),
        },
    }
    storage.write_manifest(manifest, target / "manifest.json")
    return target


# ============================================================================
# PHASES 1-3
# ============================================================================

def expand_plan(plan: ExperimentPlan) -> List[Task]:
    return [(label, n, k) for label in plan.labels for n in plan.link_counts for k in range(plan.instances)]


async def run_plan_async(
    plan: ExperimentPlan,
    workers: Optional[int] = None,
    out: Optional[Path] = None,
    write: bool = True,
) -> List[AggregateRow]:
    workers = workers or get_settings().workers
    tasks = expand_plan(plan)
    logger.info("Running %d instances (%d labels x %d link counts x %d) on %d worker(s)",
                len(tasks), len(plan.labels), len(plan.link_counts), plan.instances, workers)

    if workers == 1:
        results = [run_instance(plan, *task) for task in tasks]
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [loop.run_in_executor(pool, run_instance, plan, *task) for task in tasks]
            results = await asyncio.gather(*futures)

    # merge keyed by task position, independent of completion order
    order = {task: position for position, task in enumerate(tasks)}
    results = sorted(results, key=lambda r: order[(r.label, r.link_count, r.instance)])
    failed = sum(1 for r in results if r.error)
    if failed:
        logger.warning("%d of %d instances failed and are excluded from the aggregates", failed, len(results))

    rows = aggregate(results)
    if write:
        target = write_outputs(plan, results, rows, out)
        logger.info("Wrote %d aggregate rows to %s", len(rows), target)
    return rows


def run_plan(
    plan: ExperimentPlan,
    workers: Optional[int] = None,
    out: Optional[Path] = None,
    write: bool = True,
) -> List[AggregateRow]:
    """Synchronous entry point around run_plan_async"""
    return asyncio.run(run_plan_async(plan, workers=workers, out=out, write=write))


def run_batch_background(batch_id: str, plan: ExperimentPlan) -> None:
    """
    Background task for the HTTP surface: runs the plan into
    <data dir>/batches/<batch_id> and records the outcome on the batch record.
    """
    try:
        logger.info("Starting batch %s", batch_id)
        storage.update_batch(batch_id, {"status": BatchStatus.IN_PROGRESS.value})
        rows = run_plan(plan, out=Path("batches") / batch_id)
        storage.update_batch(batch_id, {
            "status": BatchStatus.COMPLETED.value,
            "rows": [row.model_dump(mode="json") for row in rows],
        })
        logger.info("Batch %s completed", batch_id)
    except Exception as e:
        logger.error("Batch %s failed: %s", batch_id, e)
        storage.update_batch(batch_id, {"status": BatchStatus.FAILED.value, "error": str(e)})
