"""
Repeated-game dynamics
Job: Play the myopic repeated game step by step (round-robin or asynchronous
scheduling, best or better response) until a verified pure NE, a detected
cycle or the step budget.
"""
import logging
from collections import OrderedDict
from typing import Dict, List, Set

import numpy as np
import pandas as pd

from app.engines.games import best_response, better_response, is_pure_nash, random_profile
from app.engines.phy import profile_metrics
from app.models import EngineConfig, GameSpec, ResponseRule, RunTrace, Scheduler, Strategy, StrategyProfile, Topology

logger = logging.getLogger("Dynamics")


def schedule_round_robin(step: int, n_players: int) -> Set[int]:
    """Exactly one player per step, cycling through all of them"""
    return {step % n_players}


def schedule_asynchronous(step: int, n_players: int, rng: np.random.Generator) -> Set[int]:
    """Every player acts independently with probability 1/N; the set may be empty"""
    if n_players < 1:
        raise ValueError("Need at least one player")
    draws = rng.random(n_players)
    return set(np.flatnonzero(draws < 1.0 / n_players).tolist()) if n_players > 1 else {0}


def detect_convergence(
    quiet_steps: int,
    window: int,
    profile: StrategyProfile,
    topology: Topology,
    spec: GameSpec,
) -> bool:
    """
    After `window` consecutive steps without a strategy change, verify the
    profile is a pure NE. Quiescence alone is not enough: the asynchronous
    scheduler can skip the one player that would still deviate.
    """
    if quiet_steps < window:
        return False
    return is_pure_nash(profile, topology, spec)


def _respond(link, snapshot, topology, spec, rule, rng) -> Strategy:
    if rule == ResponseRule.BEST:
        return best_response(link, snapshot, topology, spec)
    return better_response(link, snapshot, topology, spec, rng)


def run_repeated_game(topology: Topology, spec: GameSpec, engine_config: EngineConfig) -> RunTrace:
    """
    Sequence of stage games from a random initial profile. Movers of an
    asynchronous step all respond to the same pre-step snapshot and their
    moves are applied together.
    """
    n = topology.n_links
    window = engine_config.quiescence_window or 3 * n
    if window < n:
        raise ValueError(f"quiescence_window ({window}) must be at least the number of players ({n})")

    rng = np.random.default_rng(engine_config.rng_seed)
    profile = random_profile(topology, rng)
    deterministic = engine_config.scheduler == Scheduler.ROUND_ROBIN and engine_config.response_rule == ResponseRule.BEST
    seen: "OrderedDict[bytes, None]" = OrderedDict()

    trace = RunTrace(final_profile=profile)
    quiet = 0
    record = engine_config.record_trajectory

    for step in range(engine_config.max_steps):
        if engine_config.scheduler == Scheduler.ROUND_ROBIN:
            movers = schedule_round_robin(step + engine_config.phase_offset, n)
        else:
            movers = schedule_asynchronous(step, n, rng)

        snapshot = profile
        updates: Dict[int, Strategy] = {}
        for link in sorted(movers):
            choice = _respond(link, snapshot, topology, spec, engine_config.response_rule, rng)
            if choice != snapshot.strategy(link):
                updates[link] = choice
        if updates:
            profile = snapshot.with_strategies(updates)

        trace.steps_used = step + 1
        trace.player_actions += len(movers)
        trace.strategy_changes += len(updates)
        if record:
            metrics = profile_metrics(profile, topology, spec.capacity_mode, spec.alpha)
            trace.nu_history.append(metrics.nu)
            trace.nu_valid_history.append(metrics.nu_valid)
            trace.valid_links_history.append(metrics.valid_links)
            trace.active_links_history.append(metrics.active_links)
            trace.acting_history.append(sorted(movers))
            trace.changed_history.append(sorted(updates))

        if updates:
            quiet = 0
            if deterministic:
                # state = (profile, next player); revisiting it after a change repeats forever
                key = profile.key() + ((step + 1 + engine_config.phase_offset) % n).to_bytes(4, "little")
                if key in seen:
                    trace.cycle_detected = True
                    logger.info("Cycle detected at step %d", step + 1)
                    break
                seen[key] = None
                if len(seen) > engine_config.cycle_memory:
                    seen.popitem(last=False)
            continue

        quiet += 1
        if quiet >= window:
            if detect_convergence(quiet, window, profile, topology, spec):
                trace.converged = True
                logger.debug("Converged to a pure NE after %d steps", step + 1)
                break
            quiet = 0

    trace.final_profile = profile
    logger.debug(
        "Run finished: converged=%s cycle=%s steps=%d actions=%d",
        trace.converged, trace.cycle_detected, trace.steps_used, trace.player_actions,
    )
    return trace


def trace_frame(trace: RunTrace) -> pd.DataFrame:
    """Per-step trajectory table (requires record_trajectory)"""
    return pd.DataFrame({
        "step": np.arange(1, len(trace.nu_history) + 1),
        "acting": [" ".join(map(str, a)) for a in trace.acting_history],
        "changed": [" ".join(map(str, c)) for c in trace.changed_history],
        "nu": trace.nu_history,
        "nu_valid": trace.nu_valid_history,
        "valid_links": trace.valid_links_history,
        "active_links": trace.active_links_history,
    })
