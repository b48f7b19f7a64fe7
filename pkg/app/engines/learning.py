"""
No-external-regret learning
Informed players on the local (optionally power-corrected) game update a
mixed strategy every step: FS exponential weights over cumulative
utilities, or HM regret matching over cumulative regrets.
"""
import logging
from collections import Counter
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd

from app.engines.games import evaluate_candidates, profile_from_positions, strategy_table
from app.engines.phy import network_utility, profile_metrics
from app.errors import GameSpecError, LearningError
from app.models import (
    CapacityKind,
    CapacityMode,
    CCEReport,
    CCESpan,
    GameSpec,
    LearningAlgorithm,
    LearningConfig,
    LearningScheduler,
    LearningTrace,
    StrategyProfile,
    Topology,
)

logger = logging.getLogger("Learning")


@dataclass
class LinkLearner:
    probabilities: np.ndarray
    cumulative_utility: np.ndarray
    cumulative_regret: np.ndarray

    @classmethod
    def uniform(cls, size: int) -> "LinkLearner":
        return cls(
            probabilities=np.full(size, 1.0 / size),
            cumulative_utility=np.zeros(size),
            cumulative_regret=np.zeros(size),
        )


@dataclass
class LearnerState:
    learners: List[LinkLearner]
    step: int = 0


def _checked(utility_vector) -> np.ndarray:
    u = np.asarray(utility_vector, dtype=float)
    if np.isnan(u).any():
        raise LearningError("Utility vector contains NaN")
    return u


def fs_update(learner: LinkLearner, utility_vector, beta: float) -> np.ndarray:
    """q(s) proportional to (1 + beta)^(U(s) - max U), U the cumulative utility"""
    if beta <= 0:
        raise LearningError(f"beta must be positive, got {beta}")
    learner.cumulative_utility += _checked(utility_vector)
    weights = np.power(1.0 + beta, learner.cumulative_utility - learner.cumulative_utility.max())
    learner.probabilities = weights / weights.sum()
    return learner.probabilities


def hm_update(learner: LinkLearner, utility_vector, realized: int) -> np.ndarray:
    """q(s) proportional to the positive part of the cumulative regret; uniform when none is positive"""
    u = _checked(utility_vector)
    learner.cumulative_regret += u - u[realized]
    positive = np.maximum(learner.cumulative_regret, 0.0)
    total = positive.sum()
    if total > 0:
        learner.probabilities = positive / total
    else:
        learner.probabilities = np.full(len(positive), 1.0 / len(positive))
    return learner.probabilities


def informed_utility_vector(link: int, realized_profile: StrategyProfile, topology: Topology, spec: GameSpec) -> np.ndarray:
    """What `link` would have earned with each of its strategies against the others' realized play"""
    if spec.is_potential:
        raise GameSpecError("Learning runs on the local game only")
    return evaluate_candidates(link, realized_profile, topology, spec).utility


def _sample(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    position = int(np.searchsorted(np.cumsum(probabilities), rng.random(), side="right"))
    return min(position, len(probabilities) - 1)


def run_learning(topology: Topology, spec: GameSpec, learning_config: LearningConfig) -> LearningTrace:
    """
    Every step each (acting) player samples from its mixed strategy, observes
    the utility vector against the realized play and updates. All vectors are
    computed before any update is applied.
    """
    if spec.is_potential:
        raise GameSpecError("Learning runs on the local game only")
    n = topology.n_links
    rng = np.random.default_rng(learning_config.rng_seed)
    sizes = [len(strategy_table(link, topology).strategies) for link in range(n)]
    state = LearnerState([LinkLearner.uniform(size) for size in sizes])

    total = learning_config.total_steps
    window_start = total - max(1, int(round(learning_config.averaging_window * total)))
    trace = LearningTrace(algorithm=learning_config.algorithm, total_steps=total, window_start=window_start)
    trace.cumulative_utility = [np.zeros(size) for size in sizes]
    realized_sum = np.zeros(n)
    tracked = [link for link in learning_config.track_links if 0 <= link < n]
    trace.q_history = {link: [] for link in tracked}
    joint: Counter = Counter()

    fs = learning_config.algorithm == LearningAlgorithm.FS
    asynchronous = learning_config.scheduler == LearningScheduler.ASYNCHRONOUS
    discrete = CapacityMode.dc_alpha()
    positions = np.zeros(n, dtype=np.int64)
    joint_start = window_start if learning_config.cce_span == CCESpan.WINDOW else 0

    for t in range(total):
        if asynchronous and t > 0 and n > 1:
            acting = np.flatnonzero(rng.random(n) < 1.0 / n)
        else:
            acting = np.arange(n)
        for link in acting:
            positions[link] = _sample(state.learners[link].probabilities, rng)

        profile = profile_from_positions(positions, topology)
        metrics = profile_metrics(profile, topology, spec.capacity_mode, spec.alpha)
        trace.nu_history.append(metrics.nu)
        trace.nu_valid_history.append(metrics.nu_valid)
        trace.valid_links_history.append(metrics.valid_links)
        trace.active_links_history.append(metrics.active_links)
        trace.mean_power_history.append(metrics.mean_power)
        if spec.capacity_mode.kind == CapacityKind.DISCRETE:
            trace.discrete_capacity_history.append(metrics.nu)
        else:
            trace.discrete_capacity_history.append(network_utility(profile, topology, discrete, spec.alpha))

        vectors = [informed_utility_vector(link, profile, topology, spec) for link in range(n)]
        for link, vector in enumerate(vectors):
            trace.cumulative_utility[link] += vector
            realized_sum[link] += vector[positions[link]]
        for link in acting:
            learner = state.learners[link]
            if fs:
                fs_update(learner, vectors[link], learning_config.beta)
            else:
                hm_update(learner, vectors[link], int(positions[link]))
        state.step = t + 1

        if learning_config.record_joint_play and t >= joint_start:
            joint[tuple(int(p) for p in positions)] += 1
        if tracked and t % learning_config.track_every == 0:
            trace.q_history_steps.append(t)
            for link in tracked:
                trace.q_history[link].append(state.learners[link].probabilities.copy())

    trace.final_probabilities = [learner.probabilities.copy() for learner in state.learners]
    trace.realized_utility = realized_sum.tolist()
    trace.joint_counts = dict(joint)
    logger.info(
        "%s learning finished: %d steps, windowed NU %.3f, valid links %.2f",
        learning_config.algorithm.value, total, trace.mean_nu, trace.mean_valid_links,
    )
    return trace


def average_external_regret(link: int, trace: LearningTrace) -> float:
    """(1/T) * max over fixed strategies of the utility the link gave up"""
    best_fixed = float(np.max(trace.cumulative_utility[link]))
    return (best_fixed - trace.realized_utility[link]) / trace.total_steps


def empirical_cce_gap(trace: LearningTrace, topology: Topology, spec: GameSpec, sample_budget: int = 5000) -> CCEReport:
    """
    Treat the recorded joint plays (the whole run unless the config asked for
    the averaging window only) as the joint distribution and measure the best gain any player gets by committing to a
    fixed strategy instead. At most `sample_budget` distinct joint profiles
    (most frequent first) are audited.
    """
    if not trace.joint_counts:
        raise LearningError("Trace holds no joint play; run with record_joint_play=True")
    items = sorted(trace.joint_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    truncated = len(items) > sample_budget
    items = items[:sample_budget]
    samples = sum(count for _, count in items)

    n = topology.n_links
    deviation = [np.zeros(len(strategy_table(link, topology).strategies)) for link in range(n)]
    following = np.zeros(n)
    for positions, count in items:
        weight = count / samples
        profile = profile_from_positions(np.array(positions), topology)
        for link in range(n):
            vector = informed_utility_vector(link, profile, topology, spec)
            deviation[link] += weight * vector
            following[link] += weight * vector[positions[link]]

    per_player = [float(deviation[link].max() - following[link]) for link in range(n)]
    return CCEReport(
        gap=max(per_player),
        per_player_gap=per_player,
        support_size=len(items),
        samples=samples,
        truncated=truncated,
        low_confidence=truncated or samples < 10 * len(items),
    )


def learning_frame(trace: LearningTrace) -> pd.DataFrame:
    """Per-step NU rows of a learning run"""
    return pd.DataFrame({
        "step": np.arange(1, len(trace.nu_history) + 1),
        "nu": trace.nu_history,
        "nu_valid": trace.nu_valid_history,
        "valid_links": trace.valid_links_history,
        "active_links": trace.active_links_history,
        "discrete_capacity": trace.discrete_capacity_history,
        "mean_power": trace.mean_power_history,
    })


def mixed_strategy_table(trace: LearningTrace, link: int, topology: Topology) -> pd.DataFrame:
    """Final (strategy, probability) table of one link"""
    table = strategy_table(link, topology)
    return pd.DataFrame({
        "link": link,
        "strategy": [str(s) for s in table.strategies],
        "probability": trace.final_probabilities[link],
    })
