"""
Games
Per-player utilities (local, power-corrected local, potential identical and
marginal), strategy enumeration, best/better response and equilibrium
checks. Every candidate strategy of a player is scored in one vectorised
pass against the opponents' current profile.
"""
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from app.engines.phy import contributions, interference_vector, network_utility, raw_capacity
from app.errors import GameSpecError
from app.models import InfoModel, OFF, GameSpec, Strategy, StrategyProfile, Topology


class UtilityValue(NamedTuple):
    value: float
    tiebreak_self_capacity: float


class StrategyTable(NamedTuple):
    strategies: Tuple[Strategy, ...]
    channel: np.ndarray
    power_index: np.ndarray
    power: np.ndarray
    bandwidth: np.ndarray
    index: Dict[Strategy, int]


class CandidateEvaluation(NamedTuple):
    utility: np.ndarray
    own_capacity: np.ndarray
    sinr: np.ndarray


def utility_tolerance(value: float) -> float:
    """Slack under which two utilities count as equal"""
    return 1e-9 * max(1.0, abs(value))


# ============================================================================
# STRATEGY SPACE
# ============================================================================

def strategy_table(link: int, topology: Topology) -> StrategyTable:
    key = ("strategy_table", link)
    table = topology._cache.get(key)
    if table is None:
        q = topology.config.power_levels
        strategies = [OFF] + [Strategy(k, c) for c in topology.availability[link] for k in range(q)]
        channel = np.array([s.channel for s in strategies], dtype=np.int64)
        power_index = np.array([s.power_index for s in strategies], dtype=np.int64)
        on = power_index >= 0
        table = StrategyTable(
            strategies=tuple(strategies),
            channel=channel,
            power_index=power_index,
            power=np.where(on, topology.power_levels[np.maximum(power_index, 0)], 0.0),
            bandwidth=np.where(on, topology.bandwidths[np.maximum(channel, 0)], 0.0),
            index={s: k for k, s in enumerate(strategies)},
        )
        topology._cache[key] = table
    return table


def enumerate_strategies(link: int, topology: Topology) -> List[Strategy]:
    """OFF first, then every available channel ascending, each power level ascending"""
    return list(strategy_table(link, topology).strategies)


def strategy_position(link: int, strategy: Strategy, topology: Topology) -> int:
    table = strategy_table(link, topology)
    try:
        return table.index[strategy]
    except KeyError:
        raise GameSpecError(f"Strategy {strategy} is not legal for link {link}") from None


def random_profile(topology: Topology, rng: np.random.Generator) -> StrategyProfile:
    """Uniformly random legal strategy (OFF included) for every link"""
    chosen = []
    for link in range(topology.n_links):
        table = strategy_table(link, topology)
        chosen.append(table.strategies[int(rng.integers(len(table.strategies)))])
    return StrategyProfile.from_strategies(chosen)


def profile_from_positions(positions: np.ndarray, topology: Topology) -> StrategyProfile:
    """Profile from per-link positions in their strategy tables"""
    tables = [strategy_table(link, topology) for link in range(topology.n_links)]
    return StrategyProfile(
        np.array([t.power_index[k] for t, k in zip(tables, positions)], dtype=np.int64),
        np.array([t.channel[k] for t, k in zip(tables, positions)], dtype=np.int64),
    )


# ============================================================================
# UTILITIES
# ============================================================================

def _local_terms(link: int, profile: StrategyProfile, topology: Topology, spec: GameSpec, table: StrategyTable):
    power = profile.powers(topology.power_levels)
    others = power > 0
    others[link] = False
    received = np.bincount(
        profile.channel[others],
        weights=power[others] * topology.gains[others, link],
        minlength=topology.config.channel_count,
    )
    on = table.power_index >= 0
    sinr = np.where(
        on,
        table.power * topology.gains[link, link] / (topology.noise + received[np.maximum(table.channel, 0)]),
        0.0,
    )
    mode = spec.capacity_mode
    capacity = np.where(on, raw_capacity(sinr, table.bandwidth, mode.kind, topology.config.max_modulation), 0.0)
    valid = on & (sinr >= spec.alpha)
    own = np.where(valid if mode.enforce_threshold else on, capacity, 0.0)
    return on, sinr, valid, own


def _local_utility(on, valid, own, table: StrategyTable, topology: Topology, spec: GameSpec, power_correction: bool):
    if not spec.capacity_mode.enforce_threshold:
        return own
    utility = np.where(on & ~valid, -1.0, own)
    if power_correction:
        bonus = table.bandwidth * (1.0 - table.power / topology.config.p_max)
        utility = np.where(valid, own + bonus, utility)
    return utility


def _potential_delta(link: int, profile: StrategyProfile, topology: Topology, spec: GameSpec, table: StrategyTable):
    """
    Change in the other links' summed lambda*C caused by each candidate,
    measured against link i being OFF, plus that OFF baseline total.
    Only links sharing the candidate's channel are recomputed.
    """
    gains = topology.gains
    direct = topology.direct_gains
    power = profile.powers(topology.power_levels)
    channel = profile.channel
    interference = interference_vector(power, channel, gains)

    on_minus = power > 0
    if on_minus[link]:
        shared = on_minus & (channel == channel[link])
        interference = interference - np.where(shared, power[link] * gains[link], 0.0)
    on_minus[link] = False

    mode = spec.capacity_mode
    m_max = topology.config.max_modulation
    bandwidth = topology.bandwidths[np.maximum(channel, 0)]
    sinr_minus = np.where(on_minus, power * direct / (topology.noise + interference), 0.0)
    baseline = contributions(sinr_minus, bandwidth, on_minus, mode, spec.alpha, m_max)

    delta = np.zeros(len(table.strategies))
    for f in np.unique(table.channel[table.channel >= 0]):
        affected = np.flatnonzero(on_minus & (channel == f))
        if affected.size == 0:
            continue
        rows = np.flatnonzero(table.channel == f)
        received = interference[affected][None, :] + table.power[rows][:, None] * gains[link, affected][None, :]
        sinr = power[affected] * direct[affected] / (topology.noise + received)
        updated = contributions(sinr, bandwidth[affected], np.ones_like(sinr, dtype=bool), mode, spec.alpha, m_max)
        delta[rows] = np.sum(updated - baseline[affected], axis=1)
    return delta, float(np.sum(baseline))


def _evaluate(
    link: int,
    profile: StrategyProfile,
    topology: Topology,
    spec: GameSpec,
    regime: InfoModel,
    power_correction: bool,
) -> CandidateEvaluation:
    table = strategy_table(link, topology)
    on, sinr, valid, own = _local_terms(link, profile, topology, spec, table)
    if regime == InfoModel.LOCAL:
        utility = _local_utility(on, valid, own, table, topology, spec, power_correction)
    else:
        delta, baseline = _potential_delta(link, profile, topology, spec, table)
        utility = own + delta
        if regime == InfoModel.POTENTIAL_IDENTICAL:
            utility = utility + baseline
    return CandidateEvaluation(utility=utility, own_capacity=own, sinr=sinr)


def evaluate_candidates(link: int, profile: StrategyProfile, topology: Topology, spec: GameSpec) -> CandidateEvaluation:
    """Utility of every strategy of `link` (enumeration order) against the others in `profile`"""
    return _evaluate(link, profile, topology, spec, spec.info_model, spec.power_correction)


def _single(link, candidate, profile, topology, spec, regime, power_correction) -> Tuple[float, float]:
    position = strategy_position(link, candidate, topology)
    evaluation = _evaluate(link, profile, topology, spec, regime, power_correction)
    return float(evaluation.utility[position]), float(evaluation.own_capacity[position])


def utility_local(link: int, candidate: Strategy, profile: StrategyProfile, topology: Topology, spec: GameSpec) -> UtilityValue:
    """-1 when transmitting below alpha, C_i otherwise (C_i always for CC-noalpha)"""
    return UtilityValue(*_single(link, candidate, profile, topology, spec, InfoModel.LOCAL, False))


def utility_local_power(link: int, candidate: Strategy, profile: StrategyProfile, topology: Topology, spec: GameSpec) -> UtilityValue:
    """Local utility plus w_f * (1 - p / P_max) for valid ON strategies; OFF stays 0"""
    return UtilityValue(*_single(link, candidate, profile, topology, spec, InfoModel.LOCAL, True))


def utility_potential_identical(link: int, candidate: Strategy, profile: StrategyProfile, topology: Topology, spec: GameSpec) -> float:
    """Network utility with link's strategy replaced by candidate"""
    return _single(link, candidate, profile, topology, spec, InfoModel.POTENTIAL_IDENTICAL, False)[0]


def utility_potential_marginal(link: int, candidate: Strategy, profile: StrategyProfile, topology: Topology, spec: GameSpec) -> float:
    """Own lambda*C minus what the other links lose because this link transmits"""
    return _single(link, candidate, profile, topology, spec, InfoModel.POTENTIAL_MARGINAL, False)[0]


def utility(link: int, candidate: Strategy, profile: StrategyProfile, topology: Topology, spec: GameSpec) -> float:
    """The spec's utility for one candidate"""
    return _single(link, candidate, profile, topology, spec, spec.info_model, spec.power_correction)[0]


# ============================================================================
# RESPONSES AND EQUILIBRIA
# ============================================================================

def best_response(link: int, profile: StrategyProfile, topology: Topology, spec: GameSpec) -> Strategy:
    """
    Utility argmax. Keeps the current strategy when it already attains the
    maximum; otherwise ties go to the higher own capacity (potential games
    only) and then to enumeration order.
    """
    table = strategy_table(link, topology)
    current = profile.strategy(link)
    evaluation = evaluate_candidates(link, profile, topology, spec)
    u = evaluation.utility
    best = float(u.max())
    now = float(u[strategy_position(link, current, topology)])
    if best <= now + utility_tolerance(now):
        return current

    ties = np.flatnonzero(u >= best - utility_tolerance(best))
    if spec.is_potential:
        own = evaluation.own_capacity[ties]
        top = float(own.max())
        ties = ties[own >= top - utility_tolerance(top)]
    return table.strategies[int(ties[0])]


def better_response(
    link: int,
    profile: StrategyProfile,
    topology: Topology,
    spec: GameSpec,
    rng: np.random.Generator,
) -> Strategy:
    """Uniformly random strictly improving strategy, or the current one"""
    table = strategy_table(link, topology)
    current = profile.strategy(link)
    u = evaluate_candidates(link, profile, topology, spec).utility
    now = float(u[strategy_position(link, current, topology)])
    improving = np.flatnonzero(u > now + utility_tolerance(now))
    if improving.size == 0:
        return current
    return table.strategies[int(improving[rng.integers(improving.size)])]


def is_pure_nash(profile: StrategyProfile, topology: Topology, spec: GameSpec) -> bool:
    """No link can strictly improve by deviating alone"""
    for link in range(topology.n_links):
        u = evaluate_candidates(link, profile, topology, spec).utility
        now = float(u[strategy_position(link, profile.strategy(link), topology)])
        if float(u.max()) > now + utility_tolerance(now):
            return False
    return True


def check_potential_identity(topology: Topology, spec: GameSpec, trials: int, rng: np.random.Generator) -> float:
    """
    Largest |delta u - delta NU| over random profiles and random unilateral
    deviations, relative to max(1, |NU|).
    """
    if not spec.is_potential:
        raise GameSpecError("Potential identity is only defined for potential information models")
    mode = spec.capacity_mode
    worst = 0.0
    for _ in range(trials):
        profile = random_profile(topology, rng)
        link = int(rng.integers(topology.n_links))
        table = strategy_table(link, topology)
        deviation = table.strategies[int(rng.integers(len(table.strategies)))]
        u = evaluate_candidates(link, profile, topology, spec).utility
        du = u[table.index[deviation]] - u[table.index[profile.strategy(link)]]
        before = network_utility(profile, topology, mode, spec.alpha)
        after = network_utility(profile.with_strategy(link, deviation), topology, mode, spec.alpha)
        scale = max(1.0, abs(before), abs(after))
        worst = max(worst, abs(du - (after - before)) / scale)
    return worst
