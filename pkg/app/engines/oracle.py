"""
Oracles and fixtures
Job: Exhaustive enumeration of joint profiles on tiny instances (global NU
optimum, pure-NE scan, price of anarchy) and the three-link counterexample
topology on which the local game has no pure NE.
"""
import logging
from typing import Iterator, List, Optional, Tuple

import numpy as np

from app.config import get_settings
from app.engines.games import is_pure_nash, strategy_table
from app.engines.phy import network_utility, network_utility_batch
from app.engines.scenario import synthetic_topology
from app.errors import FixtureError, OracleBudgetError
from app.models import CapacityMode, GameSpec, OracleResult, StrategyProfile, Topology

logger = logging.getLogger("Oracle")

CHUNK = 65536

# tx i -> rx j; B disrupts A, C disrupts B, A disrupts C
FIG1_GAINS = [
    [1.0, 0.01, 1.0],
    [1.0, 1.0, 0.01],
    [0.01, 1.0, 1.0],
]
FIG1_NOISE_MW = 0.01


def profile_count(topology: Topology) -> int:
    """Number of joint pure profiles (product of per-link strategy counts)"""
    total = 1
    for link in range(topology.n_links):
        total *= len(strategy_table(link, topology).strategies)
    return total


def _check_budget(topology: Topology, budget: Optional[int]) -> int:
    budget = get_settings().oracle_budget if budget is None else budget
    count = profile_count(topology)
    if count > budget:
        raise OracleBudgetError(
            f"Exhaustive search needs {count} profiles, over the budget of {budget}; "
            f"shrink the instance (links, channels or power levels) or raise CRN_ORACLE_BUDGET"
        )
    return count


def _position_chunks(topology: Topology, count: int) -> Iterator[Tuple[int, np.ndarray]]:
    """(offset, positions) blocks in lexicographic order, last link fastest"""
    sizes = np.array([len(strategy_table(link, topology).strategies) for link in range(topology.n_links)], dtype=np.int64)
    strides = np.ones_like(sizes)
    for k in range(len(sizes) - 2, -1, -1):
        strides[k] = strides[k + 1] * sizes[k + 1]
    for start in range(0, count, CHUNK):
        index = np.arange(start, min(start + CHUNK, count), dtype=np.int64)
        yield start, (index[:, None] // strides[None, :]) % sizes[None, :]


def _to_arrays(positions: np.ndarray, topology: Topology) -> Tuple[np.ndarray, np.ndarray]:
    tables = [strategy_table(link, topology) for link in range(topology.n_links)]
    power_index = np.stack([t.power_index[positions[:, i]] for i, t in enumerate(tables)], axis=1)
    channel = np.stack([t.channel[positions[:, i]] for i, t in enumerate(tables)], axis=1)
    return power_index, channel


def compare_oracle(
    topology: Topology,
    capacity_mode: CapacityMode,
    alpha: Optional[float] = None,
    budget: Optional[int] = None,
) -> OracleResult:
    """Exhaustive NU maximum; the first maximiser in enumeration order wins"""
    count = _check_budget(topology, budget)
    best_nu = -np.inf
    best_arrays = None
    for _, positions in _position_chunks(topology, count):
        power_index, channel = _to_arrays(positions, topology)
        values = network_utility_batch(power_index, channel, topology, capacity_mode, alpha)
        top = int(np.argmax(values))
        if values[top] > best_nu:
            best_nu = float(values[top])
            best_arrays = (power_index[top], channel[top])
    logger.debug("Oracle scanned %d profiles, optimum NU %.4f", count, best_nu)
    return OracleResult(optimum_nu=best_nu, profile=StrategyProfile(*best_arrays), profiles_evaluated=count)


def scan_pure_equilibria(topology: Topology, spec: GameSpec, budget: Optional[int] = None) -> List[StrategyProfile]:
    """Every pure NE of the game, by brute force"""
    count = _check_budget(topology, budget)
    found = []
    for _, positions in _position_chunks(topology, count):
        power_index, channel = _to_arrays(positions, topology)
        for row in range(len(positions)):
            profile = StrategyProfile(power_index[row], channel[row])
            if is_pure_nash(profile, topology, spec):
                found.append(profile)
    return found


def price_of_anarchy(
    topology: Topology,
    profile: StrategyProfile,
    capacity_mode: CapacityMode,
    alpha: Optional[float] = None,
    budget: Optional[int] = None,
) -> float:
    """Optimum NU over the NU of `profile` (inf when the profile earns nothing)"""
    optimum = compare_oracle(topology, capacity_mode, alpha, budget).optimum_nu
    achieved = network_utility(profile, topology, capacity_mode, alpha)
    if achieved <= 0:
        return 1.0 if optimum <= 0 else float("inf")
    return optimum / achieved


def build_fig1_fixture() -> Topology:
    """
    Three links, two channels, Q = 4. Each link is valid only if its
    disruptor is on another channel, whatever the third link does, and the
    disruption is cyclic, so the BC local game has no pure NE. Checked by an
    exhaustive scan before the topology is returned.
    """
    topology = synthetic_topology(
        FIG1_GAINS,
        availability=[(0, 1)] * 3,
        power_levels=4,
        p_max=100.0,
        noise_power=FIG1_NOISE_MW,
        sinr_threshold=10.0,
    )
    spec = GameSpec(capacity_mode=CapacityMode.bc_alpha(), alpha=10.0)
    equilibria = scan_pure_equilibria(topology, spec)
    if equilibria:
        raise FixtureError(f"Counterexample fixture admits {len(equilibria)} pure NE, e.g. {equilibria[0]!r}")
    logger.debug("Counterexample fixture verified: no pure NE among %d profiles", profile_count(topology))
    return topology
