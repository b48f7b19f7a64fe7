"""
Physical layer
SINR under the physical interference model, the validity indicator, the
three capacity definitions and the network utilities built on them.
All functions are pure.
"""
from typing import NamedTuple, Optional

import numpy as np

from app.models import CapacityKind, CapacityMode, StrategyProfile, Topology


class ProfileMetrics(NamedTuple):
    nu: float
    nu_valid: float
    valid_links: int
    active_links: int
    mean_power: float


# ============================================================================
# SINR
# ============================================================================

def interference_vector(power: np.ndarray, channel: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Co-channel interference received by every link (mW)"""
    on = power > 0
    same = (channel[:, None] == channel[None, :]) & on[:, None] & on[None, :]
    np.fill_diagonal(same, False)
    return np.sum(power[:, None] * gains * same, axis=0)


def sinr_vector(profile: StrategyProfile, topology: Topology) -> np.ndarray:
    power = profile.powers(topology.power_levels)
    interference = interference_vector(power, profile.channel, topology.gains)
    return np.where(profile.on_mask, power * topology.direct_gains / (topology.noise + interference), 0.0)


def sinr(link: int, profile: StrategyProfile, topology: Topology) -> float:
    """SINR of one link; 0 when the link is OFF"""
    strategy = profile.strategy(link)
    if not strategy.is_on:
        return 0.0
    levels = topology.power_levels
    interference = 0.0
    for j in range(len(profile)):
        other = profile.strategy(j)
        if j != link and other.is_on and other.channel == strategy.channel:
            interference += levels[other.power_index] * topology.gains[j, link]
    return float(levels[strategy.power_index] * topology.gains[link, link] / (topology.noise + interference))


def is_valid(link: int, profile: StrategyProfile, topology: Topology, alpha: Optional[float] = None) -> bool:
    """lambda_i: ON and SINR >= alpha"""
    alpha = topology.config.sinr_threshold if alpha is None else alpha
    return profile.strategy(link).is_on and sinr(link, profile, topology) >= alpha


# ============================================================================
# CAPACITY
# ============================================================================

def _largest_power_of_two(value: float) -> int:
    return 1 << (int(value).bit_length() - 1)


def modulation_levels(sinr_values: np.ndarray, max_modulation: int = 256) -> np.ndarray:
    """Vectorised modulation_level; 0 marks an invalid (< 2 level) entry"""
    root = np.floor(np.sqrt(1.0 + np.asarray(sinr_values, dtype=float)))
    _, exponent = np.frexp(root)
    levels = np.minimum(np.ldexp(1.0, exponent - 1), _largest_power_of_two(max_modulation))
    return np.where(root >= 2, levels, 0.0).astype(np.int64)


def modulation_level(sinr_value: float, max_modulation: int = 256) -> Optional[int]:
    """
    Largest power of two <= floor(sqrt(1 + SINR)), capped at M_max.
    Returns None when fewer than two levels are supported.
    """
    level = int(modulation_levels(np.array([sinr_value]), max_modulation)[0])
    return level or None


def raw_capacity(sinr_values: np.ndarray, bandwidth: np.ndarray, kind: CapacityKind, max_modulation: int = 256) -> np.ndarray:
    """Capacity of ON links ignoring the threshold gate"""
    sinr_values = np.asarray(sinr_values, dtype=float)
    if kind == CapacityKind.CONTINUOUS:
        return bandwidth * np.log2(1.0 + sinr_values)
    if kind == CapacityKind.DISCRETE:
        levels = modulation_levels(sinr_values, max_modulation)
        return np.where(levels > 0, 2.0 * bandwidth * np.log2(np.maximum(levels, 1)), 0.0)
    return np.ones_like(sinr_values)


def contributions(
    sinr_values: np.ndarray,
    bandwidth: np.ndarray,
    on: np.ndarray,
    mode: CapacityMode,
    alpha: float,
    max_modulation: int = 256,
) -> np.ndarray:
    """lambda_i * C_i per link (C_i alone for CC-noalpha); OFF links give 0"""
    capacity = raw_capacity(sinr_values, bandwidth, mode.kind, max_modulation)
    keep = on & (sinr_values >= alpha) if mode.enforce_threshold else on
    return np.where(keep, capacity, 0.0)


def _bandwidth_of(profile: StrategyProfile, topology: Topology) -> np.ndarray:
    return topology.bandwidths[np.maximum(profile.channel, 0)]


def link_capacity(
    link: int,
    profile: StrategyProfile,
    topology: Topology,
    mode: CapacityMode,
    alpha: Optional[float] = None,
) -> float:
    strategy = profile.strategy(link)
    if not strategy.is_on:
        return 0.0
    value = sinr(link, profile, topology)
    if mode.kind == CapacityKind.BINARY:
        alpha = topology.config.sinr_threshold if alpha is None else alpha
        return 1.0 if value >= alpha else 0.0
    bandwidth = np.array([topology.bandwidths[strategy.channel]])
    return float(raw_capacity(np.array([value]), bandwidth, mode.kind, topology.config.max_modulation)[0])


# ============================================================================
# NETWORK UTILITY
# ============================================================================

def network_utility(
    profile: StrategyProfile,
    topology: Topology,
    mode: CapacityMode,
    alpha: Optional[float] = None,
) -> float:
    """NU = sum of lambda_i * C_i (sum of C_i over ON links for CC-noalpha)"""
    alpha = topology.config.sinr_threshold if alpha is None else alpha
    values = sinr_vector(profile, topology)
    return float(np.sum(contributions(
        values, _bandwidth_of(profile, topology), profile.on_mask, mode, alpha, topology.config.max_modulation
    )))


def network_utility_valid(
    profile: StrategyProfile,
    topology: Topology,
    mode: CapacityMode,
    alpha: Optional[float] = None,
) -> float:
    """NU_val: capacity summed over links meeting the threshold only"""
    alpha = topology.config.sinr_threshold if alpha is None else alpha
    values = sinr_vector(profile, topology)
    valid = profile.on_mask & (values >= alpha)
    capacity = raw_capacity(values, _bandwidth_of(profile, topology), mode.kind, topology.config.max_modulation)
    return float(np.sum(np.where(valid, capacity, 0.0)))


def profile_metrics(
    profile: StrategyProfile,
    topology: Topology,
    mode: CapacityMode,
    alpha: Optional[float] = None,
) -> ProfileMetrics:
    """NU, NU_val, valid and active link counts and mean ON power in one SINR pass"""
    alpha = topology.config.sinr_threshold if alpha is None else alpha
    values = sinr_vector(profile, topology)
    on = profile.on_mask
    bandwidth = _bandwidth_of(profile, topology)
    capacity = raw_capacity(values, bandwidth, mode.kind, topology.config.max_modulation)
    valid = on & (values >= alpha)
    nu_mask = valid if mode.enforce_threshold else on
    power = profile.powers(topology.power_levels)
    return ProfileMetrics(
        nu=float(np.sum(np.where(nu_mask, capacity, 0.0))),
        nu_valid=float(np.sum(np.where(valid, capacity, 0.0))),
        valid_links=int(np.count_nonzero(valid)),
        active_links=int(np.count_nonzero(on)),
        mean_power=float(power[on].mean()) if on.any() else 0.0,
    )


def network_utility_batch(
    power_index: np.ndarray,
    channel: np.ndarray,
    topology: Topology,
    mode: CapacityMode,
    alpha: Optional[float] = None,
) -> np.ndarray:
    """NU for a batch of profiles given as (B, N) index arrays (-1 = OFF)"""
    alpha = topology.config.sinr_threshold if alpha is None else alpha
    power_index = np.atleast_2d(power_index)
    channel = np.atleast_2d(channel)
    on = power_index >= 0
    power = np.where(on, topology.power_levels[np.maximum(power_index, 0)], 0.0)
    same = (channel[:, :, None] == channel[:, None, :]) & on[:, :, None] & on[:, None, :]
    n = power.shape[1]
    same[:, np.arange(n), np.arange(n)] = False
    interference = np.einsum("bk,kj,bkj->bj", power, topology.gains, same.astype(float))
    values = np.where(on, power * topology.direct_gains / (topology.noise + interference), 0.0)
    bandwidth = topology.bandwidths[np.maximum(channel, 0)]
    return np.sum(contributions(values, bandwidth, on, mode, alpha, topology.config.max_modulation), axis=1)
