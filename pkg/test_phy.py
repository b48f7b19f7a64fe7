"""
Physical layer: SINR, validity, capacities and network utilities
"""
import math

import numpy as np
import pytest

from app.engines.games import random_profile
from app.engines.phy import (
    is_valid,
    link_capacity,
    modulation_level,
    network_utility,
    network_utility_batch,
    network_utility_valid,
    profile_metrics,
    sinr,
    sinr_vector,
)
from app.engines.scenario import generate_topology, synthetic_topology
from app.models import CapacityMode, ScenarioConfig, Strategy, StrategyProfile

DC = CapacityMode.dc_alpha()
CC = CapacityMode.cc_alpha()
CC_NO_ALPHA = CapacityMode.cc_no_alpha()
BC = CapacityMode.bc_alpha()


def two_links():
    # tx0 -> rx1 gain 0.5, tx1 -> rx0 gain 0.25; levels 32 and 64 mW, noise 1 mW
    return synthetic_topology(
        [[1.0, 0.5], [0.25, 1.0]],
        availability=[(0, 1), (0, 1)],
        p_max=64.0,
        power_levels=2,
        noise_power=1.0,
    )


def test_modulation_level_examples():
    assert modulation_level(63.0) == 8
    assert modulation_level(15.0) == 4
    assert modulation_level(24.0) == 4
    assert modulation_level(3.0) == 2
    assert modulation_level(2.9) is None
    assert modulation_level(1e9) == 256
    assert modulation_level(1e9, max_modulation=64) == 64


def test_single_link_capacities():
    topology = synthetic_topology([[1.0]], p_max=64.0, power_levels=2, noise_power=1.0)
    profile = StrategyProfile.from_strategies([Strategy(1, 0)])
    assert sinr(0, profile, topology) == pytest.approx(64.0)
    assert link_capacity(0, profile, topology, DC) == pytest.approx(6.0)
    assert link_capacity(0, profile, topology, CC) == pytest.approx(math.log2(65.0))
    assert link_capacity(0, profile, topology, BC) == 1.0
    assert is_valid(0, profile, topology)


def test_off_link_has_no_capacity_and_no_interference():
    topology = two_links()
    profile = StrategyProfile.from_strategies([Strategy(), Strategy(1, 0)])
    assert sinr(0, profile, topology) == 0.0
    assert link_capacity(0, profile, topology, DC) == 0.0
    assert not is_valid(0, profile, topology)
    assert sinr(1, profile, topology) == pytest.approx(64.0)


def test_co_channel_interference():
    topology = two_links()
    shared = StrategyProfile.from_strategies([Strategy(1, 0), Strategy(1, 0)])
    assert sinr(0, shared, topology) == pytest.approx(64.0 / 17.0)
    assert sinr(1, shared, topology) == pytest.approx(64.0 / 33.0)
    assert np.allclose(sinr_vector(shared, topology), [64.0 / 17.0, 64.0 / 33.0])
    assert not is_valid(0, shared, topology)

    split = StrategyProfile.from_strategies([Strategy(1, 0), Strategy(1, 1)])
    assert np.allclose(sinr_vector(split, topology), [64.0, 64.0])


def test_network_utility_modes():
    topology = two_links()
    split = StrategyProfile.from_strategies([Strategy(1, 0), Strategy(1, 1)])
    assert network_utility(split, topology, DC) == pytest.approx(12.0)
    assert network_utility(split, topology, CC) == pytest.approx(2 * math.log2(65.0))
    assert network_utility(split, topology, BC) == pytest.approx(2.0)

    shared = StrategyProfile.from_strategies([Strategy(1, 0), Strategy(1, 0)])
    expected = math.log2(1 + 64.0 / 17.0) + math.log2(1 + 64.0 / 33.0)
    assert network_utility(shared, topology, CC_NO_ALPHA) == pytest.approx(expected)
    assert network_utility(shared, topology, CC) == 0.0
    assert network_utility_valid(shared, topology, CC_NO_ALPHA) == 0.0
    assert network_utility(StrategyProfile.all_off(2), topology, DC) == 0.0


def test_profile_metrics_match_individual_functions():
    topology = two_links()
    profile = StrategyProfile.from_strategies([Strategy(0, 0), Strategy(1, 1)])
    metrics = profile_metrics(profile, topology, DC)
    assert metrics.nu == pytest.approx(network_utility(profile, topology, DC))
    assert metrics.nu_valid == pytest.approx(network_utility_valid(profile, topology, DC))
    assert metrics.valid_links == 2
    assert metrics.active_links == 2
    assert metrics.mean_power == pytest.approx(48.0)


def test_channel_bandwidth_weights_capacity():
    topology = synthetic_topology(
        [[1.0]], availability=[(0, 1)], p_max=64.0, power_levels=2, noise_power=1.0, channel_bandwidths=[1.0, 2.0]
    )
    on_wide = StrategyProfile.from_strategies([Strategy(1, 1)])
    assert network_utility(on_wide, topology, DC) == pytest.approx(12.0)
    assert network_utility(on_wide, topology, BC) == pytest.approx(1.0)


def test_threshold_at_calibration_distance():
    config = dict(p_max=100.0, power_levels=16)
    at_250 = synthetic_topology([[250.0 ** -4]], **config)
    at_249 = synthetic_topology([[249.0 ** -4]], **config)
    full_power = StrategyProfile.from_strategies([Strategy(15, 0)])
    assert abs(10 * math.log10(sinr(0, full_power, at_250)) - 10.0) <= 0.1
    # 9.96 linear sits just below alpha = 10; the check is not relaxed
    assert not is_valid(0, full_power, at_250)
    assert is_valid(0, full_power, at_249)

    # full-power cutoff sits near 249.75 m
    assert is_valid(0, full_power, synthetic_topology([[249.7 ** -4]], **config))
    assert not is_valid(0, full_power, synthetic_topology([[249.8 ** -4]], **config))


def test_batch_utility_matches_scalar_path():
    topology = generate_topology(ScenarioConfig.desk(link_count=6), seed=4)
    rng = np.random.default_rng(9)
    profiles = [random_profile(topology, rng) for _ in range(50)]
    power_index = np.stack([p.power_index for p in profiles])
    channel = np.stack([p.channel for p in profiles])
    for mode in (DC, BC, CC, CC_NO_ALPHA):
        batch = network_utility_batch(power_index, channel, topology, mode)
        expected = [network_utility(p, topology, mode) for p in profiles]
        assert np.allclose(batch, expected, rtol=1e-12, atol=0.0)


def test_valid_utility_never_exceeds_unconstrained_utility():
    topology = generate_topology(ScenarioConfig.desk(link_count=10), seed=8)
    rng = np.random.default_rng(1)
    for _ in range(30):
        profile = random_profile(topology, rng)
        assert network_utility_valid(profile, topology, CC_NO_ALPHA) <= network_utility(profile, topology, CC_NO_ALPHA) + 1e-12
