"""
Scenario generation, unit conversions and config files
Run with: pytest test_scenario.py  (or python run_tests.py)
"""
import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.engines.scenario import (
    channel_gain,
    db_to_linear,
    dbm_to_mw,
    generate_topology,
    linear_to_db,
    load_config,
    mw_to_dbm,
    power_levels,
    synthetic_topology,
)
from app.errors import ScenarioError
from app.models import ScenarioConfig


def test_unit_conversions():
    assert dbm_to_mw(20.0) == pytest.approx(100.0)
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert abs(mw_to_dbm(dbm_to_mw(-85.9)) + 85.9) <= 1e-12
    assert abs(linear_to_db(db_to_linear(7.5)) - 7.5) <= 1e-12
    with pytest.raises(ValueError):
        mw_to_dbm(0.0)
    with pytest.raises(ValueError):
        linear_to_db(-1.0)


def test_channel_gain():
    assert channel_gain(250.0, 4.0) == pytest.approx(250.0 ** -4)
    assert channel_gain(1.0, 4.0) == 1.0
    with pytest.raises(ScenarioError):
        channel_gain(0.0, 4.0)


def test_calibration_gives_10_db_at_250_m():
    config = ScenarioConfig()
    sinr = config.p_max * channel_gain(250.0, config.path_loss_exponent) / config.noise_power
    assert abs(linear_to_db(sinr) - 10.0) <= 0.1


def test_power_levels_exclude_off():
    levels = power_levels(ScenarioConfig(power_levels=4, p_max=100.0))
    assert np.allclose(levels, [25.0, 50.0, 75.0, 100.0])
    assert len(power_levels(ScenarioConfig())) == 16


def test_desk_scale_keeps_density():
    config = ScenarioConfig.desk(node_count=50)
    assert config.area_side == pytest.approx(1200.0)
    assert config.avail_min <= config.avail_max <= config.channel_count


def test_config_validation():
    with pytest.raises(ValidationError):
        ScenarioConfig(channel_count=4, avail_min=1, avail_max=5)
    with pytest.raises(ValidationError):
        ScenarioConfig(power_levels=1)
    with pytest.raises(ValidationError):
        ScenarioConfig(channel_count=2, avail_min=1, avail_max=2, channel_bandwidths=[1.0])


def test_generate_topology_is_reproducible():
    config = ScenarioConfig.desk(link_count=8)
    a = generate_topology(config, seed=11)
    b = generate_topology(config, seed=11)
    c = generate_topology(config, seed=12)
    assert np.array_equal(a.gains, b.gains)
    assert a.availability == b.availability
    assert np.array_equal(a.links, b.links)
    assert not np.array_equal(a.gains, c.gains)


def test_generated_topology_invariants():
    config = ScenarioConfig.desk(link_count=12)
    topology = generate_topology(config, seed=5)
    assert topology.n_links == 12
    assert topology.gains.shape == (12, 12)
    assert np.all(topology.gains > 0)
    for i, (tx, rx) in enumerate(topology.links):
        assert tx != rx
        distance = np.hypot(*(topology.positions[tx] - topology.positions[rx]))
        assert distance <= config.max_link_distance
        assert topology.gains[i, i] == pytest.approx(max(distance, config.min_node_separation) ** -4.0)
        channels = topology.availability[i]
        assert len(channels) >= 1
        assert list(channels) == sorted(set(channels))
        assert all(0 <= c < config.channel_count for c in channels)


def test_node_separation_is_respected():
    config = ScenarioConfig.desk(node_count=30, link_count=5, min_node_separation=5.0)
    topology = generate_topology(config, seed=2)
    diff = topology.positions[:, None, :] - topology.positions[None, :, :]
    distance = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(distance, np.inf)
    assert distance.min() >= 5.0


def test_generation_fails_loudly_when_links_cannot_be_placed():
    # nodes at least 5 m apart, links limited to 1 m
    config = ScenarioConfig(
        area_side=1000.0, region_side=1000.0, node_count=2, link_count=1, channel_count=1,
        avail_min=1, avail_max=1, min_node_separation=5.0, max_link_distance=1.0, max_retries=20,
    )
    with pytest.raises(ScenarioError):
        generate_topology(config, seed=0)


def test_two_node_topology():
    config = ScenarioConfig(area_side=50.0, node_count=2, link_count=1, channel_count=2, avail_min=2, avail_max=2)
    topology = generate_topology(config, seed=3)
    assert topology.n_links == 1
    assert topology.availability[0] == (0, 1)


@pytest.mark.parametrize("config", [
    ScenarioConfig.desk(node_count=2, link_count=1),
    ScenarioConfig(node_count=2, link_count=1, max_retries=20),
])
def test_sparse_layouts_are_redrawn_until_a_link_fits(config):
    for seed in range(20):
        topology = generate_topology(config, seed=seed)
        assert topology.n_links == 1
        tx, rx = topology.links[0]
        assert tx != rx
        assert np.hypot(*(topology.positions[tx] - topology.positions[rx])) <= config.max_link_distance
        assert topology.availability[0]
    again = generate_topology(config, seed=7)
    assert np.array_equal(again.positions, generate_topology(config, seed=7).positions)


def test_synthetic_topology_validation():
    topology = synthetic_topology([[1.0, 0.1], [0.2, 1.0]], availability=[(0,), (0, 1)])
    assert topology.config.channel_count == 2
    assert topology.source == "synthetic"
    with pytest.raises(ScenarioError):
        synthetic_topology([[1.0, 0.1]])
    with pytest.raises(ScenarioError):
        synthetic_topology([[1.0, 0.0], [0.1, 1.0]])
    with pytest.raises(ScenarioError):
        synthetic_topology([[1.0]], availability=[()])
    with pytest.raises(ScenarioError):
        synthetic_topology([[1.0]], availability=[(3,)], channel_count=2)


def test_load_config_converts_units(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({
        "node_count": 20,
        "link_count": 4,
        "channel_count": 3,
        "avail_min": 1,
        "avail_max": 2,
        "p_max_dbm": 20.0,
        "noise_power_dbm": -85.9,
        "sinr_threshold_db": 10.0,
    }))
    config = load_config(path)
    assert config.p_max == pytest.approx(100.0)
    assert config.sinr_threshold == pytest.approx(10.0)
    assert config.noise_power == pytest.approx(dbm_to_mw(-85.9))
    again = ScenarioConfig.from_file_dict(config.to_file_dict())
    assert again.p_max == pytest.approx(config.p_max, rel=1e-12)


def test_example_scenario_file_loads():
    config = load_config("example_scenario.json")
    assert config.link_count == 10
    assert config.sinr_threshold == pytest.approx(10.0)
