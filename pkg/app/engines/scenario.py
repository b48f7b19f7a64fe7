"""
Scenario generation
Job: Build reproducible network instances (nodes, links, gain matrix,
per-link channel availability) from a ScenarioConfig
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from app.errors import ScenarioError
from app.models import ScenarioConfig, Topology
from app.units import db_to_linear, dbm_to_mw, linear_to_db, mw_to_dbm

logger = logging.getLogger("Scenario")

__all__ = [
    "channel_gain",
    "generate_topology",
    "synthetic_topology",
    "gains_from_positions",
    "power_levels",
    "load_config",
    "dbm_to_mw",
    "mw_to_dbm",
    "db_to_linear",
    "linear_to_db",
]


def channel_gain(distance: float, gamma: float) -> float:
    """g = d^-gamma for a transmitter-receiver distance in meters"""
    if distance <= 0:
        raise ScenarioError(f"Channel gain is undefined for distance {distance} m (co-located nodes)")
    return float(distance) ** (-gamma)


def power_levels(config: ScenarioConfig) -> np.ndarray:
    """
    The Q positive transmit levels k * P_max / Q, k = 1..Q (mW).
    OFF is a separate strategy, not a level.
    """
    q = config.power_levels
    return np.arange(1, q + 1) * config.p_max / q


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a scenario JSON file (powers in dBm, threshold in dB)"""
    with open(path, "r") as f:
        return ScenarioConfig.from_file_dict(json.load(f))


def _place_nodes(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    positions = np.empty((config.node_count, 2))
    for k in range(config.node_count):
        for _ in range(config.max_retries):
            candidate = rng.uniform(0.0, config.area_side, size=2)
            if k == 0 or np.min(np.hypot(*(positions[:k] - candidate).T)) >= config.min_node_separation:
                positions[k] = candidate
                break
        else:
            raise ScenarioError(
                f"Could not place node {k} at least {config.min_node_separation} m from the others "
                f"after {config.max_retries} attempts"
            )
    return positions


def _region_channels(config: ScenarioConfig, rng: np.random.Generator) -> List[List[frozenset]]:
    cells = int(np.ceil(config.area_side / config.region_side))
    grid = []
    for _ in range(cells):
        row = []
        for _ in range(cells):
            size = int(rng.integers(config.avail_min, config.avail_max + 1))
            row.append(frozenset(int(c) for c in rng.choice(config.channel_count, size=size, replace=False)))
        grid.append(row)
    return grid


def _region_of(point: np.ndarray, config: ScenarioConfig, cells: int) -> tuple:
    ix = min(int(point[0] // config.region_side), cells - 1)
    iy = min(int(point[1] // config.region_side), cells - 1)
    return ix, iy


def gains_from_positions(positions: np.ndarray, links: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    """gains[i, j] = d(tx_i, rx_j)^-gamma with d clamped to the minimum node separation"""
    tx_points = positions[links[:, 0]]
    rx_points = positions[links[:, 1]]
    diff = tx_points[:, None, :] - rx_points[None, :, :]
    distance = np.hypot(diff[..., 0], diff[..., 1])
    # a node that transmits on one link and receives on another sits at distance 0
    distance = np.maximum(distance, config.min_node_separation)
    return distance ** (-config.path_loss_exponent)


def _draw_layout(config: ScenarioConfig, rng: np.random.Generator):
    positions = _place_nodes(config, rng)
    regions = _region_channels(config, rng)
    cells = len(regions)
    node_channels = [regions[ix][iy] for ix, iy in (_region_of(p, config, cells) for p in positions)]

    node_ids = np.arange(config.node_count)
    links = np.empty((config.link_count, 2), dtype=np.int64)
    availability = []
    for i in range(config.link_count):
        for _ in range(config.max_retries):
            tx = int(rng.integers(config.node_count))
            distance = np.hypot(*(positions - positions[tx]).T)
            neighbours = node_ids[(distance <= config.max_link_distance) & (node_ids != tx)]
            if neighbours.size == 0:
                continue
            rx = int(rng.choice(neighbours))
            usable = node_channels[tx] & node_channels[rx]
            if not usable:
                continue
            links[i] = (tx, rx)
            availability.append(tuple(sorted(usable)))
            break
        else:
            raise ScenarioError(
                f"Could not place link {i} within {config.max_link_distance} m with a common "
                f"available channel after {config.max_retries} attempts"
            )
    return positions, links, availability


def generate_topology(config: ScenarioConfig, seed: Optional[int] = None) -> Topology:
    """
    Random positional topology. Pure function of (config, seed); when seed is
    omitted config.rng_seed is used. A layout whose links cannot be placed is
    thrown away and the nodes are drawn again, up to config.max_layouts times.
    """
    seed = config.rng_seed if seed is None else seed
    rng = np.random.default_rng(seed)

    for attempt in range(1, config.max_layouts + 1):
        try:
            positions, links, availability = _draw_layout(config, rng)
            break
        except ScenarioError as e:
            failure = e
    else:
        raise ScenarioError(f"No usable layout in {config.max_layouts} attempts: {failure}")

    gains = gains_from_positions(positions, links, config)
    logger.debug(
        "Generated %d links over %d nodes (seed %d, layout %d)", config.link_count, config.node_count, seed, attempt
    )
    return Topology(
        gains=gains,
        availability=tuple(availability),
        config=config,
        positions=positions,
        links=links,
        source="positional",
    )


def synthetic_topology(
    gains: Sequence[Sequence[float]],
    availability: Optional[Iterable[Iterable[int]]] = None,
    **overrides,
) -> Topology:
    """
    Topology built from an explicit gain matrix (used for hand-made fixtures).
    Scenario parameters take the ScenarioConfig defaults; pass any ScenarioConfig
    field as an override (e.g. channel_count=2, power_levels=4).
    """
    matrix = np.asarray(gains, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise ScenarioError(f"Gain matrix must be square and non-empty, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)) or np.any(matrix <= 0):
        raise ScenarioError("All gains must be positive and finite")

    n = matrix.shape[0]
    channel_count = overrides.pop("channel_count", None)
    if availability is not None:
        sets = [tuple(sorted(set(int(c) for c in channels))) for channels in availability]
        if len(sets) != n:
            raise ScenarioError(f"Need one availability set per link ({n}), got {len(sets)}")
        if any(not s for s in sets):
            raise ScenarioError("Every link needs at least one available channel")
        if channel_count is None:
            channel_count = max(max(s) for s in sets) + 1
    else:
        channel_count = channel_count or 1
        sets = [tuple(range(channel_count))] * n
    if any(c < 0 or c >= channel_count for s in sets for c in s):
        raise ScenarioError(f"Availability refers to channels outside 0..{channel_count - 1}")

    values = {
        "node_count": max(2, 2 * n),
        "link_count": n,
        "channel_count": channel_count,
        "avail_min": 1,
        "avail_max": channel_count,
    }
    values.update(overrides)
    config = ScenarioConfig(**values)
    return Topology(gains=matrix, availability=tuple(sets), config=config, source="synthetic")
