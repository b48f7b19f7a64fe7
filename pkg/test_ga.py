"""
Genetic algorithm baseline and its operators
"""
import numpy as np
import pytest
from pydantic import ValidationError

from app.engines.dynamics import run_repeated_game
from app.engines.ga import (
    Chromosome,
    decode_chromosome,
    ga_optimize,
    ga_progress_frame,
    polynomial_mutation,
    random_chromosome,
    repair_constraints,
    sbx_crossover,
)
from app.engines.oracle import compare_oracle
from app.engines.phy import network_utility, profile_metrics
from app.engines.scenario import generate_topology, synthetic_topology
from app.errors import GameSpecError
from app.models import CapacityMode, EngineConfig, GAConfig, GameSpec, InfoModel, ScenarioConfig, Strategy

DC = CapacityMode.dc_alpha()
SMALL_GA = GAConfig(population_size=32, max_generations=150, tournament_size=4, stall_generations=40, rng_seed=3)


def tiny_config():
    return ScenarioConfig.desk(node_count=12, link_count=3, channel_count=2, power_levels=4)


# ============================================================================
# OPERATORS
# ============================================================================

def test_ga_config_limits():
    with pytest.raises(ValidationError):
        GAConfig(population_size=4, tournament_size=8)
    full = GAConfig.full_scale()
    assert full.population_size == 1000
    assert full.max_generations == 20000
    assert full.replace_proportion == 0.9


def test_decode_quantises_to_nearest_level():
    topology = synthetic_topology([[1.0]], p_max=64.0, power_levels=2, noise_power=1.0)
    for power, expected in ((0.0, Strategy()), (10.0, Strategy()), (20.0, Strategy(0, 0)), (60.0, Strategy(1, 0))):
        profile = decode_chromosome(Chromosome(np.array([power]), np.array([0])), topology)
        assert profile.strategy(0) == expected


def test_repair_zeroes_only_what_it_must():
    # both links hear each other as loudly as themselves
    topology = synthetic_topology(
        [[1.0, 1.0], [1.0, 1.0]], availability=[(0,), (0,)], p_max=64.0, power_levels=2, noise_power=1.0
    )
    chromosome = Chromosome(np.array([64.0, 64.0]), np.array([0, 0]))
    repaired = repair_constraints(chromosome, topology)
    assert list(repaired.power) == [0.0, 64.0]
    assert list(chromosome.power) == [64.0, 64.0]
    assert network_utility(decode_chromosome(repaired, topology), topology, DC) == pytest.approx(6.0)


def test_repaired_chromosomes_are_always_valid():
    topology = generate_topology(ScenarioConfig.desk(link_count=10), seed=6)
    rng = np.random.default_rng(0)
    for _ in range(20):
        profile = decode_chromosome(repair_constraints(random_chromosome(topology, rng), topology), topology)
        nu = network_utility(profile, topology, DC)
        metrics = profile_metrics(profile, topology, DC)
        assert metrics.valid_links == metrics.active_links
        assert nu >= 0


def test_sbx_keeps_identical_parents_and_bounds():
    rng = np.random.default_rng(1)
    parent = Chromosome(np.array([10.0, 50.0, 90.0]), np.array([0, 1, 0]))
    a, b = sbx_crossover(parent, parent.copy(), GAConfig(crossover_prob=1.0), rng, 100.0)
    assert np.array_equal(a.power, parent.power)
    assert np.array_equal(b.power, parent.power)

    for _ in range(200):
        x = Chromosome(rng.uniform(0, 100, 5), rng.integers(0, 3, 5))
        y = Chromosome(rng.uniform(0, 100, 5), rng.integers(0, 3, 5))
        for child in sbx_crossover(x, y, GAConfig(crossover_prob=1.0), rng, 100.0):
            assert np.all((child.power >= 0) & (child.power <= 100.0))
            assert np.all((child.channel == x.channel) | (child.channel == y.channel))

    a_extreme = Chromosome(np.array([99.0, 1.0]), np.array([0, 0]))
    b_extreme = Chromosome(np.array([60.0, 40.0]), np.array([1, 1]))
    for _ in range(2000):
        for child in sbx_crossover(a_extreme, b_extreme, GAConfig(crossover_prob=1.0), rng, 100.0):
            assert child.power.max() <= 100.0
            assert child.power.min() >= 0.0


def test_sbx_without_crossover_copies_parents():
    rng = np.random.default_rng(2)
    x = Chromosome(np.array([1.0, 2.0]), np.array([0, 0]))
    y = Chromosome(np.array([3.0, 4.0]), np.array([1, 1]))
    a, b = sbx_crossover(x, y, GAConfig(crossover_prob=0.0), rng, 10.0)
    assert np.array_equal(a.power, x.power) and np.array_equal(b.power, y.power)
    assert a.power is not x.power
    with pytest.raises(ValueError):
        sbx_crossover(x, Chromosome(np.array([1.0]), np.array([0])), GAConfig(), rng, 10.0)
    with pytest.raises(TypeError):
        sbx_crossover(x, y, GAConfig(), rng)


def test_polynomial_mutation_stays_in_bounds():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        value = polynomial_mutation(float(rng.uniform(0, 100)), 0.0, 100.0, 20.0, rng)
        assert 0.0 <= value <= 100.0
    assert polynomial_mutation(5.0, 5.0, 5.0, 20.0, rng) == 5.0


# ============================================================================
# OPTIMISATION
# ============================================================================

def test_ga_rejects_continuous_capacity():
    topology = generate_topology(tiny_config(), seed=1)
    with pytest.raises(GameSpecError):
        ga_optimize(topology, CapacityMode.cc_alpha(), SMALL_GA)


def test_ga_finds_single_link_optimum():
    topology = synthetic_topology([[1.0]], availability=[(0, 1)], p_max=100.0, power_levels=4, noise_power=1.0)
    result = ga_optimize(topology, DC, SMALL_GA)
    assert result.best_nu == pytest.approx(6.0)
    assert result.best_nu == pytest.approx(compare_oracle(topology, DC).optimum_nu)


def test_ga_history_is_monotone_and_reproducible():
    topology = generate_topology(ScenarioConfig.desk(link_count=8), seed=12)
    first = ga_optimize(topology, DC, SMALL_GA)
    second = ga_optimize(topology, DC, SMALL_GA)
    assert first.best_nu == second.best_nu
    assert first.best_profile == second.best_profile

    frame = ga_progress_frame(first)
    assert list(frame.columns) == ["generation", "best_nu", "mean_nu"]
    assert frame["generation"].iloc[0] == 0
    assert len(frame) == first.generations + 1
    assert frame["best_nu"].is_monotonic_increasing
    assert first.best_nu == pytest.approx(frame["best_nu"].max())
    for link in range(topology.n_links):
        strategy = first.best_profile.strategy(link)
        if strategy.is_on:
            assert strategy.channel in topology.availability[link]


def test_ga_and_potential_games_against_exhaustive_optimum():
    config = tiny_config()
    reached = 0
    ratios = []
    instances = 20
    for k in range(instances):
        topology = generate_topology(config, seed=300 + k)
        optimum = compare_oracle(topology, DC).optimum_nu
        result = ga_optimize(topology, DC, SMALL_GA.model_copy(update={"rng_seed": k}))
        assert result.best_nu <= optimum + 1e-9
        if result.best_nu >= 0.95 * optimum:
            reached += 1

        spec = GameSpec(capacity_mode=DC, info_model=InfoModel.POTENTIAL_MARGINAL)
        trace = run_repeated_game(topology, spec, EngineConfig(rng_seed=k))
        achieved = network_utility(trace.final_profile, topology, DC)
        ratios.append(achieved / optimum if optimum > 0 else 1.0)
    assert reached >= 0.9 * instances
    assert np.mean(ratios) >= 0.85
