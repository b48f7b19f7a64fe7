"""
Genetic algorithm baseline
Job: Centralised search over joint (power, channel) assignments maximising NU.
Power genes are real-coded in [0, P_max] and quantised on decode; channel
genes are categorical over each link's availability set.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from app.engines.phy import interference_vector, network_utility, network_utility_batch
from app.errors import GameSpecError
from app.models import CapacityKind, CapacityMode, GAConfig, GAResult, GenerationStats, StrategyProfile, Topology

logger = logging.getLogger("GA")


@dataclass
class Chromosome:
    power: np.ndarray
    channel: np.ndarray

    def copy(self) -> "Chromosome":
        return Chromosome(self.power.copy(), self.channel.copy())


def random_chromosome(topology: Topology, rng: np.random.Generator) -> Chromosome:
    n = topology.n_links
    power = rng.uniform(0.0, topology.config.p_max, size=n)
    channel = np.array([topology.availability[i][int(rng.integers(len(topology.availability[i])))] for i in range(n)])
    return Chromosome(power, channel.astype(np.int64))


def _quantise(power: np.ndarray, topology: Topology) -> np.ndarray:
    q = topology.config.power_levels
    step = topology.config.p_max / q
    level = np.clip(np.rint(power / step).astype(np.int64), 0, q)
    return level - 1


def decode_chromosome(chromosome: Chromosome, topology: Topology) -> StrategyProfile:
    """Nearest of {0} and the Q power levels; 0 maps to OFF"""
    power_index = _quantise(chromosome.power, topology)
    channel = np.where(power_index >= 0, chromosome.channel, -1)
    return StrategyProfile(power_index, channel.astype(np.int64))


def repair_constraints(chromosome: Chromosome, topology: Topology, alpha: Optional[float] = None) -> Chromosome:
    """
    Single pass in link order: an ON link whose SINR is below alpha gets its
    power gene zeroed, and the interference it caused is removed before the
    next link is checked.
    """
    alpha = topology.config.sinr_threshold if alpha is None else alpha
    repaired = chromosome.copy()
    profile = decode_chromosome(repaired, topology)
    power = profile.powers(topology.power_levels)
    channel = profile.channel
    gains = topology.gains
    interference = interference_vector(power, channel, gains)

    for link in range(topology.n_links):
        if power[link] <= 0:
            continue
        value = power[link] * gains[link, link] / (topology.noise + interference[link])
        if value >= alpha:
            continue
        shared = (power > 0) & (channel == channel[link])
        shared[link] = False
        interference = interference - np.where(shared, power[link] * gains[link], 0.0)
        power[link] = 0.0
        repaired.power[link] = 0.0
    return repaired


def sbx_crossover(
    parent_a: Chromosome,
    parent_b: Chromosome,
    ga_config: GAConfig,
    rng: np.random.Generator,
    p_max: float,
) -> Tuple[Chromosome, Chromosome]:
    """
    Simulated binary crossover on the power genes (spread factor from the
    polynomial distribution of order sbx_polynomial_order, genewise swap),
    clamped to [0, p_max]. Channel genes are exchanged genewise.
    """
    if len(parent_a.power) != len(parent_b.power):
        raise ValueError("Parents must have the same length")
    child_a, child_b = parent_a.copy(), parent_b.copy()
    if rng.random() >= ga_config.crossover_prob:
        return child_a, child_b

    n = len(parent_a.power)
    eta = ga_config.sbx_polynomial_order
    u = rng.random(n)
    beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)), (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)))
    a, b = parent_a.power, parent_b.power
    mid = 0.5 * (a + b)
    half = 0.5 * (a - b)
    first = mid + beta * half
    second = mid - beta * half

    swap = rng.random(n) < ga_config.genewise_swap_prob
    first, second = np.where(swap, second, first), np.where(swap, first, second)
    child_a.power = np.clip(first, 0.0, p_max)
    child_b.power = np.clip(second, 0.0, p_max)

    exchange = rng.random(n) < ga_config.genewise_swap_prob
    child_a.channel = np.where(exchange, parent_b.channel, parent_a.channel)
    child_b.channel = np.where(exchange, parent_a.channel, parent_b.channel)
    return child_a, child_b


def polynomial_mutation(value: float, lower: float, upper: float, eta: float, rng: np.random.Generator) -> float:
    """Bounded polynomial mutation of one real gene"""
    span = upper - lower
    if span <= 0:
        return lower
    delta_low = (value - lower) / span
    delta_high = (upper - value) / span
    u = rng.random()
    exponent = 1.0 / (eta + 1.0)
    if u < 0.5:
        term = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - delta_low) ** (eta + 1.0)
        delta = term ** exponent - 1.0
    else:
        term = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - delta_high) ** (eta + 1.0)
        delta = 1.0 - term ** exponent
    return float(np.clip(value + delta * span, lower, upper))


def _mutate(chromosome: Chromosome, topology: Topology, ga_config: GAConfig, rng: np.random.Generator) -> None:
    """Selective mutation: one uniformly chosen gene of the 2N"""
    n = topology.n_links
    gene = int(rng.integers(2 * n))
    link = gene % n
    if gene < n:
        chromosome.power[link] = polynomial_mutation(
            chromosome.power[link], 0.0, topology.config.p_max, ga_config.mutation_polynomial_order, rng
        )
    else:
        channels = topology.availability[link]
        chromosome.channel[link] = channels[int(rng.integers(len(channels)))]


def _fitness(population, topology: Topology, mode: CapacityMode, alpha: float) -> np.ndarray:
    profiles = [decode_chromosome(c, topology) for c in population]
    power_index = np.stack([p.power_index for p in profiles])
    channel = np.stack([p.channel for p in profiles])
    return network_utility_batch(power_index, channel, topology, mode, alpha)


def _tournament(fitness: np.ndarray, size: int, rng: np.random.Generator) -> int:
    entrants = rng.integers(len(fitness), size=size)
    return int(entrants[np.argmax(fitness[entrants])])


def ga_optimize(
    topology: Topology,
    capacity_mode: CapacityMode,
    ga_config: GAConfig,
    alpha: Optional[float] = None,
) -> GAResult:
    """
    Generational GA with tournament selection (with replacement), SBX,
    selective mutation, repair and elitism: the best
    (1 - replace_proportion) of each generation survive unchanged.
    """
    if capacity_mode.kind not in (CapacityKind.DISCRETE, CapacityKind.BINARY):
        raise GameSpecError("The GA optimises discrete or binary network capacity only")
    alpha = topology.config.sinr_threshold if alpha is None else alpha
    rng = np.random.default_rng(ga_config.rng_seed)
    size = ga_config.population_size
    survivors = max(1, size - int(round(ga_config.replace_proportion * size)))
    p_max = topology.config.p_max

    population = [repair_constraints(random_chromosome(topology, rng), topology, alpha) for _ in range(size)]
    fitness = _fitness(population, topology, capacity_mode, alpha)
    history = [GenerationStats(generation=0, best_nu=float(fitness.max()), mean_nu=float(fitness.mean()))]
    best_index = int(np.argmax(fitness))
    best, best_nu = population[best_index].copy(), float(fitness[best_index])
    stall = 0
    generation = 0

    for generation in range(1, ga_config.max_generations + 1):
        order = np.argsort(-fitness, kind="stable")
        next_population = [population[k] for k in order[:survivors]]
        offspring = []
        while len(offspring) < size - survivors:
            a = population[_tournament(fitness, ga_config.tournament_size, rng)]
            b = population[_tournament(fitness, ga_config.tournament_size, rng)]
            for child in sbx_crossover(a, b, ga_config, rng, p_max):
                if rng.random() < ga_config.mutation_prob:
                    _mutate(child, topology, ga_config, rng)
                offspring.append(repair_constraints(child, topology, alpha))
        population = next_population + offspring[: size - survivors]
        fitness = _fitness(population, topology, capacity_mode, alpha)

        top = int(np.argmax(fitness))
        history.append(GenerationStats(generation=generation, best_nu=float(fitness[top]), mean_nu=float(fitness.mean())))
        if fitness[top] > best_nu + 1e-9 * max(1.0, abs(best_nu)):
            best, best_nu = population[top].copy(), float(fitness[top])
            stall = 0
        else:
            stall += 1
            if stall >= ga_config.stall_generations:
                logger.debug("Stopping after %d generations without improvement", stall)
                break

    profile = decode_chromosome(best, topology)
    best_nu = network_utility(profile, topology, capacity_mode, alpha)
    logger.info("GA finished after %d generations: best NU %.3f", generation, best_nu)
    return GAResult(best_profile=profile, best_nu=best_nu, generations=generation, history=history)


def ga_progress_frame(result: GAResult) -> pd.DataFrame:
    return pd.DataFrame([stats.model_dump() for stats in result.history])
