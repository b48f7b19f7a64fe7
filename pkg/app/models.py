from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import GameSpecError
from app.units import db_to_linear, dbm_to_mw, linear_to_db, mw_to_dbm


# ============================================================================
# CAPACITY / GAME SPECS
# ============================================================================

class CapacityKind(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"
    BINARY = "binary"


class CapacityMode(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: CapacityKind = Field(..., description="Capacity definition (Shannon, Hartley levels, binary)")
    enforce_threshold: bool = Field(default=True, description="Whether the SINR threshold gates capacity")

    @model_validator(mode="after")
    def _threshold_rules(self):
        if self.kind != CapacityKind.CONTINUOUS and not self.enforce_threshold:
            raise ValueError(f"{self.kind.value} capacity always enforces the SINR threshold")
        return self

    @classmethod
    def cc_no_alpha(cls) -> "CapacityMode":
        return cls(kind=CapacityKind.CONTINUOUS, enforce_threshold=False)

    @classmethod
    def cc_alpha(cls) -> "CapacityMode":
        return cls(kind=CapacityKind.CONTINUOUS)

    @classmethod
    def dc_alpha(cls) -> "CapacityMode":
        return cls(kind=CapacityKind.DISCRETE)

    @classmethod
    def bc_alpha(cls) -> "CapacityMode":
        return cls(kind=CapacityKind.BINARY)


class InfoModel(str, Enum):
    LOCAL = "local"
    POTENTIAL_IDENTICAL = "potential_identical"
    POTENTIAL_MARGINAL = "potential_marginal"


class GameSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    capacity_mode: CapacityMode = Field(..., description="Utility regime")
    info_model: InfoModel = Field(default=InfoModel.LOCAL, description="Local or potential information model")
    power_correction: bool = Field(default=False, description="Add the low-power bonus to local utilities")
    alpha: float = Field(default=10.0, gt=0, description="SINR threshold (linear)")

    @model_validator(mode="after")
    def _consistent(self):
        if self.power_correction and self.info_model != InfoModel.LOCAL:
            raise ValueError("power_correction is only defined for the local game")
        if self.power_correction and not self.capacity_mode.enforce_threshold:
            raise ValueError("power_correction cannot be combined with CC-noalpha")
        return self

    @property
    def is_potential(self) -> bool:
        return self.info_model != InfoModel.LOCAL


# ============================================================================
# SCENARIO
# ============================================================================

DEFAULT_NOISE_DBM = -85.9


class ScenarioConfig(BaseModel):
    """Physical scenario; all powers linear (mW), threshold linear."""
    model_config = ConfigDict(frozen=True)

    area_side: float = Field(default=2400.0, gt=0, description="Side of the square deployment area (m)")
    node_count: int = Field(default=200, ge=2, description="Number of nodes")
    link_count: int = Field(default=200, ge=1, description="Number of links (players)")
    channel_count: int = Field(default=10, ge=1, description="Number of channels F")
    region_side: float = Field(default=100.0, gt=0, description="Side of an availability region (m)")
    avail_min: int = Field(default=3, ge=1, description="Minimum channels sensed available per region")
    avail_max: int = Field(default=8, ge=1, description="Maximum channels sensed available per region")
    p_max: float = Field(default=100.0, gt=0, description="Maximum transmit power (mW)")
    power_levels: int = Field(default=16, ge=2, description="Number of positive power levels Q")
    path_loss_exponent: float = Field(default=4.0, gt=0, description="Path-loss exponent gamma")
    sinr_threshold: float = Field(default=10.0, gt=1, description="SINR threshold alpha (linear)")
    noise_power: float = Field(default_factory=lambda: dbm_to_mw(DEFAULT_NOISE_DBM), gt=0, description="Noise power P_N (mW)")
    max_modulation: int = Field(default=256, ge=2, description="Largest modulation order M_max")
    channel_bandwidths: List[float] = Field(default_factory=list, description="Normalised bandwidth per channel (empty = all 1)")
    max_link_distance: float = Field(default=250.0, gt=0, description="Maximum tx-rx distance of a link (m)")
    min_node_separation: float = Field(default=1.0, gt=0, description="Minimum distance between nodes (m)")
    max_retries: int = Field(default=1000, ge=1, description="Retries for node placement and link sampling")
    max_layouts: int = Field(default=1000, ge=1, description="Fresh node layouts drawn before generation gives up")
    rng_seed: int = Field(default=1, description="Default generation seed")

    @model_validator(mode="after")
    def _check(self):
        if not self.avail_min <= self.avail_max <= self.channel_count:
            raise ValueError(
                f"Need avail_min <= avail_max <= channel_count, got "
                f"{self.avail_min}, {self.avail_max}, {self.channel_count}"
            )
        if self.channel_bandwidths:
            if len(self.channel_bandwidths) != self.channel_count:
                raise ValueError("channel_bandwidths must have one entry per channel")
            if any(w <= 0 for w in self.channel_bandwidths):
                raise ValueError("All channel bandwidths must be positive")
        return self

    @property
    def bandwidths(self) -> np.ndarray:
        if self.channel_bandwidths:
            return np.asarray(self.channel_bandwidths, dtype=float)
        return np.ones(self.channel_count)

    @classmethod
    def desk(cls, node_count: int = 40, link_count: int = 10, channel_count: int = 4, **overrides) -> "ScenarioConfig":
        """Desk-scale scenario keeping the default node density (200 nodes on 2400 m)."""
        avail_min = max(1, round(0.3 * channel_count))
        avail_max = max(avail_min, min(channel_count, round(0.8 * channel_count)))
        values: Dict[str, Any] = {
            "node_count": node_count,
            "link_count": link_count,
            "channel_count": channel_count,
            "area_side": 2400.0 * (node_count / 200.0) ** 0.5,
            "avail_min": avail_min,
            "avail_max": avail_max,
        }
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_file_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        """Build from the on-disk form (powers in dBm, threshold in dB)."""
        values = dict(data)
        if "p_max_dbm" in values:
            values["p_max"] = dbm_to_mw(values.pop("p_max_dbm"))
        if "noise_power_dbm" in values:
            values["noise_power"] = dbm_to_mw(values.pop("noise_power_dbm"))
        if "sinr_threshold_db" in values:
            values["sinr_threshold"] = db_to_linear(values.pop("sinr_threshold_db"))
        return cls(**values)

    def to_file_dict(self) -> Dict[str, Any]:
        data = self.model_dump()
        data["p_max_dbm"] = mw_to_dbm(data.pop("p_max"))
        data["noise_power_dbm"] = mw_to_dbm(data.pop("noise_power"))
        data["sinr_threshold_db"] = linear_to_db(data.pop("sinr_threshold"))
        return data


# ============================================================================
# STRATEGIES, PROFILES, TOPOLOGY (numeric carriers)
# ============================================================================

class StrategyKind(str, Enum):
    OFF = "off"
    ON = "on"


@dataclass(frozen=True, slots=True)
class Strategy:
    """(power level, channel) of one link; index -1 on both means OFF."""
    power_index: int = -1
    channel: int = -1

    @property
    def kind(self) -> StrategyKind:
        return StrategyKind.OFF if self.power_index < 0 else StrategyKind.ON

    @property
    def is_on(self) -> bool:
        return self.power_index >= 0

    def __str__(self) -> str:
        if not self.is_on:
            return "OFF"
        return f"(ch{self.channel},p{self.power_index + 1})"


OFF = Strategy()


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    power_index: np.ndarray
    channel: np.ndarray

    def __post_init__(self):
        power_index = np.array(self.power_index, dtype=np.int64)
        channel = np.array(self.channel, dtype=np.int64)
        if power_index.shape != channel.shape or power_index.ndim != 1:
            raise ValueError("power_index and channel must be 1-D arrays of equal length")
        channel[power_index < 0] = -1
        power_index[channel < 0] = -1
        power_index.setflags(write=False)
        channel.setflags(write=False)
        object.__setattr__(self, "power_index", power_index)
        object.__setattr__(self, "channel", channel)

    @classmethod
    def all_off(cls, n_links: int) -> "StrategyProfile":
        return cls(np.full(n_links, -1), np.full(n_links, -1))

    @classmethod
    def from_strategies(cls, strategies: List[Strategy]) -> "StrategyProfile":
        return cls(
            np.array([s.power_index for s in strategies], dtype=np.int64),
            np.array([s.channel for s in strategies], dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.power_index)

    @property
    def on_mask(self) -> np.ndarray:
        return self.power_index >= 0

    def strategy(self, link: int) -> Strategy:
        return Strategy(int(self.power_index[link]), int(self.channel[link]))

    def strategies(self) -> List[Strategy]:
        return [self.strategy(i) for i in range(len(self))]

    def with_strategy(self, link: int, strategy: Strategy) -> "StrategyProfile":
        return self.with_strategies({link: strategy})

    def with_strategies(self, updates: Dict[int, Strategy]) -> "StrategyProfile":
        power_index = self.power_index.copy()
        channel = self.channel.copy()
        for link, strategy in updates.items():
            power_index[link] = strategy.power_index
            channel[link] = strategy.channel
        return StrategyProfile(power_index, channel)

    def powers(self, levels: np.ndarray) -> np.ndarray:
        """Transmit power per link in mW (0 when OFF)."""
        return np.where(self.on_mask, levels[np.maximum(self.power_index, 0)], 0.0)

    def key(self) -> bytes:
        return self.power_index.tobytes() + self.channel.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, StrategyProfile):
            return NotImplemented
        return np.array_equal(self.power_index, other.power_index) and np.array_equal(self.channel, other.channel)

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return "StrategyProfile([" + ", ".join(str(s) for s in self.strategies()) + "])"


@dataclass(frozen=True, eq=False)
class Topology:
    """
    Immutable network instance. gains[i, j] is the linear gain from the
    transmitter of link i to the receiver of link j.
    """
    gains: np.ndarray
    availability: Tuple[Tuple[int, ...], ...]
    config: ScenarioConfig
    positions: Optional[np.ndarray] = None
    links: Optional[np.ndarray] = None
    source: str = "positional"
    _cache: Dict[Any, Any] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("gains", "positions", "links"):
            value = getattr(self, name)
            if value is not None:
                value = np.array(value)
                value.setflags(write=False)
                object.__setattr__(self, name, value)

    @property
    def n_links(self) -> int:
        return self.gains.shape[0]

    @property
    def direct_gains(self) -> np.ndarray:
        return np.diagonal(self.gains)

    @property
    def power_levels(self) -> np.ndarray:
        if "power_levels" not in self._cache:
            q = self.config.power_levels
            levels = np.arange(1, q + 1) * self.config.p_max / q
            levels.setflags(write=False)
            self._cache["power_levels"] = levels
        return self._cache["power_levels"]

    @property
    def bandwidths(self) -> np.ndarray:
        return self.config.bandwidths

    @property
    def noise(self) -> float:
        return self.config.noise_power


# ============================================================================
# LABELS
# ============================================================================

class RunnerKind(str, Enum):
    GAME = "game"
    LEARNING = "learning"
    GA = "ga"


class LearningAlgorithm(str, Enum):
    FS = "FS"
    HM = "HM"


_FAMILIES = {
    "CC-noalpha": CapacityMode.cc_no_alpha,
    "CC-alpha": CapacityMode.cc_alpha,
    "DC-alpha": CapacityMode.dc_alpha,
    "BC-alpha": CapacityMode.bc_alpha,
    "CCP-alpha": CapacityMode.cc_alpha,
    "DCP-alpha": CapacityMode.dc_alpha,
    "BCP-alpha": CapacityMode.bc_alpha,
}

_INFO_MODELS = {
    "local": InfoModel.LOCAL,
    "potential": InfoModel.POTENTIAL_MARGINAL,
    "potential-marginal": InfoModel.POTENTIAL_MARGINAL,
    "potential-identical": InfoModel.POTENTIAL_IDENTICAL,
}


class StrategyLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str = Field(..., description="Canonical label")
    runner: RunnerKind
    capacity_mode: CapacityMode
    game_spec: Optional[GameSpec] = None
    algorithm: Optional[LearningAlgorithm] = None


def parse_label(text: str, alpha: float = 10.0) -> StrategyLabel:
    """
    Parse an experiment label such as ``DC-alpha/local``, ``BCP-alpha/HM``
    or ``GA-DC``. The Greek letter is accepted in place of ``alpha``.
    """
    canonical = text.strip().replace("α", "alpha")
    if canonical.upper() in ("GA-DC", "GA-BC"):
        mode = CapacityMode.dc_alpha() if canonical.upper() == "GA-DC" else CapacityMode.bc_alpha()
        return StrategyLabel(text=canonical.upper(), runner=RunnerKind.GA, capacity_mode=mode)

    family, _, tail = canonical.partition("/")
    if family not in _FAMILIES or not tail:
        raise GameSpecError(f"Unknown strategy label: {text!r}")
    mode = _FAMILIES[family]()
    corrected = family.startswith(("CCP", "DCP", "BCP"))

    if tail.upper() in ("FS", "HM"):
        if not mode.enforce_threshold:
            raise GameSpecError("Learning runs need a thresholded utility")
        spec = GameSpec(capacity_mode=mode, power_correction=corrected, alpha=alpha)
        return StrategyLabel(
            text=f"{family}/{tail.upper()}",
            runner=RunnerKind.LEARNING,
            capacity_mode=mode,
            game_spec=spec,
            algorithm=LearningAlgorithm(tail.upper()),
        )

    info = _INFO_MODELS.get(tail.lower())
    if info is None:
        raise GameSpecError(f"Unknown information model in label: {text!r}")
    try:
        spec = GameSpec(capacity_mode=mode, info_model=info, power_correction=corrected, alpha=alpha)
    except ValueError as e:
        raise GameSpecError(f"Inconsistent label {text!r}: {e}") from e
    return StrategyLabel(text=f"{family}/{tail.lower()}", runner=RunnerKind.GAME, capacity_mode=mode, game_spec=spec)


# ============================================================================
# ENGINE / LEARNING / GA CONFIGS
# ============================================================================

class Scheduler(str, Enum):
    ROUND_ROBIN = "round_robin"
    ASYNCHRONOUS = "asynchronous"


class ResponseRule(str, Enum):
    BEST = "best"
    BETTER = "better"


class EngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheduler: Scheduler = Field(default=Scheduler.ROUND_ROBIN, description="Who plays at each step")
    response_rule: ResponseRule = Field(default=ResponseRule.BEST, description="Best or better response")
    max_steps: int = Field(default=20000, gt=0, description="Step budget")
    quiescence_window: Optional[int] = Field(default=None, ge=1, description="Quiet steps before an NE check (default 3N)")
    phase_offset: int = Field(default=0, ge=0, description="Round-robin starting player")
    rng_seed: int = Field(default=0, description="Seed for initial profile and scheduling")
    record_trajectory: bool = Field(default=True, description="Keep per-step histories")
    cycle_memory: int = Field(default=4096, ge=1, description="Distinct profiles remembered for cycle detection")


class LearningScheduler(str, Enum):
    SYNCHRONOUS = "synchronous"
    ASYNCHRONOUS = "asynchronous"


class CCESpan(str, Enum):
    FULL = "full"
    WINDOW = "window"


class LearningConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    algorithm: LearningAlgorithm = Field(default=LearningAlgorithm.FS, description="FS exponential weights or HM regret matching")
    beta: float = Field(default=0.1, gt=0, description="FS learning parameter")
    total_steps: int = Field(default=200000, ge=1, description="Learning horizon T")
    averaging_window: float = Field(default=0.1, gt=0, le=1, description="Fraction of final steps used for reporting")
    scheduler: LearningScheduler = Field(default=LearningScheduler.SYNCHRONOUS, description="Which players update each step")
    rng_seed: int = Field(default=0)
    record_joint_play: bool = Field(default=False, description="Count joint profiles for the CCE audit")
    cce_span: CCESpan = Field(default=CCESpan.FULL, description="Steps whose joint play is counted: the whole run or the averaging window")
    track_links: List[int] = Field(default_factory=list, description="Links whose mixed strategy is sampled over time")
    track_every: int = Field(default=100, ge=1, description="Sampling period of tracked mixed strategies")


class GAConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    population_size: int = Field(default=64, ge=2)
    max_generations: int = Field(default=500, ge=1)
    replace_proportion: float = Field(default=0.9, gt=0, le=1)
    tournament_size: int = Field(default=8, ge=1)
    crossover_prob: float = Field(default=0.9, ge=0, le=1)
    genewise_swap_prob: float = Field(default=0.5, ge=0, le=1)
    sbx_polynomial_order: float = Field(default=10.0, gt=0)
    mutation_prob: float = Field(default=0.1, ge=0, le=1)
    mutation_polynomial_order: float = Field(default=20.0, gt=0)
    stall_generations: int = Field(default=100, ge=1)
    rng_seed: int = Field(default=0)

    @model_validator(mode="after")
    def _tournament_fits(self):
        if self.tournament_size > self.population_size:
            raise ValueError("tournament_size cannot exceed population_size")
        return self

    @classmethod
    def full_scale(cls, **overrides) -> "GAConfig":
        values: Dict[str, Any] = {
            "population_size": 1000,
            "max_generations": 20000,
            "tournament_size": 500,
            "stall_generations": 20000,
        }
        values.update(overrides)
        return cls(**values)


# ============================================================================
# RESULTS
# ============================================================================

class RunTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    converged: bool = False
    cycle_detected: bool = False
    steps_used: int = 0
    player_actions: int = Field(default=0, description="Individual player decisions taken")
    strategy_changes: int = Field(default=0, description="Decisions that changed a strategy")
    final_profile: StrategyProfile
    nu_history: List[float] = Field(default_factory=list)
    nu_valid_history: List[float] = Field(default_factory=list)
    valid_links_history: List[int] = Field(default_factory=list)
    active_links_history: List[int] = Field(default_factory=list)
    acting_history: List[List[int]] = Field(default_factory=list)
    changed_history: List[List[int]] = Field(default_factory=list)


class LearningTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    algorithm: LearningAlgorithm
    total_steps: int
    window_start: int
    nu_history: List[float] = Field(default_factory=list)
    nu_valid_history: List[float] = Field(default_factory=list)
    valid_links_history: List[int] = Field(default_factory=list)
    active_links_history: List[int] = Field(default_factory=list)
    discrete_capacity_history: List[float] = Field(default_factory=list)
    mean_power_history: List[float] = Field(default_factory=list)
    final_probabilities: List[np.ndarray] = Field(default_factory=list)
    cumulative_utility: List[np.ndarray] = Field(default_factory=list, description="Sum over t of u_i(s, s_-i^t) per own strategy")
    realized_utility: List[float] = Field(default_factory=list, description="Sum over t of the realized payoff")
    joint_counts: Dict[Tuple[int, ...], int] = Field(default_factory=dict)
    q_history: Dict[int, List[np.ndarray]] = Field(default_factory=dict)
    q_history_steps: List[int] = Field(default_factory=list)

    def _window_mean(self, values: List[float]) -> float:
        window = values[self.window_start:]
        return float(np.mean(window)) if window else 0.0

    @property
    def mean_nu(self) -> float:
        return self._window_mean(self.nu_history)

    @property
    def mean_nu_valid(self) -> float:
        return self._window_mean(self.nu_valid_history)

    @property
    def mean_valid_links(self) -> float:
        return self._window_mean(self.valid_links_history)

    @property
    def mean_active_links(self) -> float:
        return self._window_mean(self.active_links_history)

    @property
    def mean_discrete_capacity(self) -> float:
        return self._window_mean(self.discrete_capacity_history)

    @property
    def mean_power(self) -> float:
        return self._window_mean(self.mean_power_history)


class CCEReport(BaseModel):
    gap: float = Field(..., description="Max over players and fixed deviations of (deviation - equilibrium payoff)")
    per_player_gap: List[float] = Field(default_factory=list)
    support_size: int = 0
    samples: int = 0
    truncated: bool = False
    low_confidence: bool = False


class GenerationStats(BaseModel):
    generation: int
    best_nu: float
    mean_nu: float


class GAResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    best_profile: StrategyProfile
    best_nu: float
    generations: int
    history: List[GenerationStats] = Field(default_factory=list)


class OracleResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    optimum_nu: float
    profile: StrategyProfile
    profiles_evaluated: int


# ============================================================================
# EXPERIMENTS
# ============================================================================

DEFAULT_LABELS = [
    "CC-noalpha/local", "CC-noalpha/potential",
    "DC-alpha/local", "DC-alpha/potential",
    "BC-alpha/local", "BC-alpha/potential",
    "DCP-alpha/FS", "DCP-alpha/HM",
    "BCP-alpha/FS", "BCP-alpha/HM",
]


class ExperimentPlan(BaseModel):
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig.desk, description="Scenario template")
    link_counts: List[int] = Field(default_factory=lambda: [10, 20, 30], description="Link-count sweep")
    labels: List[str] = Field(default_factory=lambda: list(DEFAULT_LABELS), description="Strategy labels")
    instances: int = Field(default=50, ge=1, description="Instances per (label, link count)")
    base_seed: int = Field(default=2024, description="Root of every derived seed")
    output_dir: str = Field(default="batch", description="Where CSVs and the manifest go (relative to the data directory)")
    engine: EngineConfig = Field(default_factory=lambda: EngineConfig(scheduler=Scheduler.ASYNCHRONOUS))
    learning: LearningConfig = Field(default_factory=lambda: LearningConfig(total_steps=20000))
    ga: GAConfig = Field(default_factory=GAConfig)

    @field_validator("labels")
    @classmethod
    def _labels_parse(cls, labels: List[str]) -> List[str]:
        return [parse_label(label).text for label in labels]

    @field_validator("link_counts")
    @classmethod
    def _positive_counts(cls, counts: List[int]) -> List[int]:
        if not counts or any(n < 1 for n in counts):
            raise ValueError("link_counts must be a non-empty list of positive integers")
        return counts


class InstanceResult(BaseModel):
    label: str
    link_count: int
    instance: int
    seed: int
    nu: float = 0.0
    nu_valid: float = 0.0
    valid_links: float = 0.0
    active_links: float = 0.0
    discrete_capacity: float = 0.0
    mean_power: float = 0.0
    iterations: float = 0.0
    player_actions: float = 0.0
    converged: Optional[bool] = None
    cycle_detected: Optional[bool] = None
    error: Optional[str] = None


class AggregateRow(BaseModel):
    label: str
    link_count: int
    instances: int
    failed: int = 0
    nu_mean: float
    nu_std: float = Field(..., ge=0)
    nu_valid_mean: float
    nu_valid_std: float = Field(..., ge=0)
    valid_links_mean: float
    valid_links_std: float = Field(..., ge=0)
    active_links_mean: float
    discrete_capacity_mean: float
    mean_power_mean: float
    iterations_mean: float
    iterations_std: float = Field(..., ge=0)
    iterations_per_link: float
    convergence_rate: Optional[float] = Field(default=None, ge=0, le=1)


class BatchStatus(str, Enum):
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"
