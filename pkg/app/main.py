"""
FastAPI backend for the spectrum-games simulator
Same operations as the CLI: topologies, repeated games, learning, GA,
oracle, counterexample fixture and background batch plans.
"""
import logging
import uuid
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from fastapi import BackgroundTasks, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

# Load environment variables from .env file
load_dotenv()

from app import __version__
from app.config import configure_logging
from app.engines.dynamics import run_repeated_game
from app.engines.ga import ga_optimize
from app.engines.learning import average_external_regret, run_learning
from app.engines.oracle import build_fig1_fixture, compare_oracle
from app.engines.scenario import generate_topology
from app.errors import CRNError
from app.models import (
    BatchStatus,
    EngineConfig,
    ExperimentPlan,
    GAConfig,
    LearningConfig,
    RunnerKind,
    ScenarioConfig,
    Topology,
    parse_label,
)
from app.orchestrator import profile_summary, run_batch_background
from app.storage import storage

configure_logging()
logger = logging.getLogger("API")

# Initialize FastAPI
app = FastAPI(
    title="CRN Spectrum Games API",
    description="Distributed joint channel and power allocation games for cognitive radio networks",
    version=__version__,
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

TOPOLOGY_DIR = Path("topologies")


# Health check
@app.get("/")
async def root():
    return {
        "message": "CRN Spectrum Games API",
        "status": "healthy",
        "version": __version__,
    }


# ============================================================================
# REQUEST MODELS
# ============================================================================

class GenerateTopologyRequest(BaseModel):
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig.desk)
    seed: Optional[int] = Field(default=None, description="Generation seed (default scenario.rng_seed)")


class TopologyResponse(BaseModel):
    topology_id: str
    n_links: int
    channel_count: int
    source: str
    availability: List[List[int]]


class PlayRequest(BaseModel):
    topology_id: str
    label: str = "DC-alpha/local"
    engine: EngineConfig = Field(default_factory=EngineConfig)


class LearnRequest(BaseModel):
    topology_id: str
    label: str = "DCP-alpha/FS"
    learning: LearningConfig = Field(default_factory=lambda: LearningConfig(total_steps=20000))


class GARequest(BaseModel):
    topology_id: str
    label: str = "GA-DC"
    ga: GAConfig = Field(default_factory=GAConfig)


class OracleRequest(BaseModel):
    topology_id: str
    label: str = "DC-alpha/potential"
    budget: Optional[int] = Field(default=None, ge=1)


# ============================================================================
# TOPOLOGIES
# ============================================================================

def _save_topology(topology: Topology) -> TopologyResponse:
    topology_id = str(uuid.uuid4())[:8]
    storage.dump_topology(topology, TOPOLOGY_DIR / f"{topology_id}.json")
    return TopologyResponse(
        topology_id=topology_id,
        n_links=topology.n_links,
        channel_count=topology.config.channel_count,
        source=topology.source,
        availability=[list(channels) for channels in topology.availability],
    )


def _load_topology(topology_id: str) -> Topology:
    if not storage.resolve(TOPOLOGY_DIR / f"{topology_id}.json").exists():
        raise HTTPException(status_code=404, detail="Topology not found")
    return storage.load_topology(TOPOLOGY_DIR / f"{topology_id}.json")


def _label(text: str, topology: Topology, runner: RunnerKind):
    try:
        label = parse_label(text, alpha=topology.config.sinr_threshold)
    except CRNError as e:
        raise HTTPException(status_code=400, detail=str(e))
    if label.runner != runner:
        raise HTTPException(status_code=400, detail=f"Label {label.text} is not a {runner.value} label")
    return label


@app.post("/topology/generate", response_model=TopologyResponse)
def generate_topology_endpoint(request: GenerateTopologyRequest):
    try:
        topology = generate_topology(request.scenario, seed=request.seed)
    except CRNError as e:
        raise HTTPException(status_code=400, detail=str(e))
    response = _save_topology(topology)
    logger.info("Generated topology %s with %d links", response.topology_id, response.n_links)
    return response


@app.get("/topology/{topology_id}", response_model=TopologyResponse)
def get_topology(topology_id: str):
    topology = _load_topology(topology_id)
    return TopologyResponse(
        topology_id=topology_id,
        n_links=topology.n_links,
        channel_count=topology.config.channel_count,
        source=topology.source,
        availability=[list(channels) for channels in topology.availability],
    )


@app.post("/fixture/fig1", response_model=TopologyResponse)
def fixture_endpoint():
    """Three-link counterexample on which the local game has no pure NE"""
    try:
        topology = build_fig1_fixture()
    except CRNError as e:
        raise HTTPException(status_code=500, detail=f"Fixture self-check failed: {e}")
    return _save_topology(topology)


# ============================================================================
# SINGLE RUNS
# ============================================================================

@app.post("/play")
def play(request: PlayRequest) -> Dict[str, Any]:
    topology = _load_topology(request.topology_id)
    label = _label(request.label, topology, RunnerKind.GAME)
    trace = run_repeated_game(topology, label.game_spec, request.engine)
    return {
        "label": label.text,
        "converged": trace.converged,
        "cycle_detected": trace.cycle_detected,
        "steps_used": trace.steps_used,
        "player_actions": trace.player_actions,
        "nu_history": trace.nu_history,
        **profile_summary(trace.final_profile, topology, label.capacity_mode, label.game_spec.alpha),
    }


@app.post("/learn")
def learn(request: LearnRequest) -> Dict[str, Any]:
    topology = _load_topology(request.topology_id)
    label = _label(request.label, topology, RunnerKind.LEARNING)
    config = request.learning.model_copy(update={"algorithm": label.algorithm})
    try:
        trace = run_learning(topology, label.game_spec, config)
    except CRNError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {
        "label": label.text,
        "mean_nu": trace.mean_nu,
        "mean_nu_valid": trace.mean_nu_valid,
        "mean_valid_links": trace.mean_valid_links,
        "mean_active_links": trace.mean_active_links,
        "mean_power": trace.mean_power,
        "final_probabilities": [q.tolist() for q in trace.final_probabilities],
        "average_external_regret": [average_external_regret(link, trace) for link in range(topology.n_links)],
    }


@app.post("/ga")
def ga(request: GARequest) -> Dict[str, Any]:
    topology = _load_topology(request.topology_id)
    label = _label(request.label, topology, RunnerKind.GA)
    result = ga_optimize(topology, label.capacity_mode, request.ga)
    return {
        "label": label.text,
        "generations": result.generations,
        "best_nu": result.best_nu,
        "history": [stats.model_dump() for stats in result.history],
        **profile_summary(result.best_profile, topology, label.capacity_mode, topology.config.sinr_threshold),
    }


@app.post("/oracle")
def oracle(request: OracleRequest) -> Dict[str, Any]:
    topology = _load_topology(request.topology_id)
    try:
        label = parse_label(request.label, alpha=topology.config.sinr_threshold)
        result = compare_oracle(topology, label.capacity_mode, topology.config.sinr_threshold, request.budget)
    except CRNError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {
        "optimum_nu": result.optimum_nu,
        "profiles_evaluated": result.profiles_evaluated,
        "profile": [str(s) for s in result.profile.strategies()],
    }


# ============================================================================
# BATCH PLANS
# ============================================================================

@app.post("/batch")
async def start_batch(plan: ExperimentPlan, background_tasks: BackgroundTasks):
    """Queue a plan; poll GET /batch/{batch_id} for the aggregate rows"""
    batch_id = str(uuid.uuid4())[:8]
    storage.create_batch(batch_id, {
        "batch_id": batch_id,
        "status": BatchStatus.PENDING.value,
        "plan": plan.model_dump(mode="json"),
    })
    background_tasks.add_task(run_batch_background, batch_id, plan)
    return {"batch_id": batch_id, "status": BatchStatus.PENDING.value}


@app.get("/batch/{batch_id}")
async def get_batch(batch_id: str):
    batch = storage.get_batch(batch_id)
    if not batch:
        raise HTTPException(status_code=404, detail="Batch not found")
    return batch


@app.get("/batches")
async def list_batches():
    return [{"batch_id": b["batch_id"], "status": b["status"]} for b in storage.list_batches()]
