"""
Command-line surface: subcommands, output files and exit codes
"""
import json

import numpy as np
import pandas as pd

from app import cli
from app.cli import EXIT_INVALID, EXIT_OK, EXIT_SELF_CHECK, main
from app.engines.scenario import generate_topology
from app.errors import FixtureError
from app.models import ScenarioConfig
from app.storage import ResultStorage


def test_gen_writes_a_reloadable_topology(tmp_path):
    assert main(["gen", "--links", "5", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    loaded = ResultStorage(tmp_path).load_topology(tmp_path / "topology.json")
    expected = generate_topology(ScenarioConfig.desk(link_count=5), seed=4)
    assert loaded.n_links == 5
    assert np.array_equal(loaded.gains, expected.gains)
    assert loaded.availability == expected.availability
    assert loaded.config == expected.config


def test_play_on_a_stored_topology(tmp_path):
    main(["gen", "--links", "6", "--out", str(tmp_path / "gen")])
    code = main([
        "play", "--topology", str(tmp_path / "gen" / "topology.json"),
        "--label", "BC-alpha/potential", "--scheduler", "asynchronous", "--out", str(tmp_path / "play"),
    ])
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "play" / "summary.json").read_text())
    assert summary["label"] == "BC-alpha/potential"
    assert summary["converged"] is True
    trace = pd.read_csv(tmp_path / "play" / "trace.csv")
    assert len(trace) == summary["steps_used"]


def test_learn_writes_trajectory_and_strategies(tmp_path):
    code = main(["learn", "--links", "3", "--label", "DCP-alpha/HM", "--steps", "300", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert len(pd.read_csv(tmp_path / "learning.csv")) == 300
    strategies = pd.read_csv(tmp_path / "strategies.csv")
    assert sorted(strategies["link"].unique()) == [0, 1, 2]
    assert strategies.groupby("link")["probability"].sum().round(9).eq(1.0).all()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(summary["average_external_regret"]) == 3


def test_ga_writes_progress(tmp_path):
    assert main(["ga", "--links", "4", "--label", "GA-DC", "--steps", "10", "--out", str(tmp_path)]) == EXIT_OK
    progress = pd.read_csv(tmp_path / "ga_progress.csv")
    assert progress["generation"].iloc[0] == 0
    assert len(progress) <= 11


def test_fixture_then_oracle(tmp_path):
    assert main(["fixture", "fig1", "--out", str(tmp_path / "fixture")]) == EXIT_OK
    code = main([
        "oracle", "--topology", str(tmp_path / "fixture" / "topology.json"),
        "--label", "BC-alpha/potential", "--out", str(tmp_path / "oracle"),
    ])
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "oracle" / "summary.json").read_text())
    assert summary["profiles_evaluated"] == 729
    assert summary["optimum_nu"] == 2.0


def test_batch_from_plan_file(tmp_path):
    plan = {
        "scenario": ScenarioConfig.desk(node_count=20).model_dump(),
        "labels": ["DC-alpha/local", "GA-DC"],
        "link_counts": [3],
        "instances": 2,
        "ga": {"population_size": 8, "max_generations": 5, "tournament_size": 2},
    }
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    code = main(["batch", "--config", str(path), "--seed", "3", "--workers", "1", "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    aggregate = pd.read_csv(tmp_path / "out" / "aggregate.csv")
    assert list(aggregate["label"]) == ["DC-alpha/local", "GA-DC"]
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["plan"]["base_seed"] == 3


def test_invalid_input_exits_with_2(tmp_path):
    assert main(["play", "--links", "3", "--label", "nonsense", "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["play", "--links", "3", "--label", "DCP-alpha/FS", "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["oracle", "--links", "3", "--budget", "10", "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["gen", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_INVALID


def test_failed_fixture_self_check_exits_with_3(tmp_path, monkeypatch):
    def broken():
        raise FixtureError("admits a pure NE")

    monkeypatch.setattr(cli, "build_fig1_fixture", broken)
    assert main(["fixture", "fig1", "--out", str(tmp_path)]) == EXIT_SELF_CHECK
