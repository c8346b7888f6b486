"""
Tests for the stage dependency graph and runner.

Documentation:
- networkx: https://networkx.org/documentation/stable/index.html
"""

import pytest

from engagement_analytics.errors import StageError
from engagement_analytics.stages import (
    Stage,
    StageDependencyError,
    StageGraph,
    StageRunner,
    StageStatus,
)


def build_graph(fail: str = "") -> StageGraph:
    def body(name: str, value: int):
        def run(results):
            if name == fail:
                raise ValueError(f"{name} exploded")
            return value + sum(v for k, v in results.items() if isinstance(v, int))
        return run

    graph = StageGraph()
    graph.add_stage(Stage("load", body("load", 1)))
    graph.add_stage(Stage("metrics", body("metrics", 10), ["load"]))
    graph.add_stage(Stage("fits", body("fits", 100), ["metrics"], optional=True))
    graph.add_stage(Stage("plots", body("plots", 1000), ["fits"], optional=True))
    graph.add_stage(Stage("efa", body("efa", 5), ["metrics"]))
    return graph


def test_execution_plan_waves():
    assert build_graph().create_execution_plan() == [["load"], ["metrics"], ["efa", "fits"], ["plots"]]


def test_cycle_detection():
    graph = StageGraph()
    graph.add_stage(Stage("a", lambda r: None, ["b"]))
    graph.add_stage(Stage("b", lambda r: None, ["a"]))
    errors = graph.validate_dependencies()
    assert errors and "cycle" in errors[0]
    with pytest.raises(StageDependencyError):
        graph.create_execution_plan()


def test_undeclared_dependency_reported():
    graph = StageGraph()
    graph.add_stage(Stage("a", lambda r: None, ["ghost"]))
    assert any("ghost" in e for e in graph.validate_dependencies())


def test_restrict_to_pulls_in_ancestors():
    graph = build_graph()
    assert graph.restrict_to(["fits"]) == {"load", "metrics", "fits"}
    with pytest.raises(StageDependencyError):
        graph.restrict_to(["unknown"])


def test_all_stages_complete():
    runner = StageRunner(build_graph(), workers=2)
    outcomes = runner.run()
    assert all(o.status == StageStatus.COMPLETED for o in outcomes.values())
    assert runner.results["metrics"] == 11


def test_optional_failure_skips_dependents_only():
    runner = StageRunner(build_graph(fail="fits"))
    outcomes = runner.run()
    assert outcomes["fits"].status == StageStatus.FAILED
    assert outcomes["fits"].note == "ValueError: fits exploded"
    assert outcomes["plots"].status == StageStatus.SKIPPED
    assert outcomes["plots"].note == "dependency fits did not complete"
    assert outcomes["efa"].status == StageStatus.COMPLETED


def test_required_failure_raises_stage_error():
    runner = StageRunner(build_graph(fail="metrics"))
    with pytest.raises(StageError) as excinfo:
        runner.run()
    assert excinfo.value.stage == "metrics"
    assert isinstance(excinfo.value.cause, ValueError)


def test_configured_skip_and_targets():
    runner = StageRunner(build_graph(), skip={"fits"})
    outcomes = runner.run(["plots"])
    assert set(outcomes) == {"load", "metrics", "fits", "plots"}
    assert outcomes["fits"].note == "skipped by configuration"
    assert outcomes["plots"].status == StageStatus.SKIPPED
