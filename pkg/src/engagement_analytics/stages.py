"""
Stage dependency graph and runner for the analysis pipeline.

Stages declare the stages they depend on; the graph groups stages whose
dependencies are all satisfied into waves, and every wave runs on a thread
pool. A required stage that fails aborts the run with StageError. An optional
stage that fails, or is skipped by configuration, is recorded with a note and
its dependents are skipped in turn.

Documentation:
- networkx: https://networkx.org/documentation/stable/index.html
- concurrent.futures: https://docs.python.org/3/library/concurrent.futures.html

Sample Input:
  graph = StageGraph()
  graph.add_stage(Stage(name="metrics", run=compute_metrics))
  graph.add_stage(Stage(name="efa", run=run_efa, dependencies=["metrics"]))
  graph.add_stage(Stage(name="distfit", run=fit, dependencies=["metrics"], optional=True))
  graph.create_execution_plan()

Expected Output:
  [['metrics'], ['distfit', 'efa']]
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Set

import networkx as nx
from loguru import logger

from engagement_analytics.errors import StageError


class StageStatus(str, Enum):
    """Status of a pipeline stage."""
    PENDING = "pending"
    COMPLETED = "completed"
    FAILED = "failed"
    SKIPPED = "skipped"


class StageDependencyError(Exception):
    """Exception raised for stage dependency issues."""
    pass


@dataclass
class Stage:
    name: str
    run: Callable[[Dict[str, Any]], Any]
    dependencies: List[str] = field(default_factory=list)
    optional: bool = False


@dataclass
class StageOutcome:
    status: StageStatus
    note: str = ""
    seconds: float = 0.0


class StageGraph:
    """Holds stages and their dependency edges."""

    def __init__(self) -> None:
        self.dependency_graph = nx.DiGraph()
        self.stages: Dict[str, Stage] = {}

    def add_stage(self, stage: Stage) -> None:
        self.stages[stage.name] = stage
        self.dependency_graph.add_node(stage.name)
        for dep in stage.dependencies:
            self.dependency_graph.add_edge(dep, stage.name)

    def validate_dependencies(self) -> List[str]:
        """
        Check the graph for cycles and references to undeclared stages.

        Returns:
            List of validation errors, empty if valid
        """
        errors = []
        try:
            cycle = nx.find_cycle(self.dependency_graph)
            errors.append(f"Dependency cycle detected: {cycle}")
        except nx.NetworkXNoCycle:
            pass
        for node in self.dependency_graph.nodes:
            if node not in self.stages:
                dependents = sorted(self.dependency_graph.successors(node))
                errors.append(f"Stages {dependents} depend on undeclared stage {node}")
        return errors

    def restrict_to(self, targets: Iterable[str]) -> Set[str]:
        """Names of ``targets`` and everything they transitively depend on."""
        needed: Set[str] = set()
        for target in targets:
            if target not in self.stages:
                raise StageDependencyError(f"Unknown stage {target}")
            needed.add(target)
            needed |= nx.ancestors(self.dependency_graph, target)
        return needed

    def create_execution_plan(self, only: Optional[Set[str]] = None) -> List[List[str]]:
        """
        Group stages into waves that may run concurrently.

        Waves run in order; names inside a wave are sorted.
        """
        errors = self.validate_dependencies()
        if errors:
            raise StageDependencyError("\n".join(errors))
        graph = self.dependency_graph.subgraph(only) if only is not None else self.dependency_graph
        return [sorted(generation) for generation in nx.topological_generations(graph)]


class StageRunner:
    """
    Executes a StageGraph wave by wave.

    ``results`` maps stage name to the stage's return value and is passed to
    every stage; a stage only reads the entries of its dependencies.
    """

    def __init__(self, graph: StageGraph, skip: Optional[Set[str]] = None, workers: int = 4):
        self.graph = graph
        self.skip = skip or set()
        self.workers = workers
        self.results: Dict[str, Any] = {}
        self.outcomes: Dict[str, StageOutcome] = {}

    def _blocked_by(self, name: str) -> Optional[str]:
        for dep in self.graph.stages[name].dependencies:
            outcome = self.outcomes.get(dep)
            if outcome is not None and outcome.status != StageStatus.COMPLETED:
                return dep
        return None

    def _run_one(self, name: str) -> StageOutcome:
        stage = self.graph.stages[name]
        if name in self.skip:
            logger.warning(f"Stage {name} skipped by configuration")
            return StageOutcome(StageStatus.SKIPPED, "skipped by configuration")
        blocker = self._blocked_by(name)
        if blocker is not None:
            logger.warning(f"Stage {name} skipped: dependency {blocker} did not complete")
            return StageOutcome(StageStatus.SKIPPED, f"dependency {blocker} did not complete")

        logger.info(f"Stage {name} started")
        start = time.perf_counter()
        try:
            self.results[name] = stage.run(self.results)
        except Exception as e:
            elapsed = time.perf_counter() - start
            if not stage.optional:
                logger.error(f"Stage {name} failed: {e}")
                raise StageError(name, e) from e
            logger.warning(f"Optional stage {name} failed: {type(e).__name__}: {e}")
            return StageOutcome(StageStatus.FAILED, f"{type(e).__name__}: {e}", elapsed)
        elapsed = time.perf_counter() - start
        logger.info(f"Stage {name} finished in {elapsed:.2f} s")
        return StageOutcome(StageStatus.COMPLETED, seconds=elapsed)

    def run(self, targets: Optional[Iterable[str]] = None) -> Dict[str, StageOutcome]:
        """Run every stage, or only ``targets`` and their ancestors."""
        only = self.graph.restrict_to(targets) if targets is not None else None
        for wave in self.graph.create_execution_plan(only):
            with ThreadPoolExecutor(max_workers=max(1, min(self.workers, len(wave)))) as pool:
                outcomes = list(pool.map(self._run_one, wave))
            for name, outcome in zip(wave, outcomes):
                self.outcomes[name] = outcome
        return self.outcomes
