"""Lineage closures and the canned provenance question catalogue.

Every edge label points from effect to cause, so following outgoing
edges walks towards causes (ancestors) and following incoming edges
towards effects (descendants). The six questions (origin, inheritance,
participants, dependencies, progress, quality) are filters and reports
over those closures.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Protocol

from .graph import Direction, EdgeLabel, NodeKind, OpmGraph
from .traversal import NODES, ResultSet

STAGES = ("preparation", "execution", "evaluation", "interpretation", "archiving")
ARCHIVING_STAGE = "archiving"


class LineageDirection(Enum):
    ANCESTORS = "ancestors"
    DESCENDANTS = "descendants"


class Question(str, Enum):
    ORIGIN = "origin"
    INHERITANCE = "inheritance"
    PARTICIPANTS = "participants"
    DEPENDENCIES = "dependencies"
    PROGRESS = "progress"
    QUALITY = "quality"


class NoStage(Exception):
    def __init__(self, node_id: int):
        self.node_id = node_id
        super().__init__(f"node {node_id} has no generating process with a known stage")


class MissingRuleset(Exception):
    def __init__(self) -> None:
        super().__init__("the quality question requires a ruleset in context")


@dataclass(frozen=True)
class ProgressAnswer:
    stage: str
    finalized: bool


@dataclass(frozen=True)
class RuleViolation:
    rule: str
    node_id: int
    message: str


@dataclass(frozen=True)
class QualityReport:
    violations: tuple[RuleViolation, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


class QualityRule(Protocol):
    name: str

    def check(self, graph: OpmGraph, node_ids: Iterable[int]) -> list[RuleViolation]: ...


class MandatoryAnnotationsRule:
    """Every artifact in scope must carry the given annotation keys."""

    def __init__(self, keys: Iterable[str]):
        self.keys = tuple(keys)
        self.name = "mandatory-annotations"

    def check(self, graph: OpmGraph, node_ids: Iterable[int]) -> list[RuleViolation]:
        out = []
        for node_id in node_ids:
            node = graph.get_node(node_id)
            if node.kind is not NodeKind.ARTIFACT:
                continue
            for key in self.keys:
                if key not in node.annotations:
                    out.append(
                        RuleViolation(
                            self.name,
                            node_id,
                            f"artifact {node.identifier!r} lacks annotation {key!r}",
                        )
                    )
        return out


class AgentPresenceRule:
    """Every process in scope must be undertaken by at least one agent."""

    name = "agent-presence"

    def check(self, graph: OpmGraph, node_ids: Iterable[int]) -> list[RuleViolation]:
        out = []
        for node_id in node_ids:
            node = graph.get_node(node_id)
            if node.kind is not NodeKind.PROCESS:
                continue
            if not graph.neighbors(node_id, Direction.OUTGOING, EdgeLabel.WAS_UNDERTAKEN_BY):
                out.append(
                    RuleViolation(
                        self.name,
                        node_id,
                        f"process {node.identifier!r} has no wasUndertakenBy edge",
                    )
                )
        return out


def default_ruleset(mandatory_keys: Iterable[str] = ("creator", "created", "item_type")):
    return [MandatoryAnnotationsRule(mandatory_keys), AgentPresenceRule()]


def lineage(
    graph: OpmGraph,
    start: int,
    direction: LineageDirection,
    labels: Optional[set[EdgeLabel]] = None,
) -> set[int]:
    """Transitive closure from start; the start node itself is excluded."""
    graph.get_node(start)  # raises UnknownNode
    walk = (
        Direction.OUTGOING
        if direction is LineageDirection.ANCESTORS
        else Direction.INCOMING
    )
    seen: set[int] = set()
    queue = deque([start])
    while queue:
        current = queue.popleft()
        for eid, other in graph.neighbors(current, walk):
            if labels is not None and graph.get_edge(eid).label not in labels:
                continue
            if other not in seen:
                seen.add(other)
                queue.append(other)
    seen.discard(start)
    return seen


def answer(
    graph: OpmGraph,
    question: Question,
    subject: int,
    context: Optional[dict] = None,
):
    """Answer one of the six provenance questions about subject.

    Returns a ResultSet of node ids for the set-valued questions, a
    ProgressAnswer for progress and a QualityReport for quality.
    """
    question = Question(question)
    subject_node = graph.get_node(subject)  # raises UnknownNode

    if question is Question.ORIGIN:
        return _artifact_set(graph, lineage(graph, subject, LineageDirection.ANCESTORS))

    if question is Question.INHERITANCE:
        return _artifact_set(graph, lineage(graph, subject, LineageDirection.DESCENDANTS))

    if question is Question.PARTICIPANTS:
        closure = lineage(graph, subject, LineageDirection.ANCESTORS) | lineage(
            graph, subject, LineageDirection.DESCENDANTS
        )
        in_scope = closure | {subject}
        agents = set()
        for node_id in closure:
            if graph.get_node(node_id).kind is not NodeKind.AGENT:
                continue
            for _, proc in graph.neighbors(
                node_id, Direction.INCOMING, EdgeLabel.WAS_UNDERTAKEN_BY
            ):
                if proc in in_scope:
                    agents.add(node_id)
                    break
        return ResultSet(NODES, tuple(sorted(agents)))

    if question is Question.DEPENDENCIES:
        own_project = subject_node.annotations.get("project")
        origin = lineage(graph, subject, LineageDirection.ANCESTORS)
        hits = [
            n
            for n in sorted(origin)
            if graph.get_node(n).kind is NodeKind.ARTIFACT
            and graph.get_node(n).annotations.get("project") != own_project
        ]
        return ResultSet(NODES, tuple(hits))

    if question is Question.PROGRESS:
        generated_by = graph.neighbors(
            subject, Direction.OUTGOING, EdgeLabel.WAS_GENERATED_BY
        )
        if not generated_by:
            raise NoStage(subject)
        process = graph.get_node(generated_by[0][1])
        stage = process.annotations.get("stage")
        if stage not in STAGES:
            raise NoStage(subject)
        finalized = any(
            graph.get_node(n).annotations.get("stage") == ARCHIVING_STAGE
            for n in lineage(graph, subject, LineageDirection.DESCENDANTS)
        )
        return ProgressAnswer(stage, finalized)

    # quality
    ruleset = (context or {}).get("ruleset")
    if not ruleset:
        raise MissingRuleset()
    scope = sorted(lineage(graph, subject, LineageDirection.ANCESTORS) | {subject})
    violations: list[RuleViolation] = []
    for rule in ruleset:
        violations.extend(rule.check(graph, scope))
    return QualityReport(tuple(violations))


def _artifact_set(graph: OpmGraph, ids: set[int]) -> ResultSet:
    return ResultSet(
        NODES,
        tuple(n for n in sorted(ids) if graph.get_node(n).kind is NodeKind.ARTIFACT),
    )
