"""Parser and evaluator for the XPath-flavoured graph traversal language.

A query is a sequence of variable bindings. Each binding starts from a
key lookup or a previously bound variable and applies traversal steps:

    $scientists := g:key($_g, 'type', 'agent')
    $x := $scientists/inE/outV[@identifier]

Step semantics follow the 0.x Gremlin convention: /inE and /outE move
from vertices to their incoming/outgoing edges, /inV yields an edge's
target vertex, /outV its source vertex. [@key='value'] filters the
current set by annotation, [@key] projects annotation values. $_g is
the implicit binding holding every vertex in the graph.

parse() performs full static checking (variable scoping and step/tag
legality), so a parsed query cannot fail type checks later; evaluate()
still validates dynamically to guard hand-built ASTs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .graph import Direction, OpmGraph

NODES = "nodes"
EDGES = "edges"
VALUES = "values"


class QueryError(Exception):
    """Base class for traversal language failures."""


class QuerySyntaxError(QueryError):
    def __init__(self, line: int, column: int, expected: str):
        self.line = line
        self.column = column
        self.expected = expected
        super().__init__(f"line {line}, column {column}: expected {expected}")


class UnboundVariable(QueryError):
    def __init__(self, name: str, line: int = 0, column: int = 0):
        self.name = name
        self.line = line
        self.column = column
        super().__init__(f"variable ${name} referenced before binding")


class TypeMismatch(QueryError):
    def __init__(self, step: str, operand_tag: str):
        self.step = step
        self.operand_tag = operand_tag
        super().__init__(f"step {step} cannot apply to a {operand_tag} set")


@dataclass(frozen=True)
class KeySource:
    """g:key(ref, key, value) index lookup over a vertex set."""

    ref: str
    key: str
    value: str
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class RefSource:
    name: str
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class EdgeStep:
    """/inE or /outE: vertices to their incident edges."""

    direction: str  # "in" | "out"
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class VertexStep:
    """/inV (edge target) or /outV (edge source)."""

    end: str  # "in" | "out"
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class FilterStep:
    key: str
    value: str
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class ProjectStep:
    key: str
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


Step = Union[EdgeStep, VertexStep, FilterStep, ProjectStep]
Source = Union[KeySource, RefSource]


@dataclass(frozen=True)
class Statement:
    name: str
    source: Source
    steps: tuple[Step, ...]
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class TraversalExpr:
    statements: tuple[Statement, ...]


@dataclass(frozen=True)
class ResultSet:
    """Homogeneous, deterministically ordered traversal result."""

    tag: str  # NODES | EDGES | VALUES
    items: tuple


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
IMPLICIT_GRAPH = "_g"


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.column = 1

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def location(self) -> tuple[int, int]:
        return (self.line, self.column)

    def advance(self, n: int = 1) -> str:
        out = self.text[self.pos : self.pos + n]
        for ch in out:
            if ch == "\n":
                self.line += 1
                self.column = 1
            else:
                self.column += 1
        self.pos += n
        return out

    def skip_ws(self) -> None:
        while not self.eof() and self.peek() in " \t\r\n":
            self.advance()

    def expect(self, literal: str, expected: str) -> None:
        if not self.text.startswith(literal, self.pos):
            raise QuerySyntaxError(self.line, self.column, expected)
        self.advance(len(literal))

    def ident(self, expected: str = "identifier") -> str:
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            raise QuerySyntaxError(self.line, self.column, expected)
        self.advance(len(m.group(0)))
        return m.group(0)

    def string(self) -> str:
        if self.peek() != "'":
            raise QuerySyntaxError(self.line, self.column, "single-quoted string")
        start = self.location()
        self.advance()
        out: list[str] = []
        while True:
            if self.eof():
                raise QuerySyntaxError(start[0], start[1], "closing quote")
            ch = self.advance()
            if ch == "\\":
                if self.eof():
                    raise QuerySyntaxError(start[0], start[1], "escape character")
                out.append(self.advance())
            elif ch == "'":
                return "".join(out)
            else:
                out.append(ch)


def parse(text: str) -> TraversalExpr:
    """Parse and statically validate a query (one or more bindings)."""
    sc = _Scanner(text)
    env_tags: dict[str, str] = {IMPLICIT_GRAPH: NODES}
    statements: list[Statement] = []
    sc.skip_ws()
    if sc.eof():
        raise QuerySyntaxError(sc.line, sc.column, "at least one statement")
    while not sc.eof():
        pos = sc.location()
        sc.expect("$", "'$' starting a statement")
        name = sc.ident("variable name")
        sc.skip_ws()
        sc.expect(":=", "':='")
        sc.skip_ws()
        source, tag = _parse_source(sc, env_tags)
        steps: list[Step] = []
        while sc.peek() in ("/", "["):
            step, tag = _parse_step(sc, tag)
            steps.append(step)
        env_tags[name] = tag
        statements.append(Statement(name, source, tuple(steps), pos))
        sc.skip_ws()
    return TraversalExpr(tuple(statements))


def _parse_source(sc: _Scanner, env_tags: dict[str, str]):
    pos = sc.location()
    if sc.text.startswith("g:key(", sc.pos):
        sc.advance(len("g:key("))
        sc.skip_ws()
        ref_pos = sc.location()
        sc.expect("$", "'$' variable reference")
        ref = sc.ident("variable name")
        if ref not in env_tags:
            raise UnboundVariable(ref, *ref_pos)
        if env_tags[ref] != NODES:
            raise QuerySyntaxError(
                ref_pos[0], ref_pos[1], f"a vertex set (${ref} holds {env_tags[ref]})"
            )
        sc.skip_ws()
        sc.expect(",", "','")
        sc.skip_ws()
        key = sc.string()
        sc.skip_ws()
        sc.expect(",", "','")
        sc.skip_ws()
        value = sc.string()
        sc.skip_ws()
        sc.expect(")", "')'")
        return KeySource(ref, key, value, pos), NODES
    if sc.peek() == "$":
        sc.advance()
        name = sc.ident("variable name")
        if name not in env_tags:
            raise UnboundVariable(name, *pos)
        return RefSource(name, pos), env_tags[name]
    raise QuerySyntaxError(pos[0], pos[1], "g:key(...) or variable reference")


def _parse_step(sc: _Scanner, tag: str):
    pos = sc.location()
    if sc.peek() == "/":
        sc.advance()
        word = sc.ident("inE, outE, inV or outV")
        if word in ("inE", "outE"):
            if tag != NODES:
                raise QuerySyntaxError(
                    pos[0], pos[1], f"a vertex set before /{word} (have {tag})"
                )
            return EdgeStep("in" if word == "inE" else "out", pos), EDGES
        if word in ("inV", "outV"):
            if tag != EDGES:
                raise QuerySyntaxError(
                    pos[0], pos[1], f"an edge set before /{word} (have {tag})"
                )
            return VertexStep("in" if word == "inV" else "out", pos), NODES
        raise QuerySyntaxError(pos[0], pos[1], "inE, outE, inV or outV")
    # bracket step
    sc.expect("[@", "'[@'")
    if tag == VALUES:
        raise QuerySyntaxError(pos[0], pos[1], "no step after a projection")
    key = sc.ident("annotation key")
    sc.skip_ws()
    if sc.peek() == "=":
        sc.advance()
        sc.skip_ws()
        value = sc.string()
        sc.skip_ws()
        sc.expect("]", "']'")
        return FilterStep(key, value, pos), tag
    sc.expect("]", "']' or '='")
    return ProjectStep(key, pos), VALUES


def _quote(s: str) -> str:
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'") + "'"


def format_query(expr: TraversalExpr) -> str:
    """Render an AST back to query text; parse(format_query(e)) == e."""
    lines = []
    for st in expr.statements:
        if isinstance(st.source, KeySource):
            src = f"g:key(${st.source.ref}, {_quote(st.source.key)}, {_quote(st.source.value)})"
        else:
            src = f"${st.source.name}"
        parts = [f"${st.name} := {src}"]
        for step in st.steps:
            if isinstance(step, EdgeStep):
                parts.append("/inE" if step.direction == "in" else "/outE")
            elif isinstance(step, VertexStep):
                parts.append("/inV" if step.end == "in" else "/outV")
            elif isinstance(step, FilterStep):
                parts.append(f"[@{step.key}={_quote(step.value)}]")
            else:
                parts.append(f"[@{step.key}]")
        lines.append("".join(parts))
    return "\n".join(lines)


def evaluate(graph: OpmGraph, expr: TraversalExpr) -> dict[str, ResultSet]:
    """Evaluate every statement; returns variable name -> ResultSet.

    Pure with respect to the graph: results are deterministic (node and
    edge sets ascend by id, projections keep first-occurrence order)
    and duplicates are removed.
    """
    env: dict[str, ResultSet] = {
        IMPLICIT_GRAPH: ResultSet(NODES, tuple(n.id for n in graph.all_nodes()))
    }
    results: dict[str, ResultSet] = {}
    for st in expr.statements:
        rs = _eval_source(graph, st.source, env)
        for step in st.steps:
            rs = _eval_step(graph, step, rs)
        env[st.name] = rs
        results[st.name] = rs
    return results


def _eval_source(graph: OpmGraph, source: Source, env: dict[str, ResultSet]) -> ResultSet:
    if isinstance(source, RefSource):
        try:
            return env[source.name]
        except KeyError:
            raise UnboundVariable(source.name, *source.pos) from None
    base = env.get(source.ref)
    if base is None:
        raise UnboundVariable(source.ref, *source.pos)
    if base.tag != NODES:
        raise TypeMismatch("g:key", base.tag)
    hits = graph.get_by_key(source.key, source.value)
    return ResultSet(NODES, tuple(n for n in base.items if n in hits))


def _eval_step(graph: OpmGraph, step: Step, rs: ResultSet) -> ResultSet:
    if isinstance(step, EdgeStep):
        if rs.tag != NODES:
            raise TypeMismatch("/inE" if step.direction == "in" else "/outE", rs.tag)
        direction = Direction.INCOMING if step.direction == "in" else Direction.OUTGOING
        edge_ids: set[int] = set()
        for node_id in rs.items:
            edge_ids.update(eid for eid, _ in graph.neighbors(node_id, direction))
        return ResultSet(EDGES, tuple(sorted(edge_ids)))
    if isinstance(step, VertexStep):
        if rs.tag != EDGES:
            raise TypeMismatch("/inV" if step.end == "in" else "/outV", rs.tag)
        node_ids: set[int] = set()
        for eid in rs.items:
            edge = graph.get_edge(eid)
            node_ids.add(edge.target if step.end == "in" else edge.source)
        return ResultSet(NODES, tuple(sorted(node_ids)))
    if isinstance(step, FilterStep):
        if rs.tag == VALUES:
            raise TypeMismatch(f"[@{step.key}=...]", rs.tag)
        keep = []
        for item in rs.items:
            ann = (
                graph.get_node(item).annotations
                if rs.tag == NODES
                else graph.get_edge(item).annotations
            )
            if ann.get(step.key) == step.value:
                keep.append(item)
        return ResultSet(rs.tag, tuple(keep))
    # projection
    if rs.tag == VALUES:
        raise TypeMismatch(f"[@{step.key}]", rs.tag)
    seen: list[str] = []
    for item in rs.items:
        ann = (
            graph.get_node(item).annotations
            if rs.tag == NODES
            else graph.get_edge(item).annotations
        )
        value = ann.get(step.key)
        if value is not None and value not in seen:
            seen.append(value)
    return ResultSet(VALUES, tuple(seen))
