from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.errors import MapFormatError, NoBusLinesError, NotAdjacentError, TrajectoryError, UnknownElementError
from app.roadmap.street_map import StreetGraph, is_adjacent

logger = logging.getLogger(__name__)

# Stand-in for the infinite weight of streets no bus line serves.
W_MAX = 1e12


@dataclass(frozen=True)
class BusLine:
    id: str
    trajectory: tuple[str, ...]
    headway_s: float = 60.0

    @property
    def repeats_streets(self) -> bool:
        return len(set(self.trajectory)) != len(self.trajectory)


def walk_vertices(graph: StreetGraph, trajectory: Sequence[str]) -> tuple[str, ...]:
    """Intersections visited by a street walk, terminals included."""
    if not trajectory:
        raise TrajectoryError("empty trajectory")
    streets = [graph.street(s) for s in trajectory]
    if len(streets) == 1:
        return streets[0].endpoints

    first, second = streets[0], streets[1]
    shared = set(first.endpoints) & set(second.endpoints)
    if not shared:
        raise TrajectoryError(f"streets {first.id!r} and {second.id!r} are not adjacent")
    current = first.other_end(shared.pop())
    vertices = [current]
    for street in streets:
        if current not in street.endpoints:
            raise TrajectoryError(f"walk breaks at street {street.id!r} (expected it to touch {current!r})")
        current = street.other_end(current)
        vertices.append(current)
    return tuple(vertices)


def line_length(graph: StreetGraph, line: BusLine) -> float:
    return math.fsum(graph.street(s).length for s in line.trajectory)


def validate_line(graph: StreetGraph, line: BusLine) -> None:
    for street_id in line.trajectory:
        graph.street(street_id)
    for i, j in zip(line.trajectory, line.trajectory[1:]):
        if not is_adjacent(graph, i, j):
            raise TrajectoryError(f"line {line.id!r}: consecutive streets {i!r} and {j!r} are not adjacent")
    walk_vertices(graph, line.trajectory)
    if not line.headway_s > 0:
        raise TrajectoryError(f"line {line.id!r}: headway must be positive")
    if line.repeats_streets:
        logger.warning(
            "Line %s repeats streets; its street probabilities will not sum to 1", line.id
        )


class LineCoverage:
    """Which bus lines pass each street (B_r), plus the total line count N_BUS."""

    def __init__(self, graph: StreetGraph, lines: Iterable[BusLine]) -> None:
        self.graph = graph
        ordered = sorted(lines, key=lambda ln: ln.id)
        by_id: dict[str, BusLine] = {}
        for line in ordered:
            if line.id in by_id:
                raise TrajectoryError(f"duplicate bus line id {line.id!r}")
            validate_line(graph, line)
            by_id[line.id] = line
        self.lines: Mapping[str, BusLine] = MappingProxyType(by_id)

        per_street: dict[str, set[str]] = {s: set() for s in graph.streets}
        for line in ordered:
            for street_id in line.trajectory:
                per_street[street_id].add(line.id)
        self._per_street = MappingProxyType({s: frozenset(v) for s, v in per_street.items()})
        self._lengths = MappingProxyType({line.id: line_length(graph, line) for line in ordered})

    @property
    def n_bus(self) -> int:
        return len(self.lines)

    def lines_on(self, street_id: str) -> frozenset[str]:
        try:
            return self._per_street[street_id]
        except KeyError:
            raise UnknownElementError("street", street_id) from None

    def count(self, street_id: str) -> int:
        return len(self.lines_on(street_id))

    def length_of(self, line_id: str) -> float:
        return self._lengths[line_id]


def prob_bus_on_street(graph: StreetGraph, line: BusLine, street_id: str) -> float:
    street = graph.street(street_id)
    if street_id not in line.trajectory:
        return 0.0
    return street.length / line_length(graph, line)


def prob_street(coverage: LineCoverage, street_id: str) -> float:
    if coverage.n_bus < 1:
        raise NoBusLinesError("no bus lines defined")
    length = coverage.graph.street(street_id).length
    terms = [length / coverage.length_of(line_id) for line_id in sorted(coverage.lines_on(street_id))]
    return math.fsum(terms) / coverage.n_bus


def edge_weight(p_r: float) -> float:
    return 1.0 / p_r if p_r > 0 else W_MAX


@dataclass(frozen=True, eq=False)
class RoutingGraph:
    base: StreetGraph
    coverage: LineCoverage
    weights: Mapping[str, float]
    network: nx.Graph = field(repr=False)

    def weight(self, street_id: str) -> float:
        try:
            return self.weights[street_id]
        except KeyError:
            raise UnknownElementError("street", street_id) from None

    def as_networkx(self) -> nx.Graph:
        """Intersections as nodes; each edge carries its street id and ω."""
        return self.network


def build_routing_graph(graph: StreetGraph, lines: Iterable[BusLine]) -> RoutingGraph:
    coverage = lines if isinstance(lines, LineCoverage) else LineCoverage(graph, lines)
    if coverage.n_bus == 0:
        weights = {s: W_MAX for s in graph.streets}
    else:
        weights = {s: edge_weight(prob_street(coverage, s)) for s in graph.streets}

    g = nx.Graph()
    for node_id in sorted(graph.intersections):
        g.add_node(node_id)
    for street_id in sorted(graph.streets):
        street = graph.streets[street_id]
        g.add_edge(street.a, street.b, street=street_id, weight=weights[street_id])

    logger.debug(
        "Routing graph built: %d streets, %d lines, %d uncovered",
        len(weights),
        coverage.n_bus,
        sum(1 for w in weights.values() if w >= W_MAX),
    )
    return RoutingGraph(base=graph, coverage=coverage, weights=MappingProxyType(weights), network=g)


def psc(coverage: LineCoverage, i: str, j: str) -> float:
    if not is_adjacent(coverage.graph, i, j):
        raise NotAdjacentError(f"streets {i!r} and {j!r} are not adjoining")
    on_i = coverage.lines_on(i)
    if not on_i:
        return 0.0
    return len(on_i & coverage.lines_on(j)) / len(on_i)


def ppc(coverage: LineCoverage, path: Sequence[str]) -> float:
    if len(path) < 2:
        raise NotAdjacentError(f"path consistency needs at least 2 streets, got {len(path)}")
    transitions = [psc(coverage, i, j) for i, j in zip(path, path[1:])]
    return math.fsum(transitions) / len(transitions) + math.prod(transitions)


def psc_table(coverage: LineCoverage) -> list[dict[str, object]]:
    rows: list[dict[str, object]] = []
    graph = coverage.graph
    for i in sorted(graph.streets):
        for j in sorted(adj for end in graph.street(i).endpoints for adj in graph.incident(end) if adj != i):
            rows.append({"from": i, "to": j, "psc": psc(coverage, i, j)})
    return rows


class _LineRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    streets: list[str] = Field(min_length=1)
    headway_s: float = Field(default=60.0, gt=0)

    @field_validator("id", mode="before")
    @classmethod
    def _coerce_id(cls, v: object) -> str:
        return str(v)

    @field_validator("streets", mode="before")
    @classmethod
    def _coerce_streets(cls, v: object) -> object:
        if isinstance(v, list):
            return [str(x) for x in v]
        return v


class LinesFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lines: list[_LineRecord]


def load_lines(source: str | bytes | Mapping[str, object], graph: StreetGraph) -> list[BusLine]:
    try:
        if isinstance(source, Mapping):
            doc = LinesFile.model_validate(source)
        else:
            doc = LinesFile.model_validate_json(source)
    except ValidationError as e:
        raise MapFormatError(f"malformed bus-line file: {e}") from e

    lines = [BusLine(id=r.id, trajectory=tuple(r.streets), headway_s=r.headway_s) for r in doc.lines]
    seen: set[str] = set()
    for line in lines:
        if line.id in seen:
            raise TrajectoryError(f"duplicate bus line id {line.id!r}")
        seen.add(line.id)
        validate_line(graph, line)
    return lines


def read_lines(path: Path, graph: StreetGraph) -> list[BusLine]:
    return load_lines(path.read_text(encoding="utf-8"), graph)


def save_lines(lines: Iterable[BusLine]) -> str:
    doc = {
        "lines": [
            {"id": ln.id, "streets": list(ln.trajectory), "headway_s": ln.headway_s}
            for ln in sorted(lines, key=lambda ln: ln.id)
        ]
    }
    return json.dumps(doc, indent=2)


def synthesize_lines(graph: StreetGraph, count: int, seed: int, headway_s: float = 60.0) -> list[BusLine]:
    """Shortest street walks between distinct boundary intersections, deterministic per seed."""
    if count < 0:
        raise TrajectoryError(f"line count must be non-negative, got {count}")
    if count == 0:
        return []

    xs = [n.x for n in graph.intersections.values()]
    ys = [n.y for n in graph.intersections.values()]
    lo_x, hi_x, lo_y, hi_y = min(xs), max(xs), min(ys), max(ys)
    boundary = sorted(
        n.id for n in graph.intersections.values() if n.x in (lo_x, hi_x) or n.y in (lo_y, hi_y)
    )
    if len(boundary) < 2:
        boundary = sorted(graph.intersections)

    g = nx.Graph()
    for street in graph.streets.values():
        g.add_edge(street.a, street.b, street=street.id, length=street.length)

    rng = np.random.default_rng(seed)
    lines: list[BusLine] = []
    attempts = 0
    while len(lines) < count and attempts < count * 50:
        attempts += 1
        a, b = rng.choice(len(boundary), size=2, replace=False)
        src, dst = boundary[int(a)], boundary[int(b)]
        try:
            vertices = nx.shortest_path(g, src, dst, weight="length")
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            continue
        trajectory = tuple(g.edges[u, v]["street"] for u, v in zip(vertices, vertices[1:]))
        lines.append(BusLine(id=f"L{len(lines) + 1:02d}", trajectory=trajectory, headway_s=headway_s))
    if len(lines) < count:
        logger.warning("Only %d of %d synthetic lines could be placed", len(lines), count)
    return lines
