from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from app.errors import MapFormatError, MapValidationError, UnknownElementError

logger = logging.getLogger(__name__)

Point = tuple[float, float]


class Heading(enum.Enum):
    FORWARD = "forward"  # a -> b
    BACKWARD = "backward"  # b -> a

    def reversed(self) -> Heading:
        return Heading.BACKWARD if self is Heading.FORWARD else Heading.FORWARD


@dataclass(frozen=True)
class Intersection:
    id: str
    x: float
    y: float

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class Street:
    id: str
    a: str
    b: str
    length: float

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def other_end(self, vertex: str) -> str:
        if vertex == self.a:
            return self.b
        if vertex == self.b:
            return self.a
        raise UnknownElementError("endpoint", f"{vertex} on {self.id}")

    def start_of(self, heading: Heading) -> str:
        return self.a if heading is Heading.FORWARD else self.b

    def end_of(self, heading: Heading) -> str:
        return self.b if heading is Heading.FORWARD else self.a

    def heading_from(self, vertex: str) -> Heading:
        if vertex == self.a:
            return Heading.FORWARD
        if vertex == self.b:
            return Heading.BACKWARD
        raise UnknownElementError("endpoint", f"{vertex} on {self.id}")


class StreetGraph:
    """Immutable undirected road map: intersections joined by straight streets."""

    def __init__(self, intersections: Iterable[Intersection], streets: Iterable[tuple[str, str, str]]) -> None:
        nodes: dict[str, Intersection] = {}
        for node in intersections:
            if node.id in nodes:
                raise MapValidationError("duplicate intersection id", node.id)
            if not (math.isfinite(node.x) and math.isfinite(node.y)):
                raise MapValidationError("non-finite intersection position", node.id)
            nodes[node.id] = node

        edges: dict[str, Street] = {}
        pairs: dict[frozenset[str], str] = {}
        adjacency: dict[str, list[str]] = {node_id: [] for node_id in nodes}
        for street_id, a, b in streets:
            if street_id in edges:
                raise MapValidationError("duplicate street id", street_id)
            for end in (a, b):
                if end not in nodes:
                    raise MapValidationError(f"street references unknown intersection {end!r}", street_id)
            if a == b:
                raise MapValidationError("street endpoints must be distinct", street_id)
            pair = frozenset((a, b))
            if pair in pairs:
                raise MapValidationError(f"second street between {a!r} and {b!r} (first: {pairs[pair]!r})", street_id)
            length = math.dist(nodes[a].position, nodes[b].position)
            if length <= 0:
                raise MapValidationError("non-positive street length", street_id)
            edges[street_id] = Street(id=street_id, a=a, b=b, length=length)
            pairs[pair] = street_id
            adjacency[a].append(street_id)
            adjacency[b].append(street_id)

        self._intersections = MappingProxyType(nodes)
        self._streets = MappingProxyType(edges)
        self._adjacency = MappingProxyType({k: tuple(v) for k, v in adjacency.items()})
        self._pairs = MappingProxyType(pairs)

    @property
    def intersections(self) -> Mapping[str, Intersection]:
        return self._intersections

    @property
    def streets(self) -> Mapping[str, Street]:
        return self._streets

    @property
    def adjacency(self) -> Mapping[str, tuple[str, ...]]:
        return self._adjacency

    def intersection(self, intersection_id: str) -> Intersection:
        try:
            return self._intersections[intersection_id]
        except KeyError:
            raise UnknownElementError("intersection", intersection_id) from None

    def street(self, street_id: str) -> Street:
        try:
            return self._streets[street_id]
        except KeyError:
            raise UnknownElementError("street", street_id) from None

    def incident(self, intersection_id: str) -> tuple[str, ...]:
        try:
            return self._adjacency[intersection_id]
        except KeyError:
            raise UnknownElementError("intersection", intersection_id) from None

    def street_between(self, a: str, b: str) -> Street | None:
        street_id = self._pairs.get(frozenset((a, b)))
        return self._streets[street_id] if street_id is not None else None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StreetGraph):
            return NotImplemented
        return dict(self._intersections) == dict(other._intersections) and dict(self._streets) == dict(other._streets)

    def __repr__(self) -> str:
        return f"StreetGraph(intersections={len(self._intersections)}, streets={len(self._streets)})"


class _IntersectionRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    x: float
    y: float

    @field_validator("id", mode="before")
    @classmethod
    def _coerce_id(cls, v: object) -> str:
        return str(v)


class _StreetRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    a: str
    b: str

    @field_validator("id", "a", "b", mode="before")
    @classmethod
    def _coerce_id(cls, v: object) -> str:
        return str(v)


class MapFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    intersections: list[_IntersectionRecord]
    streets: list[_StreetRecord]


def load_map(source: str | bytes | Mapping[str, object]) -> StreetGraph:
    try:
        if isinstance(source, Mapping):
            doc = MapFile.model_validate(source)
        else:
            doc = MapFile.model_validate_json(source)
    except ValidationError as e:
        raise MapFormatError(f"malformed map file: {e}") from e

    graph = StreetGraph(
        (Intersection(id=r.id, x=r.x, y=r.y) for r in doc.intersections),
        ((r.id, r.a, r.b) for r in doc.streets),
    )
    logger.debug("Map loaded: %s", graph)
    return graph


def read_map(path: Path) -> StreetGraph:
    return load_map(path.read_text(encoding="utf-8"))


def save_map(graph: StreetGraph) -> str:
    doc = {
        "intersections": [{"id": n.id, "x": n.x, "y": n.y} for n in graph.intersections.values()],
        "streets": [{"id": s.id, "a": s.a, "b": s.b} for s in graph.streets.values()],
    }
    return json.dumps(doc, indent=2)


def generate_grid(rows: int, cols: int, block: float) -> StreetGraph:
    if rows < 2 or cols < 2:
        raise MapValidationError(f"grid needs at least 2x2 intersections, got {rows}x{cols}")
    if not block > 0:
        raise MapValidationError(f"grid block must be positive, got {block}")

    def node_id(r: int, c: int) -> str:
        return f"n{r}_{c}"

    nodes = [Intersection(id=node_id(r, c), x=c * block, y=r * block) for r in range(rows) for c in range(cols)]
    streets: list[tuple[str, str, str]] = []
    for r in range(rows):
        for c in range(cols - 1):
            streets.append((f"h{r}_{c}", node_id(r, c), node_id(r, c + 1)))
    for r in range(rows - 1):
        for c in range(cols):
            streets.append((f"v{r}_{c}", node_id(r, c), node_id(r + 1, c)))
    return StreetGraph(nodes, streets)


def adjacent_streets(graph: StreetGraph, street_id: str) -> frozenset[str]:
    street = graph.street(street_id)
    return frozenset(s for end in street.endpoints for s in graph.incident(end) if s != street_id)


def is_adjacent(graph: StreetGraph, i: str, j: str) -> bool:
    if i == j:
        return False
    si, sj = graph.street(i), graph.street(j)
    return bool(set(si.endpoints) & set(sj.endpoints))


def point_at(graph: StreetGraph, street_id: str, offset: float, heading: Heading = Heading.FORWARD) -> Point:
    street = graph.street(street_id)
    if not (0.0 <= offset <= street.length):
        raise MapValidationError(f"offset {offset} outside [0, {street.length}]", street_id)
    start = graph.intersection(street.start_of(heading))
    end = graph.intersection(street.end_of(heading))
    f = offset / street.length
    return (start.x + (end.x - start.x) * f, start.y + (end.y - start.y) * f)


def unit_vector(graph: StreetGraph, street_id: str, heading: Heading = Heading.FORWARD) -> Point:
    street = graph.street(street_id)
    start = graph.intersection(street.start_of(heading))
    end = graph.intersection(street.end_of(heading))
    return ((end.x - start.x) / street.length, (end.y - start.y) / street.length)
