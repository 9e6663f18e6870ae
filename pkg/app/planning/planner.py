from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import networkx as nx

from app.buses.network import W_MAX, LineCoverage, RoutingGraph, ppc
from app.errors import PlanningError, UnknownElementError
from app.roadmap.street_map import Point, StreetGraph

logger = logging.getLogger(__name__)

DEFAULT_K = 5

# Ties at the k-th weight can be numerous on regular grids; cap how many
# extra equal-weight paths are pulled from the generator.
_TIE_LIMIT = 256
_TIE_RTOL = 1e-9

# A one-street path has no transition that could deviate.
SINGLE_STREET_PPC = 2.0


@dataclass(frozen=True)
class RoutingPath:
    streets: tuple[str, ...]
    vertices: tuple[str, ...]
    total_weight: float
    ppc: float

    @property
    def src_vertex(self) -> str:
        return self.vertices[0]

    @property
    def dst_vertex(self) -> str:
        return self.vertices[-1]

    def index_of(self, street_id: str, start: int = 0) -> int | None:
        try:
            return self.streets.index(street_id, start)
        except ValueError:
            return None

    def has_uncovered_street(self, graph: RoutingGraph) -> bool:
        return any(graph.weight(s) >= W_MAX for s in self.streets)


def path_consistency(coverage: LineCoverage, streets: Sequence[str]) -> float:
    if len(streets) == 1:
        return SINGLE_STREET_PPC
    return ppc(coverage, streets)


def make_path(graph: RoutingGraph, vertices: Sequence[str]) -> RoutingPath:
    g = graph.as_networkx()
    streets = tuple(g.edges[u, v]["street"] for u, v in zip(vertices, vertices[1:]))
    if not streets:
        raise PlanningError("a routing path needs at least one street")
    return RoutingPath(
        streets=streets,
        vertices=tuple(vertices),
        total_weight=math.fsum(graph.weight(s) for s in streets),
        ppc=path_consistency(graph.coverage, streets),
    )


def single_street_path(graph: RoutingGraph, street_id: str, towards: str) -> RoutingPath:
    street = graph.base.street(street_id)
    return make_path(graph, (street.other_end(towards), towards))


def _order_key(path: RoutingPath) -> tuple[float, tuple[str, ...]]:
    return (path.total_weight, path.streets)


def k_min_weight_paths(graph: RoutingGraph, src: str, dst: str, k: int = DEFAULT_K) -> list[RoutingPath]:
    """Up to k loopless paths by nondecreasing total weight (Yen), ties by street ids.

    An empty list means src and dst are disconnected.
    """
    if k < 1:
        raise PlanningError(f"k must be at least 1, got {k}")
    for vertex in (src, dst):
        graph.base.intersection(vertex)
    if src == dst:
        raise PlanningError(f"source and destination are the same intersection {src!r}")

    generator = nx.shortest_simple_paths(graph.as_networkx(), src, dst, weight="weight")
    found: list[RoutingPath] = []
    cutoff: float | None = None
    try:
        for vertices in itertools.islice(generator, k + _TIE_LIMIT):
            path = make_path(graph, vertices)
            if cutoff is not None and path.total_weight > cutoff:
                break
            found.append(path)
            if len(found) == k:
                cutoff = path.total_weight * (1 + _TIE_RTOL)
    except nx.NetworkXNoPath:
        logger.debug("No path between %s and %s", src, dst)
        return []

    found.sort(key=_order_key)
    return found[:k]


def select_routing_path(
    graph: RoutingGraph,
    coverage: LineCoverage,
    src: str,
    dst: str,
    k: int = DEFAULT_K,
) -> RoutingPath:
    candidates = k_min_weight_paths(graph, src, dst, k)
    if not candidates:
        raise PlanningError(f"no path from {src!r} to {dst!r}")

    covered = [p for p in candidates if not p.has_uncovered_street(graph)]
    if covered:
        candidates = covered

    if coverage is not graph.coverage:
        candidates = [
            RoutingPath(p.streets, p.vertices, p.total_weight, path_consistency(coverage, p.streets))
            for p in candidates
        ]
    best = min(candidates, key=lambda p: (-p.ppc, p.total_weight, p.streets))
    logger.debug("Routing path %s -> %s: %s (ppc=%.4f, w=%.4g)", src, dst, best.streets, best.ppc, best.total_weight)
    return best


def resolve_endpoints(graph: StreetGraph, src_pos: Point, dst_pos: Point) -> tuple[str, str]:
    return nearest_intersection(graph, src_pos), nearest_intersection(graph, dst_pos)


def nearest_intersection(graph: StreetGraph, pos: Point) -> str:
    if not graph.intersections:
        raise UnknownElementError("intersection", "any (empty map)")
    if not all(math.isfinite(c) for c in pos):
        raise PlanningError(f"position must be finite, got {pos}")
    return min(graph.intersections.values(), key=lambda n: (math.dist(n.position, pos), n.id)).id
