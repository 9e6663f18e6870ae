from __future__ import annotations

import pytest

from app.buses.network import BusLine, LineCoverage, build_routing_graph
from app.mobility.world import VehicleKind, VehicleState, World, WorldConfig
from app.roadmap.street_map import Heading, Intersection, StreetGraph, generate_grid

# Two parallel corridors between S and D; every street is 100 m.
SAMPLE_NODES = {
    "S": (0.0, 0.0),
    "A": (0.0, 100.0),
    "B": (100.0, 100.0),
    "C": (200.0, 100.0),
    "D": (300.0, 100.0),
    "V": (100.0, 0.0),
    "E": (200.0, 0.0),
}
SAMPLE_STREETS = [
    ("E1", "S", "A"),
    ("E5", "A", "B"),
    ("E7", "B", "C"),
    ("E8", "C", "D"),
    ("E4", "S", "V"),
    ("E2", "V", "B"),
    ("E6", "V", "E"),
    ("E3", "E", "C"),
]
SAMPLE_LINES = [
    BusLine("L1", ("E1", "E5", "E7", "E8")),
    BusLine("L2", ("E1", "E4", "E6")),
    BusLine("L3", ("E7", "E3")),
    BusLine("L4", ("E4", "E2")),
]
P1 = ("E1", "E5", "E7", "E8")
P2 = ("E4", "E2", "E7", "E8")
P3 = ("E4", "E6", "E3", "E8")
P4 = ("E1", "E5", "E2", "E6", "E3", "E8")


def make_graph(nodes: dict[str, tuple[float, float]], streets: list[tuple[str, str, str]]) -> StreetGraph:
    return StreetGraph([Intersection(k, x, y) for k, (x, y) in nodes.items()], streets)


@pytest.fixture
def sample_graph() -> StreetGraph:
    return make_graph(SAMPLE_NODES, SAMPLE_STREETS)


@pytest.fixture
def sample_coverage(sample_graph: StreetGraph) -> LineCoverage:
    return LineCoverage(sample_graph, SAMPLE_LINES)


@pytest.fixture
def sample_routing(sample_graph: StreetGraph):
    return build_routing_graph(sample_graph, SAMPLE_LINES)


@pytest.fixture
def grid4() -> StreetGraph:
    return generate_grid(4, 4, 100.0)


@pytest.fixture
def strip() -> StreetGraph:
    """One 2 km street along the x axis, centered on the origin."""
    return make_graph({"W": (-1000.0, 0.0), "X": (1000.0, 0.0)}, [("s", "W", "X")])


def make_world(graph: StreetGraph, lines=(), seed: int = 7, **config) -> World:
    return World(graph, lines, WorldConfig(**config), seed)


def place(world: World, vid: str, kind: VehicleKind, x: float, v: float, street: str = "s") -> VehicleState:
    """Put a vehicle on the strip at abscissa x, driving at signed speed v."""
    heading = Heading.FORWARD if v >= 0 else Heading.BACKWARD
    offset = x + 1000.0 if heading is Heading.FORWARD else 1000.0 - x
    return world.add_vehicle(
        VehicleState(id=vid, kind=kind, street=street, offset=offset, heading=heading, speed=abs(v))
    )
