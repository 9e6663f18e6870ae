from __future__ import annotations

import json
import math

import pytest

from app.errors import MapFormatError, MapValidationError, UnknownElementError
from app.roadmap.street_map import (
    Heading,
    adjacent_streets,
    generate_grid,
    is_adjacent,
    load_map,
    point_at,
    save_map,
)


def test_load_map_computes_length_from_positions() -> None:
    graph = load_map(
        {
            "intersections": [{"id": "a", "x": 0, "y": 0}, {"id": "b", "x": 100, "y": 0}],
            "streets": [{"id": "r", "a": "a", "b": "b"}],
        }
    )
    assert graph.street("r").length == pytest.approx(100.0)
    assert graph.incident("a") == ("r",)


def test_load_map_numeric_ids_become_strings() -> None:
    graph = load_map(
        json.dumps(
            {
                "intersections": [{"id": 1, "x": 0, "y": 0}, {"id": 2, "x": 0, "y": 50}],
                "streets": [{"id": 7, "a": 1, "b": 2}],
            }
        )
    )
    assert graph.street("7").endpoints == ("1", "2")


def test_load_map_unknown_intersection_is_named() -> None:
    with pytest.raises(MapValidationError) as err:
        load_map(
            {
                "intersections": [{"id": "a", "x": 0, "y": 0}],
                "streets": [{"id": "r", "a": "a", "b": "ghost"}],
            }
        )
    assert err.value.element == "r"
    assert "ghost" in str(err.value)


@pytest.mark.parametrize(
    "doc",
    [
        # duplicate intersection id
        {"intersections": [{"id": "a", "x": 0, "y": 0}, {"id": "a", "x": 1, "y": 0}], "streets": []},
        # zero-length street
        {
            "intersections": [{"id": "a", "x": 0, "y": 0}, {"id": "b", "x": 0, "y": 0}],
            "streets": [{"id": "r", "a": "a", "b": "b"}],
        },
        # two streets over the same pair
        {
            "intersections": [{"id": "a", "x": 0, "y": 0}, {"id": "b", "x": 5, "y": 0}],
            "streets": [{"id": "r", "a": "a", "b": "b"}, {"id": "q", "a": "b", "b": "a"}],
        },
        # self loop
        {"intersections": [{"id": "a", "x": 0, "y": 0}], "streets": [{"id": "r", "a": "a", "b": "a"}]},
    ],
)
def test_load_map_rejects_invalid_topology(doc: dict) -> None:
    with pytest.raises(MapValidationError):
        load_map(doc)


def test_load_map_malformed_json() -> None:
    with pytest.raises(MapFormatError):
        load_map("{not json")
    with pytest.raises(MapFormatError):
        load_map({"intersections": [], "streets": [], "extra": 1})


@pytest.mark.parametrize(("rows", "cols", "n", "m"), [(2, 2, 4, 4), (4, 4, 16, 24), (3, 5, 15, 22)])
def test_generate_grid_counts(rows: int, cols: int, n: int, m: int) -> None:
    graph = generate_grid(rows, cols, 500.0)
    assert len(graph.intersections) == n
    assert len(graph.streets) == m
    assert all(s.length == pytest.approx(500.0) for s in graph.streets.values())
    assert sum(len(v) for v in graph.adjacency.values()) == 2 * m


@pytest.mark.parametrize(("rows", "cols", "block"), [(2, 2, 0.0), (1, 4, 100.0), (3, 3, -5.0)])
def test_generate_grid_rejects_bad_dimensions(rows: int, cols: int, block: float) -> None:
    with pytest.raises(MapValidationError):
        generate_grid(rows, cols, block)


def test_grid_round_trips_through_save_and_load() -> None:
    graph = generate_grid(4, 4, 250.0)
    assert load_map(save_map(graph)) == graph


def test_adjacent_streets_on_grids() -> None:
    g2 = generate_grid(2, 2, 100.0)
    assert adjacent_streets(g2, "h0_0") == frozenset({"v0_0", "v0_1"})

    g3 = generate_grid(3, 3, 100.0)
    assert adjacent_streets(g3, "h1_0") == frozenset({"v0_0", "v1_0", "h1_1", "v0_1", "v1_1"})

    # both ends are 4-way crossings
    g4 = generate_grid(4, 4, 100.0)
    assert len(adjacent_streets(g4, "h1_1")) == 6


def test_adjacent_streets_isolated_and_unknown(strip) -> None:
    assert adjacent_streets(strip, "s") == frozenset()
    with pytest.raises(UnknownElementError):
        adjacent_streets(strip, "nope")


def test_is_adjacent_excludes_self(sample_graph) -> None:
    assert is_adjacent(sample_graph, "E1", "E5")
    assert not is_adjacent(sample_graph, "E1", "E1")
    assert not is_adjacent(sample_graph, "E1", "E8")


def test_point_at_interpolates_in_heading() -> None:
    graph = load_map(
        {
            "intersections": [{"id": "a", "x": 0, "y": 0}, {"id": "b", "x": 100, "y": 0}],
            "streets": [{"id": "r", "a": "a", "b": "b"}],
        }
    )
    assert point_at(graph, "r", 0.0) == (0.0, 0.0)
    assert point_at(graph, "r", 100.0) == (100.0, 0.0)
    assert point_at(graph, "r", 50.0) == (50.0, 0.0)
    assert point_at(graph, "r", 30.0, Heading.BACKWARD) == (70.0, 0.0)
    with pytest.raises(MapValidationError):
        point_at(graph, "r", 100.5)


def test_point_at_is_distance_preserving(grid4) -> None:
    street = grid4.street("v1_2")
    for o1, o2 in [(0.0, 10.0), (12.5, 99.0), (40.0, 40.0)]:
        p1 = point_at(grid4, street.id, o1)
        p2 = point_at(grid4, street.id, o2)
        assert math.dist(p1, p2) == pytest.approx(abs(o1 - o2))
