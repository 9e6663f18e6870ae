from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from app.buses.network import (
    W_MAX,
    BusLine,
    LineCoverage,
    build_routing_graph,
    edge_weight,
    load_lines,
    ppc,
    prob_bus_on_street,
    prob_street,
    psc,
    psc_table,
    save_lines,
    synthesize_lines,
    walk_vertices,
)
from app.errors import MapFormatError, NoBusLinesError, NotAdjacentError, TrajectoryError, UnknownElementError
from app.roadmap.street_map import generate_grid
from tests.conftest import SAMPLE_LINES, P1, P2, P3, make_graph


@pytest.fixture
def chain():
    # 100 m, 300 m and 600 m streets in a row
    return make_graph(
        {"a": (0, 0), "b": (100, 0), "c": (400, 0), "d": (1000, 0)},
        [("r1", "a", "b"), ("r2", "b", "c"), ("r3", "c", "d")],
    )


def test_prob_bus_on_street_is_length_share(chain) -> None:
    line = BusLine("L", ("r1", "r2", "r3"))
    assert prob_bus_on_street(chain, line, "r1") == pytest.approx(0.1)
    assert prob_bus_on_street(chain, BusLine("M", ("r2", "r3")), "r1") == 0.0
    assert math.fsum(prob_bus_on_street(chain, line, s) for s in chain.streets) == pytest.approx(1.0)
    with pytest.raises(UnknownElementError):
        prob_bus_on_street(chain, line, "r9")


def test_prob_street(chain) -> None:
    cov = LineCoverage(chain, [BusLine("L", ("r2",))])
    assert prob_street(cov, "r2") == 1.0
    assert prob_street(cov, "r1") == 0.0
    with pytest.raises(NoBusLinesError):
        prob_street(LineCoverage(chain, []), "r1")


@pytest.mark.parametrize(("p", "w"), [(0.25, 4.0), (1.0, 1.0), (0.0, W_MAX)])
def test_edge_weight(p: float, w: float) -> None:
    assert edge_weight(p) == w


def test_one_line_on_two_equal_streets_weighs_two() -> None:
    graph = make_graph({"a": (0, 0), "b": (100, 0), "c": (200, 0)}, [("x", "a", "b"), ("y", "b", "c")])
    routing = build_routing_graph(graph, [BusLine("L", ("x", "y"))])
    assert routing.weight("x") == pytest.approx(2.0)
    assert routing.weight("y") == pytest.approx(2.0)


def test_zero_lines_gives_sentinel_everywhere(grid4) -> None:
    routing = build_routing_graph(grid4, [])
    assert set(routing.weights.values()) == {W_MAX}


def test_routing_graph_is_symmetric_and_label_independent(grid4) -> None:
    lines = synthesize_lines(grid4, 3, seed=4)
    relabeled = [BusLine(f"Z{i}", ln.trajectory, ln.headway_s) for i, ln in enumerate(reversed(lines))]
    a = build_routing_graph(grid4, lines)
    b = build_routing_graph(grid4, relabeled)
    assert dict(a.weights) == pytest.approx(dict(b.weights))
    g = a.as_networkx()
    for street in grid4.streets.values():
        assert g.edges[street.a, street.b]["weight"] == g.edges[street.b, street.a]["weight"]


def test_build_routing_graph_rejects_broken_trajectory(grid4) -> None:
    with pytest.raises(TrajectoryError):
        build_routing_graph(grid4, [BusLine("L", ("h0_0", "h2_2"))])


def test_sample_psc_values(sample_coverage) -> None:
    assert psc(sample_coverage, "E1", "E5") == 0.5
    assert psc(sample_coverage, "E5", "E7") == 1.0
    assert psc(sample_coverage, "E7", "E8") == 0.5
    assert psc(sample_coverage, "E4", "E2") == 0.5
    assert psc(sample_coverage, "E2", "E7") == 0.0


def test_psc_is_asymmetric_and_guards_adjacency(sample_coverage) -> None:
    assert psc(sample_coverage, "E5", "E1") == 1.0
    with pytest.raises(NotAdjacentError):
        psc(sample_coverage, "E1", "E8")
    with pytest.raises(NotAdjacentError):
        psc(sample_coverage, "E1", "E1")


def test_psc_with_no_lines_on_first_street(sample_graph) -> None:
    cov = LineCoverage(sample_graph, [BusLine("L", ("E7", "E8"))])
    assert psc(cov, "E5", "E7") == 0.0


def test_sample_ppc_is_exact(sample_coverage) -> None:
    assert Fraction(ppc(sample_coverage, P1)).limit_denominator(1000) == Fraction(11, 12)
    assert ppc(sample_coverage, P1) == pytest.approx(11 / 12, abs=1e-12)
    assert ppc(sample_coverage, P2) == pytest.approx(1 / 3, abs=1e-12)
    assert ppc(sample_coverage, P3) == pytest.approx(1 / 6, abs=1e-12)


def test_ppc_full_consistency_and_short_path(sample_coverage) -> None:
    assert ppc(sample_coverage, ("E5", "E7")) == 2.0
    with pytest.raises(NotAdjacentError):
        ppc(sample_coverage, ("E1",))


def test_psc_table_covers_every_adjoining_pair(sample_coverage) -> None:
    rows = psc_table(sample_coverage)
    pairs = {(r["from"], r["to"]) for r in rows}
    assert ("E1", "E5") in pairs and ("E5", "E1") in pairs
    assert all(0.0 <= r["psc"] <= 1.0 for r in rows)


def test_probability_axioms_on_random_instances() -> None:
    rng = np.random.default_rng(2024)
    for trial in range(100):
        rows, cols = (int(x) for x in rng.integers(2, 6, size=2))
        graph = generate_grid(rows, cols, float(rng.uniform(50, 800)))
        lines = synthesize_lines(graph, int(rng.integers(1, 6)), seed=trial)
        cov = LineCoverage(graph, lines)
        for line in lines:
            assert not line.repeats_streets
            total = math.fsum(prob_bus_on_street(graph, line, s) for s in graph.streets)
            assert total == pytest.approx(1.0, abs=1e-9)
        assert math.fsum(prob_street(cov, s) for s in graph.streets) == pytest.approx(1.0, abs=1e-9)


def test_walk_vertices(sample_graph) -> None:
    assert walk_vertices(sample_graph, ("E1", "E5", "E7", "E8")) == ("S", "A", "B", "C", "D")
    assert walk_vertices(sample_graph, ("E7", "E3")) == ("B", "C", "E")
    assert walk_vertices(sample_graph, ("E8",)) == ("C", "D")
    with pytest.raises(TrajectoryError):
        walk_vertices(sample_graph, ("E1", "E8"))


def test_lines_file_round_trip(sample_graph) -> None:
    again = load_lines(save_lines(SAMPLE_LINES), sample_graph)
    assert sorted(again, key=lambda ln: ln.id) == SAMPLE_LINES


def test_lines_file_errors(sample_graph) -> None:
    with pytest.raises(MapFormatError):
        load_lines('{"lines": [{"id": "L", "streets": []}]}', sample_graph)
    with pytest.raises(UnknownElementError):
        load_lines({"lines": [{"id": "L", "streets": ["E1", "E99"]}]}, sample_graph)
    with pytest.raises(TrajectoryError):
        load_lines({"lines": [{"id": "L", "streets": ["E1"]}, {"id": "L", "streets": ["E5"]}]}, sample_graph)


def test_repeating_trajectory_warns(sample_graph, caplog) -> None:
    load_lines({"lines": [{"id": "loop", "streets": ["E5", "E7", "E3", "E6", "E2", "E7"]}]}, sample_graph)
    assert "repeats streets" in caplog.text


def test_synthesize_lines_is_deterministic(grid4) -> None:
    assert synthesize_lines(grid4, 4, seed=9) == synthesize_lines(grid4, 4, seed=9)
    assert [ln.id for ln in synthesize_lines(grid4, 3, seed=1)] == ["L01", "L02", "L03"]
