from __future__ import annotations

import asyncio
import hashlib
import logging
import math
from collections import deque
from dataclasses import replace
from typing import Sequence

import numpy as np

from app.buses.network import BusLine, build_routing_graph, read_lines, synthesize_lines
from app.errors import ConfigError
from app.events.log import EventLog
from app.experiment.config import DENSITY_LABELS, Axis, ScenarioConfig, with_axis
from app.experiment.metrics import MetricsRecord, average_delay, bucket_breakdown, transmission_ratio
from app.mobility.world import World
from app.roadmap.street_map import Point, StreetGraph, generate_grid, point_at, read_map
from app.routing.engine import PacketState, RoutingEngine

logger = logging.getLogger(__name__)

_MAX_DRAWS = 200


def derive_seed(seed: int, axis: str, value: float) -> int:
    digest = hashlib.sha256(f"{seed}:{axis}:{float(value)!r}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def build_inputs(config: ScenarioConfig) -> tuple[StreetGraph, list[BusLine]]:
    if config.map.file is not None:
        graph = read_map(config.map.file)
    else:
        graph = generate_grid(config.map.rows, config.map.cols, config.map.block_m)
    if config.lines.file is not None:
        lines = read_lines(config.lines.file, graph)
    else:
        lines = synthesize_lines(graph, config.lines.count, config.seed, config.lines.headway_s)
    return graph, lines


def _injection_times(config: ScenarioConfig, rng: np.random.Generator) -> list[float]:
    start = min(config.workload.warmup_s, config.duration_s)
    end = config.duration_s - config.engine.deadline_s
    if end <= start:
        end = config.duration_s
    return sorted(float(t) for t in rng.uniform(start, end, config.workload.packets))


class _Workload:
    """Samples (source vehicle, destination place) pairs at a distance in the configured range."""

    def __init__(self, config: ScenarioConfig, world: World, rng: np.random.Generator) -> None:
        self._config = config
        self._world = world
        self._rng = rng
        self._streets = sorted(world.graph.streets)
        lengths = np.array([world.graph.street(s).length for s in self._streets], dtype=float)
        self._weights = lengths / lengths.sum() if len(lengths) else lengths

    def _place(self) -> Point:
        street = self._streets[int(self._rng.choice(len(self._streets), p=self._weights))]
        offset = float(self._rng.uniform(0.0, self._world.graph.street(street).length))
        return point_at(self._world.graph, street, offset)

    def sample(self) -> tuple[str, Point] | None:
        states = self._world.vehicles.values()
        pool = [v for v in states if v.is_bus] if self._config.workload.source == "bus" else list(states)
        if not pool or not self._streets:
            return None
        span = self._config.workload.distance
        for _ in range(_MAX_DRAWS):
            dst = self._place()
            if span is None:
                return pool[int(self._rng.integers(len(pool)))].id, dst
            lo, hi = span
            fits = [v for v in pool if lo <= math.dist(v.position, dst) < hi]
            if fits:
                return fits[int(self._rng.integers(len(fits)))].id, dst
        return None


def run_scenario(
    config: ScenarioConfig,
    *,
    events: EventLog | None = None,
    ant_trace: EventLog | None = None,
    snapshots: EventLog | None = None,
) -> MetricsRecord:
    logger.info("Scenario %s started (seed=%d, R=%.0f m, cars=%d)", config.scenario_id, config.seed, config.radius, config.cars)
    graph, lines = build_inputs(config)
    world = World(graph, lines, config.world, config.seed)
    for line, fleet in zip(world.lines.values(), config.fleet_split(len(world.lines))):
        world.spawn_buses([line], fleet=fleet)
    world.spawn_cars(config.cars)

    engine = RoutingEngine(
        world,
        build_routing_graph(graph, lines),
        config.faco,
        config.engine,
        rng=np.random.default_rng([config.seed, 1]),
        events=events,
        ant_trace=ant_trace,
    )
    workload_rng = np.random.default_rng([config.seed, 2])
    workload = _Workload(config, world, workload_rng)
    pending = deque(_injection_times(config, workload_rng))
    origin_distance: dict[int, float] = {}
    skipped = 0

    for _ in range(int(round(config.duration_s / config.world.tick))):
        world.step()
        while pending and pending[0] <= world.now + 1e-9:
            pending.popleft()
            pair = workload.sample()
            if pair is None:
                skipped += 1
                continue
            src, dst = pair
            packet = engine.originate(src, dst)
            origin_distance[packet.id] = math.dist(world.vehicle(src).position, dst)
        engine.tick()
        if snapshots is not None:
            snapshots.emit("snapshot", world.now, vehicles=world.snapshot()["vehicles"])

    if skipped:
        logger.warning("Scenario %s: %d packets could not be placed", config.scenario_id, skipped)

    packets = engine.packets
    delivered = [p for p in packets if p.state is PacketState.delivered]
    expired = sum(1 for p in packets if p.state is PacketState.expired)
    record = MetricsRecord(
        scenario_id=config.scenario_id,
        seed=config.seed,
        generated=len(packets),
        delivered=len(delivered),
        expired=expired,
        in_flight=len(packets) - len(delivered) - expired,
        ratio=transmission_ratio(len(delivered), len(packets)),
        avg_delay_s=average_delay(p.delay for p in delivered if p.delay is not None),
        reroutes=sum(p.reroutes for p in packets),
        failed_forwards=sum(p.failed_forwards for p in packets),
        buckets=bucket_breakdown(
            [(origin_distance[p.id], p.state is PacketState.delivered, p.delay) for p in packets]
        ),
    )
    logger.info(
        "Scenario %s finished: %d/%d delivered, avg delay %s",
        config.scenario_id,
        record.delivered,
        record.generated,
        "n/a" if record.avg_delay_s is None else f"{record.avg_delay_s:.2f}s",
    )
    return record


def sweep_labels(axis: Axis, values: Sequence[float]) -> list[str]:
    if axis == "density" and len(values) == len(DENSITY_LABELS):
        rank = {v: i for i, v in enumerate(sorted(values))}
        return [DENSITY_LABELS[rank[v]] for v in values]
    return [f"{v:g}" for v in values]


async def run_sweep(
    base: ScenarioConfig,
    axis: Axis,
    values: Sequence[float],
    *,
    concurrency: int = 4,
) -> list[MetricsRecord]:
    """One scenario per axis value; results in value order whatever the completion order."""
    if not values:
        raise ConfigError("a sweep needs at least one value")
    if len(set(values)) != len(values):
        raise ConfigError(f"sweep values must be distinct: {list(values)}")
    cells = [
        with_axis(base, axis, value, derive_seed(base.seed, axis, value), label)
        for value, label in zip(values, sweep_labels(axis, values))
    ]
    sem = asyncio.Semaphore(concurrency)

    async def _cell(value: float, cfg: ScenarioConfig) -> MetricsRecord:
        async with sem:
            try:
                record = await asyncio.to_thread(run_scenario, cfg)
            except Exception:
                logger.warning("Sweep cell %s failed", cfg.scenario_id)
                raise
        return replace(record, axis_value=float(value))

    logger.info("Sweep over %s: %d cells, concurrency %d", axis, len(cells), concurrency)
    return list(await asyncio.gather(*[_cell(v, c) for v, c in zip(values, cells)]))
