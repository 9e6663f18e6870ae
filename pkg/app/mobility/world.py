from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial import cKDTree

from app.buses.network import BusLine, walk_vertices
from app.errors import ConfigError, UnknownElementError
from app.radio.link_model import Kinematics, Vector, VelocityStats, update_velocity_stats
from app.roadmap.street_map import Heading, Point, StreetGraph, point_at, unit_vector

logger = logging.getLogger(__name__)

KMH = 1000.0 / 3600.0


class VehicleKind(str, enum.Enum):
    bus = "bus"
    car = "car"


class WorldConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tick: float = Field(default=0.1, gt=0)
    beacon_interval: float = Field(default=1.0, gt=0)
    expiry_beacons: int = Field(default=3, ge=1)
    radius: float = Field(default=200.0, gt=0, le=1000)
    v_min_kmh: float = Field(default=10.0, ge=0)
    v_max_kmh: float = Field(default=40.0, gt=0)
    terminal_pause_s: float = Field(default=10.0, ge=0)
    fleet_per_line: int = Field(default=6, ge=0)

    @model_validator(mode="after")
    def _check(self) -> WorldConfig:
        if self.v_min_kmh > self.v_max_kmh:
            raise ValueError("v_min_kmh must not exceed v_max_kmh")
        ratio = self.beacon_interval / self.tick
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("beacon_interval must be a whole number of ticks")
        return self

    @property
    def expiry_s(self) -> float:
        return self.expiry_beacons * self.beacon_interval

    @property
    def ticks_per_beacon(self) -> int:
        return int(round(self.beacon_interval / self.tick))

    @property
    def speed_bounds(self) -> tuple[float, float]:
        return (self.v_min_kmh * KMH, self.v_max_kmh * KMH)


@dataclass(slots=True)
class WorldClock:
    tick: float
    steps: int = 0

    @property
    def now(self) -> float:
        return self.steps * self.tick


@dataclass(slots=True)
class VehicleState:
    id: str
    kind: VehicleKind
    street: str
    offset: float
    heading: Heading
    speed: float
    line: str | None = None
    trajectory_index: int = 0
    outbound: bool = True
    paused_until: float = 0.0
    position: Point = (0.0, 0.0)
    velocity: Vector = (0.0, 0.0)
    stats: VelocityStats = field(default_factory=VelocityStats)

    @property
    def is_bus(self) -> bool:
        return self.kind is VehicleKind.bus

    @property
    def kinematics(self) -> Kinematics:
        return Kinematics(position=self.position, velocity=self.velocity)


@dataclass(frozen=True, slots=True)
class NeighborEntry:
    neighbor_id: str
    kind: VehicleKind
    position: Point
    velocity: Vector
    street: str
    last_seen: float
    velocity_stats: VelocityStats
    distance: float

    @property
    def is_bus(self) -> bool:
        return self.kind is VehicleKind.bus

    def kinematics_at(self, now: float) -> Kinematics:
        return Kinematics(position=self.position, velocity=self.velocity).at(now - self.last_seen)


@dataclass(frozen=True, order=True)
class _Departure:
    time: float
    line: str
    terminal: int
    serial: int


class World:
    """Single-threaded discrete-time world of buses and cars on a StreetGraph."""

    def __init__(self, graph: StreetGraph, lines: Iterable[BusLine], config: WorldConfig, seed: int) -> None:
        self.graph = graph
        self.config = config
        self.seed = seed
        self.lines: Mapping[str, BusLine] = MappingProxyType({ln.id: ln for ln in sorted(lines, key=lambda ln: ln.id)})
        self._walks = {ln.id: walk_vertices(graph, ln.trajectory) for ln in self.lines.values()}
        self.clock = WorldClock(tick=config.tick)
        self._rng = np.random.default_rng(seed)
        self._vehicles: dict[str, VehicleState] = {}
        self._tables: dict[str, dict[str, NeighborEntry]] = {}
        self._departures: list[_Departure] = []
        self._next_purge_at = math.inf
        self._car_serial = 0

    @property
    def now(self) -> float:
        return self.clock.now

    @property
    def vehicles(self) -> Mapping[str, VehicleState]:
        return MappingProxyType(self._vehicles)

    def vehicle(self, vehicle_id: str) -> VehicleState:
        try:
            return self._vehicles[vehicle_id]
        except KeyError:
            raise UnknownElementError("vehicle", vehicle_id) from None

    def buses(self) -> list[VehicleState]:
        return [v for v in self._vehicles.values() if v.is_bus]

    # ---- population ---------------------------------------------------

    def add_vehicle(self, state: VehicleState) -> VehicleState:
        if state.id in self._vehicles:
            raise ConfigError(f"vehicle id already present: {state.id!r}")
        v_lo, v_hi = self.config.speed_bounds
        if not v_lo - 1e-9 <= state.speed <= v_hi + 1e-9:
            raise ConfigError(f"speed {state.speed} of {state.id!r} outside [{v_lo}, {v_hi}] m/s")
        street = self.graph.street(state.street)
        state.offset = min(max(state.offset, 0.0), street.length)
        self._vehicles[state.id] = state
        self._tables[state.id] = {}
        self._refresh_kinematics(state)
        return state

    def spawn_buses(
        self,
        lines: Iterable[BusLine] | None = None,
        headway: float | None = None,
        fleet: int | None = None,
    ) -> None:
        fleet_size = self.config.fleet_per_line if fleet is None else fleet
        chosen = sorted(lines, key=lambda ln: ln.id) if lines is not None else list(self.lines.values())
        for line in chosen:
            if line.id not in self.lines:
                raise UnknownElementError("bus line", line.id)
            gap = line.headway_s if headway is None else headway
            for n in range(fleet_size):
                self._departures.append(_Departure(time=(n // 2) * gap, line=line.id, terminal=n % 2, serial=n))
        self._departures.sort()
        self._release_departures()

    def spawn_cars(self, count: int) -> None:
        if count < 0:
            raise ConfigError(f"car count must be non-negative, got {count}")
        street_ids = sorted(self.graph.streets)
        if count and not street_ids:
            raise ConfigError("cannot place cars on a map without streets")
        v_lo, v_hi = self.config.speed_bounds
        for _ in range(count):
            street_id = street_ids[int(self._rng.integers(len(street_ids)))]
            length = self.graph.street(street_id).length
            offset = float(self._rng.uniform(0.0, length))
            heading = Heading.FORWARD if self._rng.random() < 0.5 else Heading.BACKWARD
            speed = float(self._rng.uniform(v_lo, v_hi))
            self._car_serial += 1
            self.add_vehicle(
                VehicleState(
                    id=f"c-{self._car_serial:05d}",
                    kind=VehicleKind.car,
                    street=street_id,
                    offset=offset,
                    heading=heading,
                    speed=speed,
                )
            )

    def _release_departures(self) -> None:
        now = self.clock.now
        while self._departures and self._departures[0].time <= now + 1e-9:
            dep = self._departures.pop(0)
            self._depart(dep)

    def _depart(self, dep: _Departure) -> None:
        line = self.lines[dep.line]
        walk = self._walks[dep.line]
        v_lo, v_hi = self.config.speed_bounds
        if dep.terminal == 0:
            index, outbound, start = 0, True, walk[0]
        else:
            index, outbound, start = len(line.trajectory) - 1, False, walk[-1]
        street = self.graph.street(line.trajectory[index])
        bus = VehicleState(
            id=f"b-{dep.line}-{dep.serial:03d}",
            kind=VehicleKind.bus,
            street=street.id,
            offset=0.0,
            heading=street.heading_from(start),
            speed=float(self._rng.uniform(v_lo, v_hi)),
            line=dep.line,
            trajectory_index=index,
            outbound=outbound,
        )
        self.add_vehicle(bus)
        logger.debug("Bus %s departed terminal %d of line %s at t=%.1f", bus.id, dep.terminal, dep.line, self.now)

    # ---- dynamics -----------------------------------------------------

    def step(self) -> None:
        self.clock.steps += 1
        now = self.clock.now
        for vehicle in self._vehicles.values():
            if vehicle.paused_until > now:
                vehicle.velocity = (0.0, 0.0)
                continue
            self._advance(vehicle, vehicle.speed * self.config.tick)
            self._refresh_kinematics(vehicle)
        self._release_departures()
        if (self.clock.steps - 1) % self.config.ticks_per_beacon == 0:
            self._broadcast_beacons()
        if now > self._next_purge_at:
            self._purge_expired()

    def _advance(self, vehicle: VehicleState, distance: float) -> None:
        remaining = distance
        while remaining > 0.0:
            street = self.graph.street(vehicle.street)
            room = street.length - vehicle.offset
            if remaining < room:
                vehicle.offset += remaining
                return
            remaining -= room
            vehicle.offset = street.length
            arrived_at = street.end_of(vehicle.heading)
            if vehicle.is_bus:
                if not self._bus_turn(vehicle, arrived_at):
                    return
            else:
                self._car_turn(vehicle, arrived_at)

    def _bus_turn(self, bus: VehicleState, vertex: str) -> bool:
        """Move a bus onto its next trajectory street; False when it stops at a terminal."""
        line = self.lines[bus.line]  # type: ignore[index]
        nxt = bus.trajectory_index + (1 if bus.outbound else -1)
        if 0 <= nxt < len(line.trajectory):
            street = self.graph.street(line.trajectory[nxt])
            bus.trajectory_index = nxt
            bus.street = street.id
            bus.heading = street.heading_from(vertex)
            bus.offset = 0.0
            return True
        bus.outbound = not bus.outbound
        bus.heading = bus.heading.reversed()
        bus.offset = 0.0
        bus.paused_until = self.clock.now + self.config.terminal_pause_s
        return False

    def _car_turn(self, car: VehicleState, vertex: str) -> None:
        options = sorted(s for s in self.graph.incident(vertex) if s != car.street)
        if options:
            street = self.graph.street(options[int(self._rng.integers(len(options)))])
            car.street = street.id
            car.heading = street.heading_from(vertex)
        else:
            car.heading = car.heading.reversed()
        car.offset = 0.0

    def _refresh_kinematics(self, vehicle: VehicleState) -> None:
        vehicle.position = point_at(self.graph, vehicle.street, vehicle.offset, vehicle.heading)
        if vehicle.paused_until > self.clock.now:
            vehicle.velocity = (0.0, 0.0)
            return
        ux, uy = unit_vector(self.graph, vehicle.street, vehicle.heading)
        vehicle.velocity = (ux * vehicle.speed, uy * vehicle.speed)

    def effective_speed(self, vehicle: VehicleState) -> float:
        return 0.0 if vehicle.paused_until > self.clock.now else vehicle.speed

    # ---- beacons & neighbor tables ------------------------------------

    def _broadcast_beacons(self) -> None:
        now = self.clock.now
        states = list(self._vehicles.values())
        for v in states:
            v.stats = update_velocity_stats(v.stats, self.effective_speed(v))
        if len(states) < 2:
            return

        points = np.array([v.position for v in states], dtype=float)
        pairs = cKDTree(points).query_pairs(r=self.config.radius, output_type="ndarray")
        if len(pairs) == 0:
            return
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        for i, j in pairs.tolist():
            a, b = states[i], states[j]
            d = math.dist(a.position, b.position)
            self._tables[a.id][b.id] = self._entry(b, now, d)
            self._tables[b.id][a.id] = self._entry(a, now, d)
        self._next_purge_at = min(self._next_purge_at, now + self.config.expiry_s)

    @staticmethod
    def _entry(sender: VehicleState, now: float, d: float) -> NeighborEntry:
        return NeighborEntry(
            neighbor_id=sender.id,
            kind=sender.kind,
            position=sender.position,
            velocity=sender.velocity,
            street=sender.street,
            last_seen=now,
            velocity_stats=sender.stats,
            distance=d,
        )

    def _purge_expired(self) -> None:
        now = self.clock.now
        expiry = self.config.expiry_s
        oldest = math.inf
        for table in self._tables.values():
            stale = [nid for nid, e in table.items() if now - e.last_seen > expiry]
            for nid in stale:
                del table[nid]
            for e in table.values():
                oldest = min(oldest, e.last_seen)
        self._next_purge_at = oldest + expiry

    def neighbor_table(self, vehicle_id: str) -> Mapping[str, NeighborEntry]:
        self.vehicle(vehicle_id)
        return MappingProxyType(self._tables[vehicle_id])

    def neighbors_within(self, vehicle_id: str, radius: float) -> list[NeighborEntry]:
        self.vehicle(vehicle_id)
        if radius <= 0:
            return []
        now = self.clock.now
        expiry = self.config.expiry_s
        return sorted(
            (e for e in self._tables[vehicle_id].values() if now - e.last_seen <= expiry and e.distance <= radius),
            key=lambda e: e.neighbor_id,
        )

    def in_range(self, a: str, b: str, radius: float | None = None) -> bool:
        r = self.config.radius if radius is None else radius
        return math.dist(self.vehicle(a).position, self.vehicle(b).position) <= r

    def snapshot(self) -> dict[str, object]:
        return {
            "t": self.clock.now,
            "vehicles": [
                {
                    "id": v.id,
                    "kind": v.kind.value,
                    "street": v.street,
                    "offset": v.offset,
                    "x": v.position[0],
                    "y": v.position[1],
                }
                for v in self._vehicles.values()
            ],
        }
