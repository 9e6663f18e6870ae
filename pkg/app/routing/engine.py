from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.buses.network import RoutingGraph
from app.errors import ConfigError, PlanningError, UnknownElementError
from app.events.log import EventLog
from app.faco.discovery import CandidateLink, LinkMemo, Qualification, discover, qualifies
from app.faco.params import FacoParams
from app.faco.pheromone import PheromoneBank
from app.mobility.world import VehicleState, World
from app.planning.planner import (
    DEFAULT_K,
    RoutingPath,
    nearest_intersection,
    select_routing_path,
    single_street_path,
)
from app.roadmap.street_map import Point

logger = logging.getLogger(__name__)


class EngineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    deadline_s: float = Field(default=120.0, gt=0)
    k_paths: int = Field(default=DEFAULT_K, ge=1)
    discovery_retry_s: float = Field(default=1.0, gt=0)
    max_forwards_per_tick: int = Field(default=32, ge=1)


class PacketState(str, enum.Enum):
    in_flight = "in_flight"
    delivered = "delivered"
    expired = "expired"


@dataclass
class Packet:
    id: int
    src: str
    dst: Point
    dst_vertex: str
    created: float
    carrier: str
    path: RoutingPath | None = None
    path_index: int = 0
    plan_street: str | None = None
    state: PacketState = PacketState.in_flight
    reason: str | None = None
    delivered_at: float | None = None
    ledger: float = 0.0
    hops: int = 0
    radio_hops: int = 0
    reroutes: int = 0
    failed_forwards: int = 0
    carrying: bool = False
    next_discovery: float = field(default=0.0, repr=False)

    @property
    def delay(self) -> float | None:
        if self.delivered_at is None:
            return None
        return self.delivered_at - self.created

    @property
    def is_open(self) -> bool:
        return self.state is PacketState.in_flight


class RoutingEngine:
    """Carry-and-forward packet delivery over bus relays."""

    def __init__(
        self,
        world: World,
        routing_graph: RoutingGraph,
        params: FacoParams | None = None,
        config: EngineConfig | None = None,
        *,
        rng: np.random.Generator | None = None,
        events: EventLog | None = None,
        ant_trace: EventLog | None = None,
    ) -> None:
        self.world = world
        self.routing_graph = routing_graph
        self.params = params or FacoParams()
        self.config = config or EngineConfig()
        self.events = events if events is not None else EventLog()
        self.ant_trace = ant_trace
        self.pheromones = PheromoneBank(self.params.tau0)
        self.links = LinkMemo(world)
        self._rng = rng if rng is not None else np.random.default_rng([world.seed, 1])
        self._packets: dict[int, Packet] = {}
        self._next_evaporation = self.params.dt

    @property
    def packets(self) -> list[Packet]:
        return [self._packets[k] for k in sorted(self._packets)]

    def packet(self, packet_id: int) -> Packet:
        try:
            return self._packets[packet_id]
        except KeyError:
            raise UnknownElementError("packet", packet_id) from None

    def _emit(self, event: str, packet: Packet, **fields: object) -> None:
        self.events.emit(event, round(self.world.now, 6), packet=packet.id, **fields)

    # ---- lifecycle ----------------------------------------------------

    def originate(self, src: str, dst: Point) -> Packet:
        carrier = self.world.vehicle(src)
        packet = Packet(
            id=len(self._packets),
            src=src,
            dst=(float(dst[0]), float(dst[1])),
            dst_vertex=nearest_intersection(self.world.graph, dst),
            created=self.world.now,
            carrier=src,
        )
        self._packets[packet.id] = packet
        self._emit("originate", packet, src=src, src_kind=carrier.kind.value, dst=packet.dst)
        if carrier.is_bus:
            self._plan(packet, carrier, nearest_intersection(self.world.graph, carrier.position))
        return packet

    def _plan(self, packet: Packet, carrier: VehicleState, src_vertex: str) -> bool:
        street = self.world.graph.street(carrier.street)
        try:
            if src_vertex == packet.dst_vertex and packet.dst_vertex in street.endpoints:
                path = single_street_path(self.routing_graph, street.id, packet.dst_vertex)
            else:
                if src_vertex == packet.dst_vertex:
                    src_vertex = street.end_of(carrier.heading)
                path = select_routing_path(
                    self.routing_graph,
                    self.routing_graph.coverage,
                    src_vertex,
                    packet.dst_vertex,
                    self.config.k_paths,
                )
        except PlanningError as e:
            logger.debug("Packet %d has no route: %s", packet.id, e)
            self._expire(packet, "no_path")
            return False
        packet.path = path
        packet.path_index = path.index_of(street.id) or 0
        packet.plan_street = street.id
        self._emit("plan", packet, streets=path.streets, ppc=path.ppc, weight=path.total_weight)
        return True

    def _expire(self, packet: Packet, reason: str) -> None:
        packet.state = PacketState.expired
        packet.reason = reason
        self._emit("expire", packet, reason=reason, carrier=packet.carrier)

    def _deliver(self, packet: Packet) -> None:
        packet.ledger += self.params.hop_delay
        packet.state = PacketState.delivered
        packet.delivered_at = self.world.now + packet.ledger
        self._emit("deliver", packet, carrier=packet.carrier, delay=packet.delay, hops=packet.hops)

    def _carry(self, packet: Packet) -> None:
        if not packet.carrying:
            packet.carrying = True
            self._emit("carry", packet, carrier=packet.carrier)

    # ---- path bookkeeping ---------------------------------------------

    def _suffix_length(self, path: RoutingPath, start: int) -> float:
        graph = self.world.graph
        return math.fsum(graph.street(s).length for s in path.streets[start:])

    def remaining_distance(self, packet: Packet, vehicle: VehicleState) -> float:
        """Along-path distance from a vehicle to the destination vertex."""
        assert packet.path is not None
        path, graph = packet.path, self.world.graph
        idx = path.index_of(vehicle.street, packet.path_index)
        if idx is None:
            anchor = graph.intersection(path.vertices[packet.path_index]).position
            return math.dist(vehicle.position, anchor) + self._suffix_length(path, packet.path_index)
        towards = graph.intersection(path.vertices[idx + 1]).position
        return math.dist(vehicle.position, towards) + self._suffix_length(path, idx + 1)

    def _qualification(self, packet: Packet) -> Qualification:
        assert packet.path is not None
        return Qualification(streets=packet.path.streets, index=packet.path_index + 1)

    def _track(self, packet: Packet, carrier: VehicleState) -> bool:
        assert packet.path is not None
        idx = packet.path.index_of(carrier.street, packet.path_index)
        if idx is not None:
            packet.path_index = idx
            return True
        if carrier.street == packet.plan_street:
            return True
        return self.handle_deviation(packet)

    def handle_deviation(self, packet: Packet) -> bool:
        """Re-plan from the head vertex of the carrier's street; False if the packet expired."""
        carrier = self.world.vehicle(packet.carrier)
        head = self.world.graph.street(carrier.street).end_of(carrier.heading)
        self._emit("deviation", packet, carrier=carrier.id, street=carrier.street, head=head)
        if not self._plan(packet, carrier, head):
            return False
        packet.reroutes += 1
        self._emit("reroute", packet, streets=packet.path.streets, reroutes=packet.reroutes)  # type: ignore[union-attr]
        return True

    # ---- forwarding ---------------------------------------------------

    def _hand_over(self, packet: Packet, to: VehicleState, mode: str, via: tuple[str, ...], delay: float) -> None:
        frm = packet.carrier
        packet.ledger += delay
        packet.hops += 1
        packet.radio_hops += max(1, len(via) - 1)
        packet.carrier = to.id
        packet.carrying = False
        qualified = None
        if packet.path is not None:
            q = self._qualification(packet)
            qualified = qualifies(to, q)
            idx = packet.path.index_of(to.street, packet.path_index)
            if idx is not None:
                packet.path_index = idx
        self._emit(
            "forward",
            packet,
            frm=frm,
            to=to.id,
            to_kind=to.kind.value,
            to_street=to.street,
            mode=mode,
            via=via,
            qualified=qualified,
            hops=packet.hops,
        )

    def _car_step(self, packet: Packet, carrier: VehicleState) -> bool:
        buses = [
            self.world.vehicle(e.neighbor_id)
            for e in self.world.neighbors_within(carrier.id, self.world.config.radius)
            if e.is_bus and self.world.in_range(carrier.id, e.neighbor_id)
        ]
        if not buses:
            self._carry(packet)
            return False
        bus = min(buses, key=lambda b: (math.dist(b.position, carrier.position), b.id))
        self._hand_over(packet, bus, "handoff", (carrier.id, bus.id), self.params.hop_delay)
        if packet.path is None:
            return self._plan(packet, bus, nearest_intersection(self.world.graph, bus.position))
        return True

    def _neighbor_relay(self, packet: Packet, carrier: VehicleState) -> VehicleState | None:
        q = self._qualification(packet)
        mine = self.remaining_distance(packet, carrier)
        best: tuple[float, str] | None = None
        for entry in self.world.neighbors_within(carrier.id, self.world.config.radius):
            if not entry.is_bus:
                continue
            other = self.world.vehicle(entry.neighbor_id)
            if not qualifies(other, q) or not self.world.in_range(carrier.id, other.id):
                continue
            if self.remaining_distance(packet, other) >= mine:
                continue
            lifetime = self.links.estimate(carrier.id, other.id).lifetime
            key = (-lifetime, other.id)
            if best is None or key < best:
                best = key
        return None if best is None else self.world.vehicle(best[1])

    def _faco_relay(self, packet: Packet, carrier: VehicleState) -> CandidateLink | None:
        now = self.world.now
        if now < packet.next_discovery - 1e-9:
            return None
        retry = self.config.discovery_retry_s
        # next retry on the shared grid, at least one interval away
        packet.next_discovery = math.ceil((now + retry) / retry - 1e-9) * retry
        mine = self.remaining_distance(packet, carrier)
        return discover(
            self.world,
            carrier.id,
            self._qualification(packet),
            self.params,
            self.pheromones,
            self._rng,
            accept=lambda bus: self.remaining_distance(packet, bus) < mine,
            tracer=self.ant_trace,
            memo=self.links,
        )

    def _execute_link(self, packet: Packet, link: CandidateLink) -> bool:
        for a, b in zip(link.nodes, link.nodes[1:]):
            if not self.world.in_range(a, b):
                packet.failed_forwards += 1
                self._emit("failed_forward", packet, via=link.nodes, broken=(a, b))
                return False
        self._hand_over(packet, self.world.vehicle(link.terminal), "faco", link.nodes, link.delay)
        return True

    def relay_step(self, packet: Packet) -> Packet:
        if not packet.is_open:
            return packet
        radius = self.world.config.radius
        for _ in range(self.config.max_forwards_per_tick):
            carrier = self.world.vehicle(packet.carrier)
            if math.dist(carrier.position, packet.dst) <= radius:
                self._deliver(packet)
                return packet
            if not carrier.is_bus:
                if not self._car_step(packet, carrier):
                    return packet
                continue
            if packet.path is None or not self._track(packet, carrier):
                return packet

            relay = self._neighbor_relay(packet, carrier)
            if relay is not None:
                self._hand_over(packet, relay, "neighbor", (carrier.id, relay.id), self.params.hop_delay)
                continue
            link = self._faco_relay(packet, carrier)
            if link is not None and self._execute_link(packet, link):
                continue
            self._carry(packet)
            return packet
        return packet

    def expire_sweep(self, deadline: float | None = None) -> list[Packet]:
        limit = self.config.deadline_s if deadline is None else deadline
        if limit <= 0:
            raise ConfigError(f"deadline must be positive, got {limit}")
        now = self.world.now
        expired = []
        for packet in self.packets:
            if packet.is_open and now - packet.created > limit:
                self._expire(packet, "timeout")
                expired.append(packet)
        return expired

    # ---- per-tick driver ----------------------------------------------

    def _trail_lifetime(self, owner: str, neighbor: str) -> float:
        if neighbor not in self.world.neighbor_table(owner):
            return 0.0
        return self.links.estimate(owner, neighbor).lifetime

    def evaporate(self) -> None:
        now = self.world.now
        for store in self.pheromones.stores():
            store.evaporate(partial(self._trail_lifetime, store.owner), self.params.dt, now)

    def tick(self) -> None:
        """Advance protocol state after a world step."""
        now = self.world.now
        while now >= self._next_evaporation - 1e-9:
            self.evaporate()
            self._next_evaporation += self.params.dt
        for packet in self.open_packets():
            self.relay_step(packet)
        self.expire_sweep()

    def open_packets(self) -> list[Packet]:
        return [p for p in self.packets if p.is_open]
