from __future__ import annotations

import bisect
import heapq
import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from app.errors import EmptyNeighborSetError, LinkPreconditionError
from app.events.log import EventLog
from app.faco.params import FacoParams
from app.faco.pheromone import PheromoneBank
from app.mobility.world import NeighborEntry, VehicleState, World
from app.radio.link_model import LinkEstimate, estimate_link

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Qualification:
    """Routing-path streets plus the 1-based index i of the carrier's street S[i-1]."""

    streets: tuple[str, ...]
    index: int

    def __post_init__(self) -> None:
        if not 1 <= self.index <= len(self.streets):
            raise LinkPreconditionError(f"carrier index {self.index} outside path of {len(self.streets)} streets")

    @property
    def allowed(self) -> tuple[str, ...]:
        return self.streets[self.index - 1 :]


@dataclass(frozen=True)
class AskAnt:
    id: int
    origin: str
    qualification: Qualification
    relay_table: tuple[str, ...]
    ttl: float

    @property
    def at(self) -> str:
        return self.relay_table[-1]


@dataclass(frozen=True)
class ResponseAnt:
    id: int
    relay_table: tuple[str, ...]
    terminal: str


@dataclass(frozen=True)
class CandidateLink:
    nodes: tuple[str, ...]
    lifetime: float
    delay: float
    value: float

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def terminal(self) -> str:
        return self.nodes[-1]


def qualifies(candidate: VehicleState, q: Qualification) -> bool:
    return candidate.is_bus and candidate.street in q.allowed


def _score(lifetime: float, delay: float, phi: float) -> float:
    stability = phi if math.isinf(lifetime) else phi * lifetime / (1.0 + lifetime)
    return stability + (1.0 - phi) / (1.0 + delay)


def hop_heuristic(estimate: LinkEstimate, hop_delay: float, phi: float) -> float:
    return _score(estimate.lifetime, hop_delay, phi)


def objective(link: CandidateLink, phi: float) -> float:
    return _score(link.lifetime, link.delay, phi)


def forward_probabilities(
    neighbors: Sequence[str],
    pheromones: Sequence[float],
    heuristics: Sequence[float],
    alpha: float,
    beta: float,
) -> dict[str, float]:
    if not neighbors:
        raise EmptyNeighborSetError("ant has no neighbor to move to")
    tau = np.asarray(pheromones, dtype=float)
    eta = np.asarray(heuristics, dtype=float)
    if np.any(tau <= 0) or np.any(eta <= 0):
        raise LinkPreconditionError("pheromone and heuristic values must be positive")
    # Log-space keeps tau**8 * eta**5 from underflowing on long relay chains.
    w = alpha * np.log(tau) + beta * np.log(eta)
    w = np.exp(w - w.max())
    p = w / w.sum()
    return dict(zip(neighbors, p.tolist()))


def link_estimate(world: World, i: str, j: str) -> LinkEstimate:
    """Estimate of link i->j from i's live state and j as i last heard it."""
    me = world.vehicle(i)
    radius = world.config.radius
    entry = world.neighbor_table(i).get(j)
    if entry is None:
        other = world.vehicle(j)
        return estimate_link(me.kinematics, other.kinematics, me.stats, other.stats, radius)
    return estimate_link(me.kinematics, entry.kinematics_at(world.now), me.stats, entry.velocity_stats, radius)


def live_estimate(world: World, i: str, j: str) -> LinkEstimate:
    """Estimate of link i->j from both vehicles' current states."""
    a, b = world.vehicle(i), world.vehicle(j)
    return estimate_link(a.kinematics, b.kinematics, a.stats, b.stats, world.config.radius)


class LinkMemo:
    """Link estimates and neighbor lists for the world at its current step.

    Vehicle states and neighbor tables only change inside World.step, so the
    memo is dropped whenever the step counter moves.
    """

    def __init__(self, world: World) -> None:
        self.world = world
        self._step = -1
        self._heard: dict[tuple[str, str], LinkEstimate] = {}
        self._live: dict[tuple[str, str], LinkEstimate] = {}
        self._neighbors: dict[str, list[NeighborEntry]] = {}

    def _sync(self) -> None:
        step = self.world.clock.steps
        if step != self._step:
            self._step = step
            self._heard.clear()
            self._live.clear()
            self._neighbors.clear()

    def estimate(self, i: str, j: str) -> LinkEstimate:
        self._sync()
        est = self._heard.get((i, j))
        if est is None:
            est = self._heard[(i, j)] = link_estimate(self.world, i, j)
        return est

    def live(self, i: str, j: str) -> LinkEstimate:
        self._sync()
        est = self._live.get((i, j))
        if est is None:
            est = self._live[(i, j)] = live_estimate(self.world, i, j)
        return est

    def neighbors(self, vehicle_id: str) -> list[NeighborEntry]:
        self._sync()
        entries = self._neighbors.get(vehicle_id)
        if entries is None:
            entries = self._neighbors[vehicle_id] = self.world.neighbors_within(vehicle_id, self.world.config.radius)
        return entries


def live_link(
    world: World, nodes: Sequence[str], params: FacoParams, memo: LinkMemo | None = None
) -> tuple[float, float]:
    """(LT, D) of a node sequence recomputed from current vehicle states."""
    lifetime = math.inf
    for a, b in zip(nodes, nodes[1:]):
        est = memo.live(a, b) if memo is not None else live_estimate(world, a, b)
        lifetime = min(lifetime, est.lifetime)
    return lifetime, (len(nodes) - 1) * params.hop_delay


def _draw(rng: np.random.Generator, probs: Sequence[float]) -> int:
    cumulative = list(itertools.accumulate(probs))
    return min(bisect.bisect_right(cumulative, rng.random() * cumulative[-1]), len(cumulative) - 1)


class _Discovery:
    def __init__(
        self,
        world: World,
        source: str,
        q: Qualification,
        params: FacoParams,
        pheromones: PheromoneBank,
        rng: np.random.Generator,
        accept: Callable[[VehicleState], bool] | None,
        tracer: EventLog | None,
        memo: LinkMemo,
    ) -> None:
        self.world = world
        self.memo = memo
        self.source = source
        self.q = q
        self.params = params
        self.pheromones = pheromones
        self.rng = rng
        self.accept = accept
        self.tracer = tracer
        self._queue: list[tuple[float, int, AskAnt | ResponseAnt, int]] = []
        self._seq = 0
        self._arrived: dict[tuple[str, ...], float] = {}

    def _trace(self, event: str, t: float, **fields: object) -> None:
        if self.tracer is not None:
            self.tracer.emit(event, round(self.world.now + t, 6), **fields)

    def _push(self, t: float, ant: AskAnt | ResponseAnt, pos: int = 0) -> None:
        heapq.heappush(self._queue, (t, self._seq, ant, pos))
        self._seq += 1

    def _is_terminal(self, vehicle_id: str) -> bool:
        state = self.world.vehicle(vehicle_id)
        return qualifies(state, self.q) and (self.accept is None or self.accept(state))

    def run(self) -> CandidateLink | None:
        for k in range(self.params.n_ant):
            self._push(0.0, AskAnt(k, self.source, self.q, (self.source,), self.params.ant_ttl))
            self._trace("ant_launched", 0.0, ant=k, origin=self.source)

        while self._queue:
            t, _, ant, pos = heapq.heappop(self._queue)
            if t > self.params.d_th:
                break
            if isinstance(ant, AskAnt):
                self._ask(t, ant)
            else:
                self._respond(t, ant, pos)
        return self._select()

    def _ask(self, t: float, ant: AskAnt) -> None:
        here = ant.at
        if len(ant.relay_table) > 1 and self._is_terminal(here):
            ra = ResponseAnt(id=ant.id, relay_table=ant.relay_table, terminal=here)
            self._trace("ant_responded", t, ant=ant.id, terminal=here, relay_table=ant.relay_table)
            self._push(t + self.params.hop_delay, ra, len(ra.relay_table) - 2)
            return

        entries = self.memo.neighbors(here)
        if not entries:
            self._trace("ant_dropped", t, ant=ant.id, at=here, reason="no_neighbors")
            return
        ids = [e.neighbor_id for e in entries]
        store = self.pheromones.store(here)
        probs = forward_probabilities(
            ids,
            [store.intensity(j) for j in ids],
            [hop_heuristic(self.memo.estimate(here, j), self.params.hop_delay, self.params.phi) for j in ids],
            self.params.alpha,
            self.params.beta,
        )
        nxt = ids[_draw(self.rng, list(probs.values()))]

        if nxt in ant.relay_table:
            self._trace("ant_dropped", t, ant=ant.id, at=here, reason="revisit", to=nxt)
            return
        ttl = ant.ttl - self.params.hop_delay
        if ttl < 0:
            self._trace("ant_dropped", t, ant=ant.id, at=here, reason="ttl")
            return
        if not self.world.in_range(here, nxt):
            self._trace("ant_dropped", t, ant=ant.id, at=here, reason="lost", to=nxt)
            return
        self._trace("ant_forwarded", t, ant=ant.id, frm=here, to=nxt, ttl=round(ttl, 6))
        self._push(t + self.params.hop_delay, replace(ant, relay_table=(*ant.relay_table, nxt), ttl=ttl))

    def _respond(self, t: float, ant: ResponseAnt, pos: int) -> None:
        node, toward = ant.relay_table[pos], ant.relay_table[pos + 1]
        eta = hop_heuristic(self.memo.estimate(node, toward), self.params.hop_delay, self.params.phi)
        before, after = self.pheromones.store(node).deposit(toward, eta, self.params.delta)
        self._trace("pheromone", t, node=node, neighbor=toward, before=before, after=after)
        if pos == 0:
            self._arrived.setdefault(ant.relay_table, t)
            return
        self._push(t + self.params.hop_delay, ant, pos - 1)

    def _select(self) -> CandidateLink | None:
        best: CandidateLink | None = None
        for nodes in sorted(self._arrived):
            if not self._is_terminal(nodes[-1]):
                continue
            lifetime, delay = live_link(self.world, nodes, self.params, self.memo)
            if delay > self.params.d_th or lifetime <= 0.0:
                continue
            link = CandidateLink(nodes, lifetime, delay, _score(lifetime, delay, self.params.phi))
            if best is None or (-link.value, link.delay, link.nodes) < (-best.value, best.delay, best.nodes):
                best = link

        if best is None:
            self._trace("discovery_empty", self.params.d_th, origin=self.source, responses=len(self._arrived))
        else:
            self._trace(
                "discovery_selected",
                self.params.d_th,
                origin=self.source,
                nodes=best.nodes,
                lifetime=best.lifetime,
                delay=best.delay,
                value=best.value,
            )
        logger.debug("FACO from %s: %d responses, selected %s", self.source, len(self._arrived), best)
        return best


def discover(
    world: World,
    source: str,
    q: Qualification,
    params: FacoParams,
    pheromones: PheromoneBank,
    rng: np.random.Generator,
    *,
    accept: Callable[[VehicleState], bool] | None = None,
    tracer: EventLog | None = None,
    memo: LinkMemo | None = None,
) -> CandidateLink | None:
    """Run one ask/response/select round of ant discovery from a source bus.

    Ants move over the world as it stands at the call; the chosen link's
    LT and D are recomputed from live vehicle state. `accept` narrows the
    set of terminal buses beyond the qualification rule. Pass a shared
    `memo` to reuse link estimates across rounds run at the same step.
    """
    if memo is None or memo.world is not world:
        memo = LinkMemo(world)
    return _Discovery(world, source, q, params, pheromones, rng, accept, tracer, memo).run()
