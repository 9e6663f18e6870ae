from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator

logger = logging.getLogger(__name__)

Link = tuple[str, str]


def deposit(tau: float, eta: float, delta: float) -> float:
    return (1.0 - delta) * tau + delta * eta


def evaporation_rate(tau: float, tau0: float, lifetime: float, dt: float) -> float:
    """Coefficient that brings tau down to tau0 in lifetime/dt evaporations."""
    if tau <= tau0:
        return 0.0
    if math.isinf(lifetime):
        return 0.0
    if lifetime <= 0.0:
        return 1.0
    theta = lifetime / dt
    return 1.0 - (tau0 / tau) ** (1.0 / theta)


def evaporate_once(tau: float, tau0: float, rate: float) -> float:
    return max(tau0, (1.0 - rate) * tau)


@dataclass
class _Trail:
    tau: float
    rate: float | None = None


class PheromoneStore:
    """Pheromone intensities kept by one vehicle, per directed link i->j."""

    def __init__(self, owner: str, tau0: float) -> None:
        self.owner = owner
        self.tau0 = tau0
        self.last_evaporation: float | None = None
        self._trails: dict[str, _Trail] = {}

    def intensity(self, neighbor: str) -> float:
        trail = self._trails.get(neighbor)
        return self.tau0 if trail is None else trail.tau

    def deposit(self, neighbor: str, eta: float, delta: float) -> tuple[float, float]:
        before = self.intensity(neighbor)
        after = max(self.tau0, deposit(before, eta, delta))
        self._trails[neighbor] = _Trail(tau=after)
        return before, after

    def evaporate(self, lifetime_of: Callable[[str], float], dt: float, now: float) -> None:
        """One evaporation of every trail; lifetime_of gives LT of the link to a neighbor."""
        for neighbor in sorted(self._trails):
            trail = self._trails[neighbor]
            if trail.rate is None:
                trail.rate = evaporation_rate(trail.tau, self.tau0, lifetime_of(neighbor), dt)
            trail.tau = evaporate_once(trail.tau, self.tau0, trail.rate)
            if trail.tau <= self.tau0:
                del self._trails[neighbor]
        self.last_evaporation = now

    def links(self) -> Iterator[tuple[Link, float]]:
        for neighbor in sorted(self._trails):
            yield (self.owner, neighbor), self._trails[neighbor].tau

    def __len__(self) -> int:
        return len(self._trails)


class PheromoneBank:
    """PheromoneStores of every vehicle in one world."""

    def __init__(self, tau0: float) -> None:
        self.tau0 = tau0
        self._stores: dict[str, PheromoneStore] = {}

    def store(self, vehicle_id: str) -> PheromoneStore:
        store = self._stores.get(vehicle_id)
        if store is None:
            store = self._stores[vehicle_id] = PheromoneStore(vehicle_id, self.tau0)
        return store

    def intensity(self, i: str, j: str) -> float:
        store = self._stores.get(i)
        return self.tau0 if store is None else store.intensity(j)

    def stores(self) -> list[PheromoneStore]:
        return [self._stores[k] for k in sorted(self._stores)]
