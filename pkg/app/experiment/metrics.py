from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from app.errors import MetricsConsistencyError
from app.experiment.config import BUCKET_WIDTH, DISTANCE_BUCKETS


def transmission_ratio(delivered: int, generated: int) -> float | None:
    if generated < 0 or delivered < 0:
        raise MetricsConsistencyError(f"counts must be non-negative: delivered={delivered}, generated={generated}")
    if delivered > generated:
        raise MetricsConsistencyError(f"delivered {delivered} exceeds generated {generated}")
    if generated == 0:
        return None
    return delivered / generated


def average_delay(delays: Iterable[float]) -> float | None:
    values = list(delays)
    if not values:
        return None
    return math.fsum(values) / len(values)


def bucket_label(distance: float) -> str:
    for lo, hi in DISTANCE_BUCKETS:
        if lo <= distance < hi:
            return f"{lo:g}-{hi:g}"
    return f">={DISTANCE_BUCKETS[-1][1]:g}"


@dataclass(frozen=True)
class BucketStats:
    bucket: str
    generated: int
    delivered: int
    ratio: float | None
    avg_delay_s: float | None


@dataclass(frozen=True)
class MetricsRecord:
    scenario_id: str
    seed: int
    generated: int
    delivered: int
    expired: int
    in_flight: int
    ratio: float | None
    avg_delay_s: float | None
    reroutes: int
    failed_forwards: int
    buckets: tuple[BucketStats, ...] = ()
    axis_value: float | None = None

    def __post_init__(self) -> None:
        if self.delivered + self.expired + self.in_flight != self.generated:
            raise MetricsConsistencyError(
                f"{self.scenario_id}: delivered+expired+in_flight "
                f"({self.delivered}+{self.expired}+{self.in_flight}) != generated {self.generated}"
            )


def bucket_breakdown(rows: Sequence[tuple[float, bool, float | None]]) -> tuple[BucketStats, ...]:
    """Per-distance-bucket stats from (distance, delivered, delay) rows."""
    grouped: dict[str, list[tuple[bool, float | None]]] = {}
    order: dict[str, float] = {}
    for distance, delivered, delay in rows:
        label = bucket_label(distance)
        grouped.setdefault(label, []).append((delivered, delay))
        order.setdefault(label, distance)
    out = []
    for label in sorted(grouped, key=lambda b: order[b] // BUCKET_WIDTH):
        items = grouped[label]
        done = [d for ok, d in items if ok and d is not None]
        out.append(
            BucketStats(
                bucket=label,
                generated=len(items),
                delivered=len(done),
                ratio=transmission_ratio(len(done), len(items)),
                avg_delay_s=average_delay(done),
            )
        )
    return tuple(out)
