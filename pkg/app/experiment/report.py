from __future__ import annotations

import csv
from typing import Iterable, TextIO

from app.experiment.metrics import MetricsRecord

CSV_COLUMNS = (
    "scenario_id",
    "axis_value",
    "generated",
    "delivered",
    "ratio",
    "avg_delay_s",
    "reroutes",
    "failed_forwards",
)
BUCKET_COLUMNS = ("scenario_id", "bucket", "generated", "delivered", "ratio", "avg_delay_s")


def _num(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def _axis(value: float | None) -> str:
    return "" if value is None else f"{value:g}"


def write_csv(records: Iterable[MetricsRecord], out: TextIO) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    n = 0
    for r in records:
        writer.writerow(
            [
                r.scenario_id,
                _axis(r.axis_value),
                r.generated,
                r.delivered,
                _num(r.ratio),
                _num(r.avg_delay_s),
                r.reroutes,
                r.failed_forwards,
            ]
        )
        n += 1
    return n


def write_bucket_csv(records: Iterable[MetricsRecord], out: TextIO) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BUCKET_COLUMNS)
    n = 0
    for r in records:
        for b in r.buckets:
            writer.writerow([r.scenario_id, b.bucket, b.generated, b.delivered, _num(b.ratio), _num(b.avg_delay_s)])
            n += 1
    return n
