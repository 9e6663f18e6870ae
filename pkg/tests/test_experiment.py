from __future__ import annotations

import asyncio
import io
import statistics
import time

import pytest
from scipy.stats import binomtest

from app.errors import ConfigError, MetricsConsistencyError
from app.events.log import EventLog
from app.experiment.config import (
    DISTANCE_BUCKETS,
    LinesSpec,
    MapSpec,
    ScenarioConfig,
    WorkloadConfig,
    load_config,
    with_axis,
)
from app.experiment.metrics import (
    MetricsRecord,
    average_delay,
    bucket_breakdown,
    bucket_label,
    transmission_ratio,
)
from app.experiment.report import write_bucket_csv, write_csv
from app.experiment.runner import derive_seed, run_scenario, run_sweep, sweep_labels
from app.faco.params import FacoParams
from app.mobility.world import WorldConfig
from app.routing.engine import EngineConfig


def small(seed: int = 1, **update) -> ScenarioConfig:
    config = ScenarioConfig(
        scenario_id="t",
        seed=seed,
        duration_s=60.0,
        map=MapSpec(rows=4, cols=4, block_m=300.0),
        lines=LinesSpec(count=2, headway_s=20.0),
        bus_fleet=8,
        cars=30,
        engine=EngineConfig(deadline_s=30.0),
        workload=WorkloadConfig(packets=10, warmup_s=5.0),
    )
    return config.model_copy(update=update)


def test_transmission_ratio() -> None:
    assert transmission_ratio(5, 10) == 0.5
    assert transmission_ratio(0, 0) is None
    with pytest.raises(MetricsConsistencyError):
        transmission_ratio(11, 10)


def test_average_delay() -> None:
    assert average_delay([]) is None
    assert average_delay([1.0, 2.0, 3.0]) == 2.0


@pytest.mark.parametrize(
    ("distance", "label"),
    [(0.0, "0-500"), (499.9, "0-500"), (500.0, "500-1000"), (2499.0, "2000-2500"), (2600.0, ">=2500")],
)
def test_bucket_label(distance: float, label: str) -> None:
    assert bucket_label(distance) == label


def test_record_counts_must_add_up() -> None:
    with pytest.raises(MetricsConsistencyError):
        MetricsRecord("x", 1, generated=3, delivered=1, expired=1, in_flight=0, ratio=1 / 3, avg_delay_s=1.0,
                      reroutes=0, failed_forwards=0)


def test_bucket_breakdown() -> None:
    rows = [(1200.0, False, None), (100.0, True, 2.0), (300.0, True, 4.0), (600.0, False, None)]
    buckets = bucket_breakdown(rows)
    assert [b.bucket for b in buckets] == ["0-500", "500-1000", "1000-1500"]
    first = buckets[0]
    assert (first.generated, first.delivered, first.ratio, first.avg_delay_s) == (2, 2, 1.0, 3.0)
    assert buckets[1].ratio == 0.0 and buckets[1].avg_delay_s is None


def test_load_config_layers_over_defaults() -> None:
    config = load_config('{"seed": 9, "world": {"radius": 400}, "workload": {"distance": [500, 1000]}}')
    assert (config.seed, config.radius, config.workload.distance) == (9, 400.0, (500.0, 1000.0))
    assert config.world.tick == WorldConfig().tick
    assert config.faco == FacoParams()


@pytest.mark.parametrize(
    "source",
    [
        "{not json",
        "[1, 2]",
        '{"unknown": 1}',
        '{"world": {"radius": -5}}',
        '{"workload": {"distance": [9, 3]}}',
        '{"map": {"rows": 1}}',
        '{"map": {"cols": 1}}',
    ],
)
def test_load_config_errors(source: str) -> None:
    with pytest.raises(ConfigError):
        load_config(source)


def test_radius_outside_band_warns(caplog) -> None:
    load_config('{"world": {"radius": 900}}')
    assert "outside" in caplog.text


def test_fleet_split() -> None:
    assert ScenarioConfig(bus_fleet=40).fleet_split(6) == [7, 7, 7, 7, 6, 6]
    assert ScenarioConfig().fleet_split(0) == []


def test_with_axis() -> None:
    base = small()
    r = with_axis(base, "radius", 400.0, 5, "400")
    assert (r.radius, r.seed, r.scenario_id) == (400.0, 5, "t-radius-400")
    d = with_axis(base, "distance", 1000.0, 5, "1000")
    assert d.workload.distance == (1000.0, 1500.0)
    dense = with_axis(base, "density", 6000.0, 5, "dense")
    assert dense.cars == 6000 and dense.workload.distance == (200.0, 800.0)
    with pytest.raises(ConfigError):
        with_axis(base, "radius", 5000.0, 5, "5000")
    with pytest.raises(ConfigError):
        with_axis(base, "density", 2.5, 5, "x")


def test_sweep_labels_and_seeds() -> None:
    assert sweep_labels("density", [6000, 2000, 4000]) == ["dense", "sparse", "common"]
    assert sweep_labels("radius", [200, 400.5]) == ["200", "400.5"]
    assert derive_seed(1, "radius", 200) == derive_seed(1, "radius", 200.0)
    assert derive_seed(1, "radius", 200) != derive_seed(1, "radius", 400)
    assert derive_seed(1, "radius", 200) >= 0
    assert derive_seed(1, "density", 1000000) != derive_seed(1, "density", 1000001)


def test_city_scale_preset() -> None:
    city = ScenarioConfig.city_scale()
    assert (city.bus_fleet, city.lines.count, city.cars) == (400, 20, 4000)


def test_scenario_is_deterministic() -> None:
    runs = []
    for _ in range(2):
        events = EventLog()
        record = run_scenario(small(seed=3), events=events)
        out = io.StringIO()
        write_csv([record], out)
        runs.append((record, out.getvalue(), list(events.lines())))
    assert runs[0] == runs[1]
    record = runs[0][0]
    assert record.generated == record.delivered + record.expired + record.in_flight
    assert record.generated > 0


def test_event_log_replays_the_metrics() -> None:
    events = EventLog()
    record = run_scenario(small(seed=6, cars=60), events=events)
    delays = [r["delay"] for r in events.of("deliver")]
    assert len(delays) == record.delivered
    if delays:
        assert average_delay(delays) == pytest.approx(record.avg_delay_s)
    forwards = list(events.of("forward"))
    assert all(f["to_kind"] == "bus" for f in forwards)
    assert all(f["qualified"] for f in forwards if f["mode"] in ("neighbor", "faco"))
    per_packet: dict[int, int] = {}
    for f in forwards:
        per_packet[f["packet"]] = per_packet.get(f["packet"], 0) + 1
    for r in events.of("deliver"):
        assert r["hops"] == per_packet.get(r["packet"], 0)


def test_nearby_destinations_are_delivered_at_once() -> None:
    config = small(seed=2, workload=WorkloadConfig(packets=10, warmup_s=5.0, distance=(0.0, 150.0)))
    record = run_scenario(config)
    assert record.generated > 0
    assert record.ratio == 1.0
    assert record.avg_delay_s == pytest.approx(FacoParams().hop_delay)
    assert [b.bucket for b in record.buckets] == ["0-500"]


def test_no_packets_means_no_ratio() -> None:
    record = run_scenario(small(workload=WorkloadConfig(packets=0)))
    assert (record.generated, record.ratio, record.avg_delay_s) == (0, None, None)


def test_snapshots_follow_ticks() -> None:
    snapshots = EventLog()
    run_scenario(small(duration_s=2.0, workload=WorkloadConfig(packets=0)), snapshots=snapshots)
    assert len(snapshots) == 20
    assert len(snapshots.records[0]["vehicles"]) > 0


def test_sweep_rows_in_value_order() -> None:
    records = asyncio.run(run_sweep(small(), "radius", [400.0, 200.0], concurrency=2))
    assert [r.axis_value for r in records] == [400.0, 200.0]
    assert [r.scenario_id for r in records] == ["t-radius-400", "t-radius-200"]
    out = io.StringIO()
    assert write_csv(records, out) == 2
    header, first, _ = out.getvalue().splitlines()
    assert header == "scenario_id,axis_value,generated,delivered,ratio,avg_delay_s,reroutes,failed_forwards"
    assert first.startswith("t-radius-400,400,")
    buckets = io.StringIO()
    write_bucket_csv(records, buckets)
    assert buckets.getvalue().startswith("scenario_id,bucket,generated,delivered,ratio,avg_delay_s\n")


@pytest.mark.parametrize("values", [[], [200.0, 200.0]])
def test_sweep_rejects_bad_values(values: list[float]) -> None:
    with pytest.raises(ConfigError):
        asyncio.run(run_sweep(small(), "radius", values))


TREND_SEEDS = range(10)
TREND_PACKETS = 20
TREND_DEADLINE = 100.0


def _trend_base(seed: int, **update) -> ScenarioConfig:
    return small(
        seed=seed,
        duration_s=150.0,
        map=MapSpec(rows=7, cols=7, block_m=500.0),
        lines=LinesSpec(count=4, headway_s=30.0),
        bus_fleet=20,
        cars=100,
        engine=EngineConfig(deadline_s=TREND_DEADLINE),
        **{"workload": WorkloadConfig(packets=TREND_PACKETS, warmup_s=10.0), **update},
    )


def _censored_delay(record: MetricsRecord) -> float:
    """Mean delay with every undelivered packet counted at the deadline."""
    assert record.generated > 0
    done = record.delivered * (record.avg_delay_s or 0.0)
    return (done + (record.generated - record.delivered) * TREND_DEADLINE) / record.generated


def _adjacent_signs(rows: list[list[float]]) -> tuple[int, int]:
    """(rises, falls) between neighbouring cells of every row; ties are dropped."""
    rises = falls = 0
    for row in rows:
        for a, b in zip(row, row[1:]):
            rises += b > a
            falls += b < a
    return rises, falls


def _medians(rows: list[list[float]]) -> list[float]:
    return [statistics.median(col) for col in zip(*rows)]


@pytest.mark.slow
def test_distance_trends() -> None:
    starts = [lo for lo, _ in DISTANCE_BUCKETS]
    ratios, delays = [], []
    for seed in TREND_SEEDS:
        records = [run_scenario(with_axis(_trend_base(seed), "distance", lo, seed, f"{lo:g}")) for lo in starts]
        assert all(r.generated > 0 for r in records)
        ratios.append([r.ratio for r in records])
        delays.append([_censored_delay(r) for r in records])

    rises, falls = _adjacent_signs(ratios)
    assert falls > 0
    assert binomtest(falls, rises + falls, alternative="greater").pvalue < 0.05
    rises, falls = _adjacent_signs(delays)
    assert rises > 0
    assert binomtest(rises, rises + falls, alternative="greater").pvalue < 0.05

    # one packet of slack per cell
    ratio_medians, delay_medians = _medians(ratios), _medians(delays)
    assert all(b <= a + 1 / TREND_PACKETS for a, b in zip(ratio_medians, ratio_medians[1:]))
    assert all(b >= a - TREND_DEADLINE / TREND_PACKETS for a, b in zip(delay_medians, delay_medians[1:]))


@pytest.mark.slow
def test_radius_trend() -> None:
    radii = [100.0, 200.0, 300.0]
    ratios = []
    for seed in TREND_SEEDS:
        base = _trend_base(seed, workload=WorkloadConfig(packets=TREND_PACKETS, warmup_s=10.0, distance=(0.0, 1000.0)))
        records = [run_scenario(with_axis(base, "radius", r, seed, f"{r:g}")) for r in radii]
        assert all(r.generated > 0 for r in records)
        ratios.append([r.ratio for r in records])

    rises, falls = _adjacent_signs(ratios)
    assert rises > 0
    assert binomtest(rises, rises + falls, alternative="greater").pvalue < 0.05
    medians = _medians(ratios)
    assert all(b >= a - 1 / TREND_PACKETS for a, b in zip(medians, medians[1:]))


@pytest.mark.slow
def test_desk_scenario_files_are_byte_identical(tmp_path) -> None:
    outputs = []
    for k in range(2):
        events = EventLog.to_file(tmp_path / f"events-{k}.jsonl")
        started = time.perf_counter()
        try:
            record = run_scenario(ScenarioConfig.desk(), events=events)
        finally:
            events.close()
        assert time.perf_counter() - started < 60.0
        csv_path = tmp_path / f"metrics-{k}.csv"
        with csv_path.open("w", encoding="utf-8", newline="") as fh:
            write_csv([record], fh)
        outputs.append(((tmp_path / f"events-{k}.jsonl").read_bytes(), csv_path.read_bytes()))
    assert outputs[0] == outputs[1]
