from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from app.buses.network import LineCoverage, build_routing_graph, psc_table, read_lines, save_lines, synthesize_lines
from app.db.engine import Database
from app.db.repositories import ResultsRepository
from app.errors import BtscError, ConfigError, MetricsConsistencyError
from app.events.log import EventLog
from app.experiment.config import ScenarioConfig, read_config
from app.experiment.metrics import MetricsRecord
from app.experiment.report import write_bucket_csv, write_csv
from app.experiment.runner import run_scenario, run_sweep
from app.logging_config import setup_logging
from app.planning.planner import (
    DEFAULT_K,
    RoutingPath,
    k_min_weight_paths,
    resolve_endpoints,
    select_routing_path,
)
from app.roadmap.street_map import generate_grid, read_map, save_map
from settings import Settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _point(raw: str) -> tuple[float, float]:
    try:
        x, y = (float(p) for p in raw.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y but got {raw!r}") from None
    return x, y


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text + "\n")
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text + "\n", encoding="utf-8")
    logger.info("Wrote %s", out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="btsc", description="Bus-trajectory street-centric VANET routing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    map_cmd = sub.add_parser("map", help="street maps").add_subparsers(dest="action", required=True)
    gen = map_cmd.add_parser("gen", help="generate a grid map")
    gen.add_argument("--rows", type=int, default=8)
    gen.add_argument("--cols", type=int, default=8)
    gen.add_argument("--block", type=float, default=500.0)
    gen.add_argument("--out", type=Path)
    val = map_cmd.add_parser("validate", help="check a map file")
    val.add_argument("file", type=Path)

    lines_cmd = sub.add_parser("lines", help="bus lines").add_subparsers(dest="action", required=True)
    lgen = lines_cmd.add_parser("gen", help="synthesize bus lines on a map")
    lgen.add_argument("--map", type=Path, required=True)
    lgen.add_argument("--count", type=int, default=6)
    lgen.add_argument("--seed", type=int, default=1)
    lgen.add_argument("--headway", type=float, default=60.0)
    lgen.add_argument("--out", type=Path)

    graph_cmd = sub.add_parser("graph", help="routing graph").add_subparsers(dest="action", required=True)
    build = graph_cmd.add_parser("build", help="street weights and PSC table")
    build.add_argument("--map", type=Path, required=True)
    build.add_argument("--lines", type=Path, required=True)
    build.add_argument("--out", type=Path)

    plan = sub.add_parser("plan", help="select a routing path between two places")
    plan.add_argument("--map", type=Path, required=True)
    plan.add_argument("--lines", type=Path, required=True)
    plan.add_argument("--src-x", type=float)
    plan.add_argument("--src-y", type=float)
    plan.add_argument("--dst-x", type=float)
    plan.add_argument("--dst-y", type=float)
    plan.add_argument("--src", type=_point, help="X,Y shorthand for --src-x/--src-y")
    plan.add_argument("--dst", type=_point, help="X,Y shorthand for --dst-x/--dst-y")
    plan.add_argument("-k", "--k", type=int, default=DEFAULT_K)

    run = sub.add_parser("run", help="run a scenario or a sweep")
    run.add_argument("--config", type=Path)
    run.add_argument("--paper-scale", "--city-scale", dest="city_scale", action="store_true", help="city-size preset")
    run.add_argument("--seed", type=int)
    run.add_argument("--sweep", choices=("radius", "distance", "density"))
    run.add_argument("--values", type=float, nargs="+")
    run.add_argument("--out", type=Path)
    run.add_argument("--buckets", type=Path, help="per-distance-bucket CSV")
    run.add_argument("--events", type=Path, help="packet event log (JSON lines)")
    run.add_argument("--trace-ants", type=Path, help="FACO ant event log (JSON lines)")
    run.add_argument("--snapshots", type=Path, help="per-tick world snapshots (JSON lines)")
    run.add_argument("--db", action="store_true", help="store results in the results database")

    results = sub.add_parser("results", help="list stored sweep results")
    results.add_argument("--run", type=int)
    return parser


def _cmd_map(args: argparse.Namespace) -> int:
    if args.action == "gen":
        _write(save_map(generate_grid(args.rows, args.cols, args.block)), args.out)
    else:
        graph = read_map(args.file)
        print(f"{args.file}: {len(graph.intersections)} intersections, {len(graph.streets)} streets")
    return EXIT_OK


def _cmd_lines(args: argparse.Namespace) -> int:
    graph = read_map(args.map)
    _write(save_lines(synthesize_lines(graph, args.count, args.seed, args.headway)), args.out)
    return EXIT_OK


def _cmd_graph(args: argparse.Namespace) -> int:
    graph = read_map(args.map)
    lines = read_lines(args.lines, graph)
    routing = build_routing_graph(graph, lines)
    doc = {
        "weights": {s: routing.weight(s) for s in sorted(graph.streets)},
        "psc": psc_table(LineCoverage(graph, lines)),
    }
    _write(json.dumps(doc, indent=2), args.out)
    return EXIT_OK


def _endpoint(args: argparse.Namespace, name: str) -> tuple[float, float]:
    point = getattr(args, name)
    x, y = getattr(args, f"{name}_x"), getattr(args, f"{name}_y")
    if point is not None:
        if x is not None or y is not None:
            raise ConfigError(f"give either --{name} or --{name}-x/--{name}-y, not both")
        return point
    if x is None or y is None:
        raise ConfigError(f"--{name}-x and --{name}-y are required")
    return x, y


def _path_doc(path: RoutingPath) -> dict[str, object]:
    return {
        "streets": list(path.streets),
        "vertices": list(path.vertices),
        "weight": path.total_weight,
        "ppc": path.ppc,
    }


def _cmd_plan(args: argparse.Namespace) -> int:
    graph = read_map(args.map)
    lines = read_lines(args.lines, graph)
    routing = build_routing_graph(graph, lines)
    src, dst = resolve_endpoints(graph, _endpoint(args, "src"), _endpoint(args, "dst"))
    candidates = k_min_weight_paths(routing, src, dst, args.k)
    selected = select_routing_path(routing, routing.coverage, src, dst, args.k)
    doc = {"candidates": [_path_doc(p) for p in candidates], "selected": _path_doc(selected)}
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    base = ScenarioConfig.city_scale() if args.city_scale else ScenarioConfig.desk()
    config = read_config(args.config, base) if args.config is not None else base
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    return config


async def _store(settings: Settings, records: list[MetricsRecord], axis: str | None, config: ScenarioConfig) -> None:
    db = Database(db_path=settings.db_path)
    await db.init()
    try:
        async with db.sessionmaker() as session:
            repo = ResultsRepository(session)
            run = await repo.save_sweep(
                records, axis=axis, base_seed=config.seed, config_json=config.model_dump_json()
            )
            await session.commit()
        print(f"stored as run {run.id}")
    finally:
        await db.close()


def _cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    config = _scenario(args)
    if args.sweep is not None:
        if not args.values:
            raise ConfigError("--sweep needs --values")
        if args.events or args.trace_ants or args.snapshots:
            logger.warning("Tracing flags apply to single-scenario runs only; ignored for the sweep")
        records = asyncio.run(
            run_sweep(config, args.sweep, args.values, concurrency=settings.sweep_concurrency)
        )
    else:
        logs = {
            "events": EventLog.to_file(args.events) if args.events else None,
            "ant_trace": EventLog.to_file(args.trace_ants) if args.trace_ants else None,
            "snapshots": EventLog.to_file(args.snapshots) if args.snapshots else None,
        }
        try:
            records = [run_scenario(config, **logs)]
        finally:
            for log in logs.values():
                if log is not None:
                    log.close()

    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with args.out.open("w", encoding="utf-8", newline="") as fh:
            write_csv(records, fh)
        logger.info("Wrote %d rows to %s", len(records), args.out)
    else:
        write_csv(records, sys.stdout)
    if args.buckets is not None:
        args.buckets.parent.mkdir(parents=True, exist_ok=True)
        with args.buckets.open("w", encoding="utf-8", newline="") as fh:
            write_bucket_csv(records, fh)
    if args.db:
        asyncio.run(_store(settings, records, args.sweep, config))
    return EXIT_OK


async def _list_results(settings: Settings, run_id: int | None) -> None:
    db = Database(db_path=settings.db_path)
    await db.init()
    try:
        async with db.sessionmaker() as session:
            repo = ResultsRepository(session)
            if run_id is None:
                for run in await repo.list_runs():
                    print(f"{run.id}\t{run.created_at:%Y-%m-%d %H:%M:%S}\taxis={run.axis or '-'}\tseed={run.base_seed}")
                return
            if await repo.get_run(run_id) is None:
                raise BtscError(f"no stored run with id {run_id}")
            for r in await repo.get_results(run_id):
                ratio = "" if r.ratio is None else f"{r.ratio:.4f}"
                delay = "" if r.avg_delay_s is None else f"{r.avg_delay_s:.3f}"
                print(f"{r.scenario_id}\t{r.delivered}/{r.generated}\tratio={ratio}\tdelay={delay}")
    finally:
        await db.close()


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = Settings()
    setup_logging(settings.log_level, settings.log_dir, settings.max_log_files)

    handlers = {
        "map": _cmd_map,
        "lines": _cmd_lines,
        "graph": _cmd_graph,
        "plan": _cmd_plan,
    }
    try:
        if args.command == "run":
            return _cmd_run(args, settings)
        if args.command == "results":
            asyncio.run(_list_results(settings, args.run))
            return EXIT_OK
        return handlers[args.command](args)
    except MetricsConsistencyError as e:
        logger.exception("Internal consistency failure")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except (BtscError, FileNotFoundError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.exception("Command %s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
