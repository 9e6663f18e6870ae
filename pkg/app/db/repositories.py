from __future__ import annotations

import json
import logging
from dataclasses import asdict
from typing import Iterable

from sqlalchemy import select
from sqlalchemy.ext.asyncio import AsyncSession

from app.db.models import ScenarioResult, SweepRun
from app.experiment.metrics import MetricsRecord

logger = logging.getLogger(__name__)


class ResultsRepository:
    def __init__(self, session: AsyncSession) -> None:
        self._s = session

    async def save_sweep(
        self,
        records: Iterable[MetricsRecord],
        *,
        axis: str | None,
        base_seed: int,
        config_json: str,
    ) -> SweepRun:
        run = SweepRun(axis=axis, base_seed=base_seed, config_json=config_json)
        self._s.add(run)
        await self._s.flush()
        for position, r in enumerate(records):
            self._s.add(
                ScenarioResult(
                    run_id=run.id,
                    position=position,
                    scenario_id=r.scenario_id,
                    seed=r.seed,
                    axis_value=r.axis_value,
                    generated=r.generated,
                    delivered=r.delivered,
                    expired=r.expired,
                    in_flight=r.in_flight,
                    ratio=r.ratio,
                    avg_delay_s=r.avg_delay_s,
                    reroutes=r.reroutes,
                    failed_forwards=r.failed_forwards,
                    buckets_json=json.dumps([asdict(b) for b in r.buckets], sort_keys=True),
                )
            )
        await self._s.flush()
        logger.info("Stored sweep run %d (axis=%s)", run.id, axis)
        return run

    async def list_runs(self) -> list[SweepRun]:
        res = await self._s.execute(select(SweepRun).order_by(SweepRun.id.asc()))
        return list(res.scalars().all())

    async def get_run(self, run_id: int) -> SweepRun | None:
        res = await self._s.execute(select(SweepRun).where(SweepRun.id == run_id))
        return res.scalar_one_or_none()

    async def get_results(self, run_id: int) -> list[ScenarioResult]:
        res = await self._s.execute(
            select(ScenarioResult).where(ScenarioResult.run_id == run_id).order_by(ScenarioResult.position.asc())
        )
        return list(res.scalars().all())
