from __future__ import annotations

from datetime import datetime

from sqlalchemy import DateTime, Float, ForeignKey, Integer, String, Text, func
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


class Base(DeclarativeBase):
    pass


class SweepRun(Base):
    __tablename__ = "sweep_runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    axis: Mapped[str | None] = mapped_column(String(16), nullable=True)
    base_seed: Mapped[int] = mapped_column(Integer, nullable=False)
    config_json: Mapped[str] = mapped_column(Text, nullable=False)
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), server_default=func.now(), nullable=False)

    results: Mapped[list["ScenarioResult"]] = relationship(
        back_populates="run", cascade="all, delete-orphan", order_by="ScenarioResult.position"
    )


class ScenarioResult(Base):
    __tablename__ = "scenario_results"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("sweep_runs.id", ondelete="CASCADE"), nullable=False, index=True)
    position: Mapped[int] = mapped_column(Integer, nullable=False)

    scenario_id: Mapped[str] = mapped_column(String(128), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    axis_value: Mapped[float | None] = mapped_column(Float, nullable=True)
    generated: Mapped[int] = mapped_column(Integer, nullable=False)
    delivered: Mapped[int] = mapped_column(Integer, nullable=False)
    expired: Mapped[int] = mapped_column(Integer, nullable=False)
    in_flight: Mapped[int] = mapped_column(Integer, nullable=False)
    ratio: Mapped[float | None] = mapped_column(Float, nullable=True)
    avg_delay_s: Mapped[float | None] = mapped_column(Float, nullable=True)
    reroutes: Mapped[int] = mapped_column(Integer, nullable=False)
    failed_forwards: Mapped[int] = mapped_column(Integer, nullable=False)
    buckets_json: Mapped[str] = mapped_column(Text, nullable=False, default="[]")

    run: Mapped[SweepRun] = relationship(back_populates="results")
