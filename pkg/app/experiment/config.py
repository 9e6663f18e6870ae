from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.errors import ConfigError
from app.faco.params import FacoParams
from app.mobility.world import WorldConfig
from app.routing.engine import EngineConfig

logger = logging.getLogger(__name__)

RADIUS_BAND = (200.0, 800.0)
BUCKET_WIDTH = 500.0
DISTANCE_BUCKETS: tuple[tuple[float, float], ...] = tuple((lo, lo + BUCKET_WIDTH) for lo in range(0, 2500, 500))
DENSITY_LABELS = ("sparse", "common", "dense")
DENSITY_STUDY_DISTANCE = (200.0, 800.0)

Axis = Literal["radius", "distance", "density"]


class MapSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    file: Path | None = None
    rows: int = Field(default=8, ge=2)
    cols: int = Field(default=8, ge=2)
    block_m: float = Field(default=500.0, gt=0)


class LinesSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    file: Path | None = None
    count: int = Field(default=6, ge=0)
    headway_s: float = Field(default=60.0, gt=0)


class WorkloadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    packets: int = Field(default=200, ge=0)
    distance: tuple[float, float] | None = None
    source: Literal["bus", "any"] = "bus"
    warmup_s: float = Field(default=60.0, ge=0)

    @field_validator("distance")
    @classmethod
    def _check_distance(cls, v: tuple[float, float] | None) -> tuple[float, float] | None:
        if v is not None and not 0 <= v[0] < v[1]:
            raise ValueError(f"distance range must satisfy 0 <= low < high, got {v}")
        return v


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario_id: str = "desk"
    seed: int = 1
    duration_s: float = Field(default=600.0, gt=0)
    map: MapSpec = Field(default_factory=MapSpec)
    lines: LinesSpec = Field(default_factory=LinesSpec)
    bus_fleet: int = Field(default=40, ge=0)
    cars: int = Field(default=300, ge=0)
    world: WorldConfig = Field(default_factory=WorldConfig)
    faco: FacoParams = Field(default_factory=FacoParams)
    engine: EngineConfig = Field(default_factory=EngineConfig)
    workload: WorkloadConfig = Field(default_factory=WorkloadConfig)

    @model_validator(mode="after")
    def _warn_radius(self) -> ScenarioConfig:
        lo, hi = RADIUS_BAND
        if not lo <= self.world.radius <= hi:
            logger.warning("Radius %.0f m is outside the %g-%g m band", self.world.radius, lo, hi)
        return self

    @property
    def radius(self) -> float:
        return self.world.radius

    @classmethod
    def desk(cls) -> ScenarioConfig:
        return cls()

    @classmethod
    def city_scale(cls) -> ScenarioConfig:
        return cls(
            scenario_id="city",
            duration_s=4000.0,
            map=MapSpec(rows=12, cols=12, block_m=500.0),
            lines=LinesSpec(count=20),
            bus_fleet=400,
            cars=4000,
        )

    def fleet_split(self, line_count: int) -> list[int]:
        """Buses per line when the total fleet is spread over line_count lines."""
        if line_count == 0:
            return []
        base, extra = divmod(self.bus_fleet, line_count)
        return [base + (1 if i < extra else 0) for i in range(line_count)]


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(source: str | bytes | dict, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse a scenario JSON document, layering it over base (desk defaults when omitted)."""
    try:
        raw = json.loads(source) if isinstance(source, (str, bytes)) else source
    except json.JSONDecodeError as e:
        raise ConfigError(f"scenario config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("scenario config must be a JSON object")
    start = (base or ScenarioConfig.desk()).model_dump(mode="json")
    try:
        return ScenarioConfig.model_validate(_merge(start, raw))
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid scenario config at {where}: {first['msg']}") from e


def read_config(path: Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return load_config(path.read_text(encoding="utf-8"), base)


def with_axis(config: ScenarioConfig, axis: Axis, value: float, seed: int, label: str) -> ScenarioConfig:
    """Copy of config with one sweep axis set to value."""
    update: dict = {"seed": seed, "scenario_id": f"{config.scenario_id}-{axis}-{label}"}
    try:
        if axis == "radius":
            update["world"] = WorldConfig.model_validate({**config.world.model_dump(), "radius": value})
        elif axis == "distance":
            update["workload"] = config.workload.model_copy(update={"distance": (value, value + BUCKET_WIDTH)})
        elif axis == "density":
            if value < 0 or value != int(value):
                raise ConfigError(f"car count must be a non-negative integer, got {value}")
            update["cars"] = int(value)
            if config.workload.distance is None:
                update["workload"] = config.workload.model_copy(update={"distance": DENSITY_STUDY_DISTANCE})
        else:
            raise ConfigError(f"unknown sweep axis {axis!r}")
    except ValidationError as e:
        raise ConfigError(f"invalid {axis} value {value}: {e.errors()[0]['msg']}") from e
    return ScenarioConfig.model_validate({**config.model_dump(), **update})
