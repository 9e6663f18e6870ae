from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class FacoParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tau0: float = Field(default=0.3, gt=0, le=1)
    delta: float = Field(default=0.7, gt=0, lt=1)
    phi: float = Field(default=0.6, gt=0, lt=1)
    alpha: float = Field(default=8.0, ge=0)
    beta: float = Field(default=5.0, ge=0)
    dt: float = Field(default=1.0, gt=0)
    n_ant: int = Field(default=10, ge=1)
    d_th: float = Field(default=10.0, gt=0)
    packet_bytes: int = Field(default=1024, gt=0)
    rate_bps: float = Field(default=6e6, gt=0)
    t_proc: float = Field(default=0.002, ge=0)

    @property
    def hop_delay(self) -> float:
        """Seconds to push one packet across one radio hop."""
        return self.packet_bytes * 8 / self.rate_bps + self.t_proc

    @property
    def ant_ttl(self) -> float:
        return self.d_th / 2
