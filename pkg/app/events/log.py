from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Iterator, TextIO

logger = logging.getLogger(__name__)


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


class EventLog:
    """Append-only JSON-lines event log.

    Records are kept in memory and, when a sink is attached, streamed to it
    as they are emitted. Lines are serialized with sorted keys so two runs
    with the same seed produce byte-identical files.
    """

    def __init__(self, sink: TextIO | None = None) -> None:
        self._records: list[dict[str, Any]] = []
        self._sink = sink

    @classmethod
    def to_file(cls, path: str | Path) -> EventLog:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        return cls(sink=p.open("w", encoding="utf-8", newline="\n"))

    def emit(self, event: str, t: float, **fields: Any) -> dict[str, Any]:
        record = {"event": event, "t": t, **fields}
        self._records.append(record)
        if self._sink is not None:
            self._sink.write(self.dumps(record) + "\n")
        return record

    @staticmethod
    def dumps(record: dict[str, Any]) -> str:
        return json.dumps(_jsonable(record), sort_keys=True, separators=(",", ":"))

    @property
    def records(self) -> list[dict[str, Any]]:
        return list(self._records)

    def of(self, *events: str) -> Iterator[dict[str, Any]]:
        wanted = set(events)
        return (r for r in self._records if r["event"] in wanted)

    def lines(self) -> Iterable[str]:
        return (self.dumps(r) for r in self._records)

    def close(self) -> None:
        if self._sink is not None:
            self._sink.flush()
            self._sink.close()
            self._sink = None

    def __len__(self) -> int:
        return len(self._records)


def read_events(path: str | Path) -> list[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
