from __future__ import annotations


class BtscError(Exception):
    """Base class for every error raised by the btsc package."""


class MapFormatError(BtscError, ValueError):
    pass


class MapValidationError(BtscError, ValueError):
    def __init__(self, message: str, element: str | None = None) -> None:
        super().__init__(f"{message}: {element}" if element else message)
        self.element = element


class UnknownElementError(BtscError, KeyError):
    def __init__(self, kind: str, element_id: object) -> None:
        super().__init__(f"unknown {kind}: {element_id!r}")
        self.kind = kind
        self.element_id = element_id

    def __str__(self) -> str:
        # KeyError quotes its argument by default
        return str(self.args[0])


class TrajectoryError(BtscError, ValueError):
    pass


class NotAdjacentError(BtscError, ValueError):
    pass


class NoBusLinesError(BtscError, ValueError):
    pass


class PlanningError(BtscError, ValueError):
    pass


class LinkPreconditionError(BtscError, ValueError):
    pass


class ConfigError(BtscError, ValueError):
    pass


class MetricsConsistencyError(BtscError, ValueError):
    pass


class EmptyNeighborSetError(BtscError, ValueError):
    pass
