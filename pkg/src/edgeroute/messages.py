"""Simulated wire records exchanged between actors.

Every message carries ``incident_id``, ``sender``, ``receiver`` and the
send ``timestamp``.  :meth:`Message.to_record` gives the trace-log form with
a stable field order.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Any, ClassVar

from .graph import CityGraph


class Severity(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass(frozen=True, kw_only=True)
class Message:
    kind: ClassVar[str] = "Message"

    incident_id: str
    sender: str
    receiver: str
    timestamp: int = 0

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"kind": self.kind}
        for f in dataclasses.fields(self):
            if not f.metadata.get("wire", True):
                continue
            rec[f.name] = _plain(getattr(self, f.name))
        return rec

    def stamped(self, t: int) -> "Message":
        return dataclasses.replace(self, timestamp=t)


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (tuple, list, frozenset, set)):
        items = [_plain(v) for v in value]
        return sorted(items) if isinstance(value, (set, frozenset)) else items
    return value


def _local():
    """Field excluded from the wire record (in-process payload only)."""
    return field(default=None, repr=False, compare=False, metadata={"wire": False})


@dataclass(frozen=True, kw_only=True)
class Ping(Message):
    kind: ClassVar[str] = "Ping"
    attempt: int = 0


@dataclass(frozen=True, kw_only=True)
class Pong(Message):
    kind: ClassVar[str] = "Pong"
    attempt: int = 0


@dataclass(frozen=True, kw_only=True)
class IncidentAlert(Message):
    kind: ClassVar[str] = "IncidentAlert"
    location: int
    hazard: str
    severity: Severity
    required_types: tuple[str, ...]
    origin: str
    detected_at: int = 0

    def __post_init__(self):
        if not self.required_types:
            raise ValueError("an alert needs at least one required service type")


@dataclass(frozen=True, kw_only=True)
class AlertAck(Message):
    kind: ClassVar[str] = "AlertAck"


@dataclass(frozen=True, kw_only=True)
class InterventionOrder(Message):
    kind: ClassVar[str] = "InterventionOrder"
    service: int
    service_type: str
    location: int
    path: tuple[int, ...]
    cost: int
    rank: int
    server: str
    graph_version: int
    severity: Severity = Severity.LOW
    immediate: bool = False
    track: int = 0
    graph: CityGraph | None = _local()


@dataclass(frozen=True, kw_only=True)
class StandDown(Message):
    kind: ClassVar[str] = "StandDown"
    service: int
    reason: str = "lower_priority"


@dataclass(frozen=True, kw_only=True)
class Confirmation(Message):
    kind: ClassVar[str] = "Confirmation"
    service: int
    track: int = 0


@dataclass(frozen=True, kw_only=True)
class Decline(Message):
    kind: ClassVar[str] = "Decline"
    service: int
    track: int = 0


@dataclass(frozen=True, kw_only=True)
class ResourceRequest(Message):
    kind: ClassVar[str] = "ResourceRequest"
    requested_type: str
    site: int


@dataclass(frozen=True, kw_only=True)
class RerouteRequest(Message):
    kind: ClassVar[str] = "RerouteRequest"
    service: int
    current: int
    blocked: tuple[tuple[int, int], ...] = ()
    attempt: int = 0


@dataclass(frozen=True, kw_only=True)
class RerouteResponse(Message):
    kind: ClassVar[str] = "RerouteResponse"
    service: int
    path: tuple[int, ...]
    graph_version: int
    attempt: int = 0
    graph: CityGraph | None = _local()


@dataclass(frozen=True, kw_only=True)
class CompletionNotice(Message):
    kind: ClassVar[str] = "CompletionNotice"
    service: int
    outcome: str = "done"
    attempt: int = 0


@dataclass(frozen=True, kw_only=True)
class CompletionAck(Message):
    kind: ClassVar[str] = "CompletionAck"
    service: int


@dataclass(frozen=True, kw_only=True)
class CompletionBroadcast(Message):
    kind: ClassVar[str] = "CompletionBroadcast"
    served: bool = True


def service_actor(node: int) -> str:
    return f"svc:{node}"


def site_actor(node: int) -> str:
    return f"site:{node}"
