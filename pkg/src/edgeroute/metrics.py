"""Run metrics, collected live and recomputable from a trace log."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable


@dataclass
class IncidentMetrics:
    location: int
    hazard: str
    severity: str
    detected_at: int
    delivered_to: str | None = None
    failovers: int = 0
    dispatched_at: int | None = None
    first_arrival_at: int | None = None
    reroutes: int = 0
    delivery_failed: bool = False
    unserved: bool = False
    closed: bool = False

    @property
    def status(self) -> str:
        if self.delivery_failed and self.dispatched_at is None:
            return "undelivered"
        if self.unserved:
            return "unserved"
        return "served" if self.closed else "open"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detection_to_dispatch"] = _diff(self.dispatched_at, self.detected_at)
        d["dispatch_to_arrival"] = _diff(self.first_arrival_at, self.dispatched_at)
        d["status"] = self.status
        return d


def _diff(a: int | None, b: int | None) -> int | None:
    return None if a is None or b is None else a - b


class MetricsCollector:
    """Live counters.  Per-incident hooks ignore incidents that were never
    detected by a SAS (e.g. alerts injected directly in tests)."""

    def __init__(self):
        self.incidents: dict[str, IncidentMetrics] = {}
        self.cache_hits = 0
        self.cache_misses = 0
        self.engine_runs = {"parallel": 0, "sequential": 0}
        self.sent = 0
        self.delivered = 0
        self.dropped = 0

    def on_detect(self, iid: str, location: int, hazard: str, severity: str, t: int) -> None:
        self.incidents[iid] = IncidentMetrics(location, hazard, severity, t)

    def on_failover(self, iid: str) -> None:
        if inc := self.incidents.get(iid):
            inc.failovers += 1

    def on_delivered(self, iid: str, server: str) -> None:
        inc = self.incidents.get(iid)
        if inc and inc.delivered_to is None:
            inc.delivered_to = server

    def on_delivery_failed(self, iid: str) -> None:
        if inc := self.incidents.get(iid):
            inc.delivery_failed = True

    def on_dispatch(self, iid: str, t: int) -> None:
        inc = self.incidents.get(iid)
        if inc and inc.dispatched_at is None:
            inc.dispatched_at = t

    def on_arrival(self, iid: str, t: int) -> None:
        inc = self.incidents.get(iid)
        if inc and inc.first_arrival_at is None:
            inc.first_arrival_at = t

    def on_reroute(self, iid: str) -> None:
        if inc := self.incidents.get(iid):
            inc.reroutes += 1

    def on_unserved(self, iid: str) -> None:
        if inc := self.incidents.get(iid):
            inc.unserved = True

    def on_closed(self, iid: str, served: bool) -> None:
        if inc := self.incidents.get(iid):
            inc.closed = True

    def on_cache(self, hit: bool) -> None:
        if hit:
            self.cache_hits += 1
        else:
            self.cache_misses += 1

    def on_engine(self, kind: str, runs: int = 1) -> None:
        self.engine_runs[kind] += runs

    def on_send(self) -> None:
        self.sent += 1

    def on_deliver(self) -> None:
        self.delivered += 1

    def on_drop(self) -> None:
        self.dropped += 1

    def to_dict(self) -> dict:
        lookups = self.cache_hits + self.cache_misses
        statuses = [m.status for m in self.incidents.values()]
        return {
            "incidents": {iid: m.to_dict() for iid, m in sorted(self.incidents.items())},
            "totals": {
                "incidents": len(self.incidents),
                "unserved_incidents": statuses.count("unserved"),
                "undelivered_incidents": statuses.count("undelivered"),
                "failovers": sum(m.failovers for m in self.incidents.values()),
                "reroutes": sum(m.reroutes for m in self.incidents.values()),
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "cache_hit_ratio": round(self.cache_hits / lookups, 6) if lookups else None,
                "engine_runs_parallel": self.engine_runs["parallel"],
                "engine_runs_sequential": self.engine_runs["sequential"],
                "messages_sent": self.sent,
                "messages_delivered": self.delivered,
                "messages_dropped": self.dropped,
                "messages_in_flight": self.sent - self.delivered - self.dropped,
            },
        }


def metrics_from_trace(lines: Iterable[str]) -> dict:
    """Rebuild the metrics document from trace-log lines alone."""
    m = MetricsCollector()
    for line in lines:
        if not line.strip():
            continue
        r = json.loads(line)
        ev, t = r["ev"], r["t"]
        if ev == "detect":
            m.on_detect(r["incident"], r["location"], r["hazard"], r["severity"], t)
        elif ev == "failover":
            m.on_failover(r["incident"])
        elif ev == "alert_delivered":
            m.on_delivered(r["incident"], r["server"])
        elif ev == "delivery_failed":
            m.on_delivery_failed(r["incident"])
        elif ev == "dispatch":
            m.on_dispatch(r["incident"], t)
        elif ev == "team_arrive":
            m.on_arrival(r["incident"], t)
        elif ev == "reroute":
            m.on_reroute(r["incident"])
        elif ev == "unserved":
            m.on_unserved(r["incident"])
        elif ev == "incident_closed":
            m.on_closed(r["incident"], r["served"])
        elif ev in ("cache_hit", "cache_miss"):
            m.on_cache(ev == "cache_hit")
        elif ev == "engine_run":
            m.on_engine(r["engine"])
        elif ev == "local_recompute":
            m.on_engine("sequential", r["runs"])
        elif ev == "send":
            m.on_send()
        elif ev == "deliver":
            m.on_deliver()
        elif ev == "drop":
            m.on_drop()
    return m.to_dict()
