"""Edge-server actor.

Alert pipeline: cache lookup for the incident node at the current graph
version, partitioned Dijkstra on a miss, ranking of services per required
type, then one order per ranked service.  Rank-1 of each type is asked to
act immediately; the rest stand by until promoted after a decline or a
confirmation timeout.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field

from .cache import DEFAULT_CAPACITY, CacheEntry, PathCache
from .graph import CityGraph, RoleKind
from .messages import (
    AlertAck,
    CompletionAck,
    CompletionBroadcast,
    CompletionNotice,
    Confirmation,
    Decline,
    IncidentAlert,
    InterventionOrder,
    Message,
    Ping,
    Pong,
    RerouteRequest,
    RerouteResponse,
    ResourceRequest,
    StandDown,
    service_actor,
)
from .sssp import RankedService, SsspResult, dijkstra_parallel, extract_path, group_by_type, rank_services


class ServiceState(str, enum.Enum):
    IDLE = "idle"
    ALERTED = "alerted"
    CONFIRMED = "confirmed"
    DECLINED = "declined"
    ENGAGED = "engaged"
    DONE = "done"


class TrackStatus(str, enum.Enum):
    AWAITING = "awaiting"
    ENGAGED = "engaged"
    DONE = "done"
    EXHAUSTED = "exhausted"
    ABORTED = "aborted"


@dataclass
class Track:
    """Dispatch progress for one service type within one incident."""

    index: int
    service_type: str
    ranked: list[RankedService]
    cursor: int = 0
    status: TrackStatus = TrackStatus.AWAITING
    engaged: int | None = None
    origin: str = "alert"

    @property
    def awaiting(self) -> int | None:
        if self.status is TrackStatus.AWAITING and self.cursor < len(self.ranked):
            return self.ranked[self.cursor].node
        return None

    @property
    def resolved(self) -> bool:
        return self.status in (TrackStatus.DONE, TrackStatus.EXHAUSTED, TrackStatus.ABORTED)


@dataclass
class Incident:
    alert: IncidentAlert
    tracks: list[Track] = field(default_factory=list)
    alerted: set[str] = field(default_factory=set)
    orders: list[InterventionOrder] = field(default_factory=list)

    @property
    def location(self) -> int:
        return self.alert.location


class EdgeServer:
    def __init__(
        self,
        server_id: str,
        graph: CityGraph,
        p_workers: int = 4,
        cache_capacity: int = DEFAULT_CAPACITY,
        use_cache: bool = True,
        compute_latency: int = 1000,
        confirm_timeout: int = 30000,
        engine_mode: str = "lockstep",
    ):
        self.id = server_id
        self.graph = graph
        self.p_workers = p_workers
        self.cache = PathCache(cache_capacity) if use_cache else None
        self.compute_latency = compute_latency
        self.confirm_timeout = confirm_timeout
        self.engine_mode = engine_mode
        self.online = True
        self.last_result: SsspResult | None = None
        self.roster = {v: ServiceState.IDLE for v in graph.services()}
        self.incidents: dict[str, Incident] = {}
        self.closed: dict[str, bool] = {}
        self.engine_runs: Counter[tuple[int, int]] = Counter()
        self.reroute_runs = 0

    # -- routing -----------------------------------------------------------

    def routes_from(self, source: int, ctx, purpose: str) -> SsspResult:
        """Cache-first shortest paths from ``source`` on the current graph."""
        version = self.graph.version
        if self.cache is not None:
            entry = self.cache.lookup(source, version, ctx.now)
            if entry is not None:
                ctx.log("cache_hit", actor=self.id, source=source, version=version, purpose=purpose)
                ctx.metrics.on_cache(hit=True)
                return entry.result
            ctx.log("cache_miss", actor=self.id, source=source, version=version, purpose=purpose)
            ctx.metrics.on_cache(hit=False)
        p = min(self.p_workers, self.graph.n)
        result = dijkstra_parallel(self.graph, source, p, self.engine_mode)
        self.engine_runs[(source, version)] += 1
        ctx.log("engine_run", actor=self.id, engine="parallel", source=source, version=version,
                workers=p, purpose=purpose)
        ctx.metrics.on_engine("parallel")
        if self.cache is not None:
            self.cache.insert(CacheEntry(source, result, version, ctx.now))
        self.last_result = result
        return result

    def apply_graph(self, graph: CityGraph, ctx) -> int:
        self.graph = graph
        evicted = self.cache.invalidate_all(graph.version) if self.cache is not None else 0
        ctx.log("cache_invalidate", actor=self.id, version=graph.version, evicted=evicted)
        return evicted

    # -- message handling --------------------------------------------------

    def on_message(self, msg: Message, ctx) -> None:
        if isinstance(msg, Ping):
            self.handle_ping(msg, ctx)
        elif isinstance(msg, IncidentAlert):
            self.handle_alert(msg, ctx)
        elif isinstance(msg, Confirmation):
            self.handle_confirmation(msg.incident_id, msg.service, ctx, track=msg.track)
        elif isinstance(msg, Decline):
            self.handle_decline(msg, ctx)
        elif isinstance(msg, ResourceRequest):
            self.handle_resource_request(msg.incident_id, msg.requested_type, msg.site, ctx)
        elif isinstance(msg, CompletionNotice):
            ctx.send(CompletionAck(incident_id=msg.incident_id, sender=self.id,
                                   receiver=msg.sender, service=msg.service))
            self.handle_completion(msg.incident_id, msg.service, ctx, outcome=msg.outcome)
        elif isinstance(msg, RerouteRequest):
            self.handle_reroute_request(msg, ctx)
        else:
            ctx.log("unexpected_message", actor=self.id, kind=msg.kind, incident=msg.incident_id)

    def handle_ping(self, msg: Ping, ctx) -> Pong | None:
        if not self.online:
            return None
        pong = Pong(incident_id=msg.incident_id, sender=self.id, receiver=msg.sender,
                    attempt=msg.attempt)
        ctx.send(pong)
        return pong

    def handle_alert(self, alert: IncidentAlert, ctx) -> list[InterventionOrder]:
        ctx.send(AlertAck(incident_id=alert.incident_id, sender=self.id, receiver=alert.sender))
        if alert.incident_id in self.incidents or alert.incident_id in self.closed:
            ctx.log("duplicate_alert", actor=self.id, incident=alert.incident_id)
            return []
        loc = alert.location
        if not (0 <= loc < self.graph.n) or self.graph.role(loc).kind is not RoleKind.SURVEILLANCE:
            ctx.log("rejected_alert", actor=self.id, incident=alert.incident_id, location=loc)
            return []
        ctx.log("alert_received", actor=self.id, incident=alert.incident_id, location=loc,
                severity=alert.severity.value, required=list(alert.required_types))
        inc = Incident(alert)
        inc.alerted.add(alert.origin)
        self.incidents[alert.incident_id] = inc

        result = self.routes_from(loc, ctx, "alert")
        groups = group_by_type(rank_services(result, self.graph, alert.required_types))
        orders = []
        for stype in alert.required_types:
            ranked = groups.get(stype, [])
            track = Track(len(inc.tracks), stype, ranked)
            inc.tracks.append(track)
            if not ranked:
                track.status = TrackStatus.EXHAUSTED
                ctx.log("unreachable_type", actor=self.id, incident=alert.incident_id,
                        service_type=stype)
                self._unserved(inc, track, ctx, "unreachable")
                continue
            for rank, rs in enumerate(ranked, start=1):
                orders.append(self._order(inc, track, rs, rank, immediate=rank == 1))
            self.roster[ranked[0].node] = ServiceState.ALERTED
        inc.orders = orders
        if self.compute_latency > 0:
            ctx.set_timer(self.id, self.compute_latency, "dispatch", incident=alert.incident_id)
        else:
            self._dispatch(inc, ctx)
        return orders

    def _order(self, inc: Incident, track: Track, rs: RankedService, rank: int,
               immediate: bool) -> InterventionOrder:
        return InterventionOrder(
            incident_id=inc.alert.incident_id, sender=self.id, receiver=service_actor(rs.node),
            service=rs.node, service_type=rs.service_type, location=inc.location,
            path=rs.path, cost=rs.cost, rank=rank, server=self.id,
            graph_version=self.graph.version, severity=inc.alert.severity,
            immediate=immediate, track=track.index, graph=self.graph,
        )

    def _dispatch(self, inc: Incident, ctx) -> None:
        iid = inc.alert.incident_id
        ctx.log("dispatch", actor=self.id, incident=iid, orders=len(inc.orders))
        ctx.metrics.on_dispatch(iid, ctx.now)
        for order in inc.orders:
            inc.alerted.add(order.receiver)
            ctx.send(order)
        for track in inc.tracks:
            if track.awaiting is not None:
                self._arm_confirm_timer(iid, track, ctx)
        self._maybe_close(inc, ctx)

    def _arm_confirm_timer(self, iid: str, track: Track, ctx) -> None:
        ctx.set_timer(self.id, self.confirm_timeout, "confirm_timeout", incident=iid,
                      track=track.index, cursor=track.cursor)

    def on_timer(self, kind: str, payload: dict, ctx) -> None:
        inc = self.incidents.get(payload["incident"])
        if inc is None:
            return
        if kind == "dispatch":
            self._dispatch(inc, ctx)
        elif kind == "confirm_timeout":
            track = inc.tracks[payload["track"]]
            if track.awaiting is not None and track.cursor == payload["cursor"]:
                ctx.log("confirm_timeout", actor=self.id, incident=inc.alert.incident_id,
                        service=track.awaiting, service_type=track.service_type)
                self.handle_decline_or_timeout(inc.alert.incident_id, track.index, ctx,
                                               reason="timeout")

    def handle_confirmation(self, incident_id: str, service: int, ctx, track: int | None = None) -> None:
        inc = self.incidents.get(incident_id)
        if inc is None:
            self._violation(ctx, incident_id, service, "confirmation for unknown or closed incident")
            return
        for t in inc.tracks:
            if t.engaged == service and t.status in (TrackStatus.ENGAGED, TrackStatus.DONE):
                ctx.log("duplicate_confirmation", actor=self.id, incident=incident_id, service=service)
                return
        t = next((t for t in inc.tracks if t.awaiting == service
                  and (track is None or t.index == track)), None)
        if t is None:
            self._violation(ctx, incident_id, service, "confirmation from a service not awaited")
            return
        self.roster[service] = ServiceState.CONFIRMED
        t.status = TrackStatus.ENGAGED
        t.engaged = service
        self.roster[service] = ServiceState.ENGAGED
        ctx.log("engaged", actor=self.id, incident=incident_id, service=service,
                service_type=t.service_type, rank=t.cursor + 1)
        for rs in t.ranked[t.cursor + 1:]:
            ctx.send(StandDown(incident_id=incident_id, sender=self.id,
                               receiver=service_actor(rs.node), service=rs.node))

    def _violation(self, ctx, incident_id: str, service: int, reason: str) -> None:
        ctx.log("protocol_violation", actor=self.id, incident=incident_id, service=service,
                reason=reason)
        ctx.send(StandDown(incident_id=incident_id, sender=self.id,
                           receiver=service_actor(service), service=service, reason="not_awaited"))

    def handle_decline(self, msg: Decline, ctx) -> None:
        inc = self.incidents.get(msg.incident_id)
        if inc is None:
            ctx.log("late_decline", actor=self.id, incident=msg.incident_id, service=msg.service)
            return
        track = inc.tracks[msg.track] if msg.track < len(inc.tracks) else None
        if track is None or track.awaiting != msg.service:
            ctx.log("late_decline", actor=self.id, incident=msg.incident_id, service=msg.service)
            return
        ctx.log("declined", actor=self.id, incident=msg.incident_id, service=msg.service,
                service_type=track.service_type)
        self.handle_decline_or_timeout(msg.incident_id, track.index, ctx, reason="decline")

    def handle_decline_or_timeout(self, incident_id: str, track_index: int, ctx,
                                  reason: str = "decline") -> InterventionOrder | None:
        """Advance the track's cursor; promote the next service or exhaust."""
        inc = self.incidents[incident_id]
        track = inc.tracks[track_index]
        prev = track.awaiting
        if prev is None:
            return None
        self.roster[prev] = ServiceState.IDLE
        if reason == "timeout":
            ctx.send(StandDown(incident_id=incident_id, sender=self.id,
                               receiver=service_actor(prev), service=prev, reason="timeout"))
        track.cursor += 1
        if track.cursor >= len(track.ranked):
            track.status = TrackStatus.EXHAUSTED
            self._unserved(inc, track, ctx, "exhausted")
            self._maybe_close(inc, ctx)
            return None
        rs = track.ranked[track.cursor]
        order = self._order(inc, track, rs, track.cursor + 1, immediate=True)
        self.roster[rs.node] = ServiceState.ALERTED
        inc.alerted.add(order.receiver)
        ctx.log("redirect", actor=self.id, incident=incident_id, service=rs.node,
                service_type=track.service_type, rank=track.cursor + 1, reason=reason)
        ctx.send(order)
        self._arm_confirm_timer(incident_id, track, ctx)
        return order

    def _unserved(self, inc: Incident, track: Track, ctx, reason: str) -> None:
        ctx.log("unserved", actor=self.id, incident=inc.alert.incident_id,
                service_type=track.service_type, reason=reason)
        ctx.metrics.on_unserved(inc.alert.incident_id)

    def handle_resource_request(self, incident_id: str, requested_type: str, site: int,
                                ctx) -> InterventionOrder | None:
        inc = self.incidents.get(incident_id)
        if inc is None:
            ctx.log("unknown_incident", actor=self.id, incident=incident_id,
                    requested_type=requested_type)
            return None
        if not 0 <= site < self.graph.n:
            ctx.log("unknown_incident", actor=self.id, incident=incident_id, site=site)
            return None
        result = self.routes_from(site, ctx, "request")
        ranked = [
            rs for rs in rank_services(result, self.graph, {requested_type})
            if self.roster.get(rs.node) is ServiceState.IDLE
        ]
        if not ranked:
            ctx.log("unmet_request", actor=self.id, incident=incident_id,
                    requested_type=requested_type, site=site)
            return None
        track = Track(len(inc.tracks), requested_type, ranked, origin="request")
        inc.tracks.append(track)
        rs = ranked[0]
        order = self._order(inc, track, rs, 1, immediate=True)
        self.roster[rs.node] = ServiceState.ALERTED
        inc.alerted.add(order.receiver)
        ctx.log("resource_dispatch", actor=self.id, incident=incident_id, service=rs.node,
                service_type=requested_type, cost=rs.cost, site=site)
        ctx.send(order)
        self._arm_confirm_timer(incident_id, track, ctx)
        return order

    def handle_completion(self, incident_id: str, service: int, ctx, outcome: str = "done") -> None:
        inc = self.incidents.get(incident_id)
        if inc is None:
            ctx.log("completion_ignored", actor=self.id, incident=incident_id, service=service)
            return
        track = next((t for t in inc.tracks if t.engaged == service), None)
        if track is None:
            ctx.log("protocol_violation", actor=self.id, incident=incident_id, service=service,
                    reason="completion from a service not engaged")
            return
        if track.status is not TrackStatus.ENGAGED:
            ctx.log("duplicate_completion", actor=self.id, incident=incident_id, service=service)
            return
        if outcome == "aborted":
            track.status = TrackStatus.ABORTED
            self._unserved(inc, track, ctx, "aborted")
        else:
            track.status = TrackStatus.DONE
            self.roster[service] = ServiceState.DONE
        ctx.log("service_done", actor=self.id, incident=incident_id, service=service,
                outcome=outcome)
        self.roster[service] = ServiceState.IDLE
        self._maybe_close(inc, ctx)

    def _maybe_close(self, inc: Incident, ctx) -> None:
        if not all(t.resolved for t in inc.tracks):
            return
        iid = inc.alert.incident_id
        served = all(t.status is TrackStatus.DONE for t in inc.tracks)
        if any(t.status is TrackStatus.DONE for t in inc.tracks):
            for actor in sorted(inc.alerted):
                ctx.send(CompletionBroadcast(incident_id=iid, sender=self.id, receiver=actor,
                                             served=served))
        ctx.log("incident_closed", actor=self.id, incident=iid, served=served)
        ctx.metrics.on_closed(iid, served)
        del self.incidents[iid]
        self.closed[iid] = served

    def handle_reroute_request(self, msg: RerouteRequest, ctx) -> RerouteResponse:
        inc = self.incidents.get(msg.incident_id)
        path: list[int] = []
        if inc is not None and 0 <= msg.current < self.graph.n:
            pruned = self.graph.without_edges(msg.blocked)
            p = min(self.p_workers, pruned.n)
            result = dijkstra_parallel(pruned, inc.location, p, self.engine_mode)
            self.reroute_runs += 1
            ctx.log("engine_run", actor=self.id, engine="parallel", source=inc.location,
                    version=self.graph.version, workers=p, purpose="reroute")
            ctx.metrics.on_engine("parallel")
            path = extract_path(result, msg.current)
            path.reverse()
        resp = RerouteResponse(incident_id=msg.incident_id, sender=self.id, receiver=msg.sender,
                               service=msg.service, path=tuple(path),
                               graph_version=self.graph.version, attempt=msg.attempt,
                               graph=self.graph)
        ctx.send(resp)
        return resp
