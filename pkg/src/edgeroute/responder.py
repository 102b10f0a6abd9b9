"""Intervention services and their mobile teams.

The service side decides on incoming orders (confirm, decline or stand
by).  A confirmed team follows its route one edge per tick; a blocked edge
is only noticed when it is the next hop, after which the team either
recomputes locally on its own graph snapshot or asks its coordinating
server for a new route.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Mapping, NamedTuple

from .graph import CityGraph
from .messages import (
    CompletionAck,
    CompletionBroadcast,
    CompletionNotice,
    Confirmation,
    Decline,
    InterventionOrder,
    Message,
    RerouteRequest,
    RerouteResponse,
    Severity,
    StandDown,
    service_actor,
)
from .sssp import dijkstra_sequential, extract_path


class RouteError(ValueError):
    pass


class Decision(str, enum.Enum):
    CONFIRM = "confirm"
    DECLINE = "decline"
    STANDBY = "standby"


class TeamStatus(str, enum.Enum):
    IDLE = "idle"
    EN_ROUTE = "en_route"
    REROUTING = "rerouting"
    ON_SITE = "on_site"
    RETURNING = "returning"


class RouteOrigin(str, enum.Enum):
    SERVER_GIVEN = "server_given"
    LOCAL_RECOMPUTE = "local_recompute"
    SERVER_RECOMPUTE = "server_recompute"


@dataclass(frozen=True)
class ServicePolicy:
    service: int
    accept_probability: Mapping[Severity, float] = dataclasses.field(
        default_factory=lambda: {s: 1.0 for s in Severity})
    local_compute: bool = True
    decision_latency: int = 1000
    service_duration: int = 5000

    def __post_init__(self):
        for sev, prob in self.accept_probability.items():
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"accept probability for {sev} outside [0, 1]")

    def accepts(self, severity: Severity) -> float:
        return self.accept_probability.get(severity, 1.0)


def edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def iops_decide(policy: ServicePolicy, order: InterventionOrder, draw: float,
                team_available: bool = True) -> Decision:
    """Decide on an order given a uniform ``draw`` in [0, 1)."""
    if order.service != policy.service:
        raise RouteError(f"order for service {order.service} reached {policy.service}")
    if not order.immediate:
        return Decision.STANDBY
    if not team_available:
        return Decision.DECLINE
    return Decision.CONFIRM if draw < policy.accepts(order.severity) else Decision.DECLINE


@dataclass(frozen=True)
class TeamState:
    team_id: str
    service: int
    current: int
    status: TeamStatus = TeamStatus.IDLE
    incident_id: str | None = None
    target: int | None = None
    remaining: tuple[int, ...] = ()
    route_origin: RouteOrigin = RouteOrigin.SERVER_GIVEN
    server: str | None = None
    graph: CityGraph | None = dataclasses.field(default=None, repr=False, compare=False)
    known_blocks: frozenset[tuple[int, int]] = frozenset()
    walk: tuple[int, ...] = ()
    reroutes: int = 0

    @classmethod
    def idle(cls, service: int) -> "TeamState":
        return cls(team_id=f"team:{service}", service=service, current=service)


def _check_path(graph: CityGraph | None, path: tuple[int, ...]) -> None:
    if graph is None:
        return
    for a, b in zip(path, path[1:]):
        if not graph.has_edge(a, b):
            raise RouteError(f"path uses missing edge ({a},{b})")


def itgs_start(team: TeamState, order: InterventionOrder) -> TeamState:
    if order.service != team.service:
        raise RouteError(f"order for service {order.service} given to {team.team_id}")
    path = tuple(order.path)
    if not path or path[0] != team.service or path[-1] != order.location:
        raise RouteError(f"malformed path {path}")
    _check_path(order.graph, path)
    on_site = len(path) == 1
    return dataclasses.replace(
        team,
        current=path[0],
        status=TeamStatus.ON_SITE if on_site else TeamStatus.EN_ROUTE,
        incident_id=order.incident_id,
        target=order.location,
        remaining=path,
        route_origin=RouteOrigin.SERVER_GIVEN,
        server=order.server,
        graph=order.graph,
        known_blocks=frozenset(),
        walk=(path[0],),
        reroutes=0,
    )


class Step(NamedTuple):
    action: str  # advance | arrived | request | abort
    next_node: int | None = None
    duration: int = 0
    local_recomputes: int = 0
    discovered: tuple[tuple[int, int], ...] = ()


def itgs_step(team: TeamState, blocked_edges, local_compute: bool) -> tuple[TeamState, Step]:
    """Decide the team's next move at its current node.

    ``blocked_edges`` is the set of currently obstructed edges (as
    :func:`edge_key` pairs); only the next hop is inspected.
    """
    if team.status not in (TeamStatus.EN_ROUTE, TeamStatus.REROUTING):
        raise RouteError(f"{team.team_id} is {team.status.value}, not en route")
    runs = 0
    found: list[tuple[int, int]] = []
    while True:
        if team.current == team.target:
            return dataclasses.replace(team, status=TeamStatus.ON_SITE), Step(
                "arrived", local_recomputes=runs, discovered=tuple(found))
        nxt = team.remaining[1]
        key = edge_key(team.current, nxt)
        if key not in blocked_edges:
            team = dataclasses.replace(team, status=TeamStatus.EN_ROUTE)
            return team, Step("advance", nxt, team.graph.weight(team.current, nxt), runs,
                              tuple(found))
        found.append(key)
        team = dataclasses.replace(team, known_blocks=team.known_blocks | {key})
        if not local_compute:
            return dataclasses.replace(team, status=TeamStatus.REROUTING), Step(
                "request", local_recomputes=runs, discovered=tuple(found))
        pruned = team.graph.without_edges(team.known_blocks)
        runs += 1
        path = extract_path(dijkstra_sequential(pruned, team.current), team.target)
        if not path:
            return team, Step("abort", local_recomputes=runs, discovered=tuple(found))
        team = dataclasses.replace(team, remaining=tuple(path), reroutes=team.reroutes + 1,
                                   route_origin=RouteOrigin.LOCAL_RECOMPUTE)


def arrive_at(team: TeamState, node: int) -> TeamState:
    if len(team.remaining) < 2 or team.remaining[1] != node:
        raise RouteError(f"{team.team_id} cannot move {team.current} -> {node}")
    return dataclasses.replace(team, current=node, remaining=team.remaining[1:],
                               walk=team.walk + (node,))


def apply_server_route(team: TeamState, resp: RerouteResponse) -> TeamState | None:
    """Adopt a server-computed route; ``None`` if the server found none."""
    path = tuple(resp.path)
    if not path:
        return None
    if path[0] != team.current or path[-1] != team.target:
        raise RouteError(f"server route {path} does not start at {team.current}")
    return dataclasses.replace(team, remaining=path, graph=resp.graph, status=TeamStatus.EN_ROUTE,
                               route_origin=RouteOrigin.SERVER_RECOMPUTE,
                               reroutes=team.reroutes + 1)


def report_completion(team: TeamState, outcome: str = "done") -> tuple[TeamState, CompletionNotice]:
    if outcome == "done" and team.status is not TeamStatus.ON_SITE:
        raise RouteError(f"{team.team_id} is not on site")
    notice = CompletionNotice(incident_id=team.incident_id, sender=service_actor(team.service),
                              receiver=team.server, service=team.service, outcome=outcome)
    return dataclasses.replace(team, status=TeamStatus.RETURNING), notice


class InterventionService:
    """One service (IOPS) with a single team (ITGS)."""

    def __init__(self, policy: ServicePolicy, ack_timeout: int = 20000,
                 reroute_timeout: int = 10000, max_retransmits: int = 10):
        self.policy = policy
        self.id = service_actor(policy.service)
        self.team = TeamState.idle(policy.service)
        self.reserved_for: str | None = None
        self.ack_timeout = ack_timeout
        self.reroute_timeout = reroute_timeout
        self.max_retransmits = max_retransmits
        self.gen = 0
        self.reroute_attempt = 0
        self.unacked: dict[str, CompletionNotice] = {}

    @property
    def available(self) -> bool:
        return self.reserved_for is None and self.team.status is TeamStatus.IDLE

    def on_message(self, msg: Message, ctx) -> None:
        if isinstance(msg, InterventionOrder):
            self._on_order(msg, ctx)
        elif isinstance(msg, StandDown):
            self._on_stand_down(msg, ctx)
        elif isinstance(msg, RerouteResponse):
            self._on_reroute_response(msg, ctx)
        elif isinstance(msg, CompletionAck):
            self.unacked.pop(msg.incident_id, None)
        elif isinstance(msg, CompletionBroadcast):
            ctx.log("completion_received", actor=self.id, incident=msg.incident_id,
                    served=msg.served)

    def _on_order(self, order: InterventionOrder, ctx) -> None:
        draw = ctx.rng(self.id).random()
        decision = iops_decide(self.policy, order, draw, self.available)
        ctx.log("iops_decision", actor=self.id, incident=order.incident_id, rank=order.rank,
                decision=decision.value)
        if decision is Decision.STANDBY:
            return
        if decision is Decision.CONFIRM:
            self.reserved_for = order.incident_id
        ctx.set_timer(self.id, self.policy.decision_latency, "decide", order=order,
                      decision=decision.value)

    def _on_stand_down(self, msg: StandDown, ctx) -> None:
        en_route = self.team.status in (TeamStatus.EN_ROUTE, TeamStatus.REROUTING)
        if self.reserved_for == msg.incident_id or (
                en_route and self.team.incident_id == msg.incident_id):
            ctx.log("team_recalled", actor=self.id, incident=msg.incident_id, node=self.team.current,
                    reason=msg.reason)
            self._go_idle()
        else:
            ctx.log("stand_down", actor=self.id, incident=msg.incident_id, reason=msg.reason)

    def _go_idle(self) -> None:
        self.gen += 1
        self.reserved_for = None
        self.team = TeamState.idle(self.policy.service)

    def on_timer(self, kind: str, payload: dict, ctx) -> None:
        if kind == "decide":
            self._decide(payload["order"], Decision(payload["decision"]), ctx)
        elif kind == "tick":
            if payload["gen"] == self.gen:
                self.team = arrive_at(self.team, payload["node"])
                ctx.log("team_move", actor=self.team.team_id, incident=self.team.incident_id,
                        node=payload["node"])
                self._advance(ctx)
        elif kind == "reroute_timeout":
            if (payload["gen"] == self.gen and self.team.status is TeamStatus.REROUTING
                    and payload["attempt"] == self.reroute_attempt):
                ctx.log("reroute_stall", actor=self.team.team_id, incident=self.team.incident_id,
                        node=self.team.current, attempt=self.reroute_attempt)
                self._request_route(ctx)
        elif kind == "service_done":
            if payload["gen"] == self.gen:
                self._complete("done", ctx)
        elif kind == "notice_retry":
            notice = self.unacked.get(payload["incident"])
            if notice is None or notice.attempt != payload["attempt"]:
                return
            if notice.attempt >= self.max_retransmits:
                ctx.log("notice_undelivered", actor=self.id, incident=notice.incident_id)
                del self.unacked[notice.incident_id]
                return
            self._send_notice(dataclasses.replace(notice, attempt=notice.attempt + 1), ctx)

    def _decide(self, order: InterventionOrder, decision: Decision, ctx) -> None:
        if decision is Decision.DECLINE:
            ctx.send(Decline(incident_id=order.incident_id, sender=self.id, receiver=order.sender,
                             service=order.service, track=order.track))
            return
        if self.reserved_for != order.incident_id:
            return  # stood down while deciding
        ctx.send(Confirmation(incident_id=order.incident_id, sender=self.id, receiver=order.sender,
                              service=order.service, track=order.track))
        self.gen += 1
        self.team = itgs_start(self.team, order)
        ctx.log("team_start", actor=self.team.team_id, incident=order.incident_id,
                path=list(order.path), cost=order.cost, origin=self.team.route_origin.value)
        if self.team.status is TeamStatus.ON_SITE:
            self._on_site(ctx)
        else:
            self._advance(ctx)

    def _advance(self, ctx) -> None:
        team, step = itgs_step(self.team, ctx.blocked_edges(), self.policy.local_compute)
        for u, v in step.discovered:
            ctx.log("block_discovered", actor=team.team_id, incident=team.incident_id,
                    node=self.team.current, edge=[u, v])
        if step.local_recomputes:
            for _ in range(step.local_recomputes):
                ctx.metrics.on_engine("sequential")
            ctx.log("local_recompute", actor=team.team_id, incident=team.incident_id,
                    node=team.current, runs=step.local_recomputes)
            if step.action != "abort":
                ctx.log("reroute", actor=team.team_id, incident=team.incident_id,
                        node=team.current, origin=RouteOrigin.LOCAL_RECOMPUTE.value,
                        path=list(team.remaining), cost=team.graph.path_cost(team.remaining))
                ctx.metrics.on_reroute(team.incident_id)
        self.team = team
        if step.action == "arrived":
            self._on_site(ctx)
        elif step.action == "advance":
            ctx.set_timer(self.id, step.duration, "tick", gen=self.gen, node=step.next_node)
        elif step.action == "request":
            self.reroute_attempt = 0
            self._request_route(ctx)
        else:
            self._abort(ctx)

    def _request_route(self, ctx) -> None:
        self.reroute_attempt += 1
        team = self.team
        ctx.send(RerouteRequest(incident_id=team.incident_id, sender=self.id, receiver=team.server,
                                service=team.service, current=team.current,
                                blocked=tuple(sorted(team.known_blocks)),
                                attempt=self.reroute_attempt))
        ctx.set_timer(self.id, self.reroute_timeout, "reroute_timeout", gen=self.gen,
                      attempt=self.reroute_attempt)

    def _on_reroute_response(self, resp: RerouteResponse, ctx) -> None:
        if self.team.status is not TeamStatus.REROUTING or resp.attempt != self.reroute_attempt \
                or resp.incident_id != self.team.incident_id:
            ctx.log("late_reroute_response", actor=self.id, incident=resp.incident_id)
            return
        team = apply_server_route(self.team, resp)
        if team is None:
            self._abort(ctx)
            return
        self.team = team
        ctx.log("reroute", actor=team.team_id, incident=team.incident_id, node=team.current,
                origin=RouteOrigin.SERVER_RECOMPUTE.value, path=list(team.remaining),
                cost=team.graph.path_cost(team.remaining))
        ctx.metrics.on_reroute(team.incident_id)
        self._advance(ctx)

    def _on_site(self, ctx) -> None:
        team = self.team
        ctx.log("team_arrive", actor=team.team_id, incident=team.incident_id, node=team.current,
                walk=list(team.walk), reroutes=team.reroutes)
        ctx.metrics.on_arrival(team.incident_id, ctx.now)
        ctx.set_timer(self.id, self.policy.service_duration, "service_done", gen=self.gen)

    def _abort(self, ctx) -> None:
        ctx.log("team_abort", actor=self.team.team_id, incident=self.team.incident_id,
                node=self.team.current, blocked=[list(e) for e in sorted(self.team.known_blocks)])
        self._complete("aborted", ctx)

    def _complete(self, outcome: str, ctx) -> None:
        team, notice = report_completion(self.team, outcome)
        ctx.log("team_status", actor=team.team_id, incident=team.incident_id,
                status=TeamStatus.RETURNING.value)
        self._send_notice(notice, ctx)
        self._go_idle()
        ctx.log("team_status", actor=team.team_id, incident=team.incident_id,
                status=TeamStatus.IDLE.value)

    def _send_notice(self, notice: CompletionNotice, ctx) -> None:
        self.unacked[notice.incident_id] = notice
        ctx.send(notice)
        ctx.set_timer(self.id, self.ack_timeout, "notice_retry", incident=notice.incident_id,
                      attempt=notice.attempt)
