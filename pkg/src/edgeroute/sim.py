"""Deterministic discrete-event harness binding SAS, edge servers and services.

Events pop in ``(time, sequence)`` order; time is an integer tick count
(milli time units).  Randomness comes from per-actor substreams derived from
the run seed and the actor id, so adding an actor leaves the others' draws
untouched.  Every event and message is appended to a JSON-lines trace.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .graph import update_graph
from .messages import Message, ResourceRequest, site_actor
from .metrics import MetricsCollector
from .responder import InterventionService, edge_key
from .sas import SurveillanceSystem
from .scenario import NetworkSpec, Scenario, load_scenario_file
from .server import EdgeServer


def substream(seed: int, actor: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}/{actor}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class MessageDelivery:
    time: int
    message: Message


@dataclass(frozen=True)
class Drop:
    message: Message
    reason: str


class NetworkModel:
    """Per-link latency plus independent Bernoulli loss per send."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        if spec.latency < 1 or any(v < 1 for v in spec.links.values()):
            raise ValueError("link latency must be at least one tick")
        if not 0.0 <= spec.drop_probability <= 1.0:
            raise ValueError("drop_probability outside [0, 1]")
        self.spec = spec
        self.seed = seed
        self._rngs: dict[str, random.Random] = {}

    def latency(self, a: str, b: str) -> int:
        return self.spec.links.get(frozenset((a, b)), self.spec.latency)

    def deliver(self, message: Message, now: int) -> MessageDelivery | Drop:
        rng = self._rngs.get(message.sender)
        if rng is None:
            rng = self._rngs[message.sender] = substream(self.seed, f"net:{message.sender}")
        if rng.random() < self.spec.drop_probability:
            return Drop(message, "loss")
        return MessageDelivery(now + self.latency(message.sender, message.receiver), message)


@dataclass
class RunResult:
    metrics: dict
    trace: list[str]
    sim: "Simulation" = field(repr=False)

    @property
    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)

    def events(self, ev: str | None = None) -> list[dict]:
        recs = [json.loads(line) for line in self.trace]
        return recs if ev is None else [r for r in recs if r["ev"] == ev]


class Simulation:
    def __init__(self, scenario: Scenario, seed: int = 0, use_cache: bool = True,
                 engine_mode: str = "lockstep"):
        self.scenario = scenario
        self.seed = seed
        self.now = 0
        self.trace: list[str] = []
        self.metrics = MetricsCollector()
        self.graph = scenario.graph
        self.network = NetworkModel(scenario.network, seed)
        self.blocked: set[tuple[int, int]] = set()
        self._queue: list[tuple[int, int, tuple]] = []
        self._seq = 0
        self._rngs: dict[str, random.Random] = {}
        self._deferred: dict[str, list[tuple]] = {}

        lim = scenario.limits
        self.servers = {
            s.id: EdgeServer(s.id, self.graph, s.p_workers, s.cache_capacity, use_cache,
                             s.compute_latency, lim.confirm_timeout, engine_mode)
            for s in scenario.servers
        }
        self.sas = {
            s.config.sas_id: SurveillanceSystem(s.config, scenario.required_types)
            for s in scenario.sas
        }
        self.services = {}
        for v in self.graph.services():
            svc = InterventionService(scenario.policies[v], lim.ack_timeout, lim.reroute_timeout,
                                      lim.max_retransmits)
            self.services[svc.id] = svc
        self.actors: dict[str, Any] = {**self.servers, **self.sas, **self.services}
        self._schedule_scenario()

    # -- scheduling ----------------------------------------------------------

    def _push(self, time: int, event: tuple) -> None:
        heapq.heappush(self._queue, (time, self._seq, event))
        self._seq += 1

    def _schedule_scenario(self) -> None:
        sc = self.scenario
        for s in sc.servers:
            for start, end in s.outages:
                self.inject_fault(("outage", s.id, False), start)
                if end is not None:
                    self.inject_fault(("outage", s.id, True), end)
        for gu in sc.graph_updates:
            self.inject_fault(("graph_update", gu.edits), gu.time)
        for b in sc.blocks:
            self.inject_fault(("block", edge_key(b.u, b.v), True), b.time)
            if b.until is not None:
                self.inject_fault(("block", edge_key(b.u, b.v), False), b.until)
        for s in sc.sas:
            batches: dict[int, list] = {}
            for r in s.readings:
                batches.setdefault(r.timestamp, []).append(r)
            for t in sorted(batches):
                self._push(t, ("sensor", s.config.sas_id, tuple(batches[t])))
        for r in sc.requests:
            self._push(r.time, ("request", r))

    def inject_fault(self, entry: tuple, time: int) -> None:
        """Queue an outage, edge block/unblock or graph update at ``time``."""
        kind = entry[0]
        if kind == "outage" and entry[1] not in self.servers:
            raise ValueError(f"unknown server {entry[1]}")
        if kind == "block":
            u, v = entry[1]
            if not (0 <= u < self.graph.n and 0 <= v < self.graph.n) or u == v:
                raise ValueError(f"invalid edge {entry[1]}")
        if kind not in ("outage", "block", "graph_update"):
            raise ValueError(f"unknown fault kind {kind}")
        self._push(time, entry)

    # -- context API used by actors -----------------------------------------

    def log(self, ev: str, **fields) -> None:
        rec = {"t": self.now, "ev": ev, **fields}
        self.trace.append(json.dumps(rec, separators=(",", ":")))

    def send(self, msg: Message) -> None:
        msg = msg.stamped(self.now)
        self.metrics.on_send()
        self.log("send", msg=msg.to_record())
        outcome = self.network.deliver(msg, self.now)
        if isinstance(outcome, Drop):
            self._drop(msg, outcome.reason)
        else:
            self._push(outcome.time, ("deliver", msg))

    def _drop(self, msg: Message, reason: str) -> None:
        self.metrics.on_drop()
        self.log("drop", kind=msg.kind, sender=msg.sender, receiver=msg.receiver,
                 incident=msg.incident_id, reason=reason)

    def set_timer(self, actor: str, delay: int, kind: str, **payload) -> None:
        self._push(self.now + delay, ("timer", actor, kind, payload))

    def rng(self, actor: str) -> random.Random:
        r = self._rngs.get(actor)
        if r is None:
            r = self._rngs[actor] = substream(self.seed, actor)
        return r

    def blocked_edges(self) -> set[tuple[int, int]]:
        return self.blocked

    # -- main loop -------------------------------------------------------------

    def run(self) -> RunResult:
        horizon = self.scenario.limits.horizon
        while self._queue:
            time, _, event = heapq.heappop(self._queue)
            if time > horizon:
                self.now = horizon
                self.log("horizon", pending=len(self._queue) + 1)
                break
            self.now = time
            self._handle(event)
        return RunResult(self.metrics.to_dict(), self.trace, self)

    def _handle(self, event: tuple) -> None:
        kind = event[0]
        if kind == "deliver":
            msg = event[1]
            actor = self.actors.get(msg.receiver)
            if actor is None:
                self._drop(msg, "no_receiver")
            elif not getattr(actor, "online", True):
                self._drop(msg, "offline")
            else:
                self.metrics.on_deliver()
                self.log("deliver", kind=msg.kind, sender=msg.sender, receiver=msg.receiver,
                         incident=msg.incident_id)
                actor.on_message(msg, self)
        elif kind == "timer":
            _, name, tkind, payload = event
            actor = self.actors[name]
            if not getattr(actor, "online", True):
                self._deferred.setdefault(name, []).append(event)
                return
            self.log("timer", actor=name, timer=tkind)
            actor.on_timer(tkind, payload, self)
        elif kind == "sensor":
            _, sid, readings = event
            self.log("sensor_batch", actor=sid, readings=len(readings),
                     hazards=sorted({r.hazard_type for r in readings}))
            self.sas[sid].on_sensor_batch(readings, self)
        elif kind == "outage":
            _, sid, online = event
            server = self.servers[sid]
            server.online = online
            self.log("server_online" if online else "server_offline", actor=sid)
            if online:
                for ev in self._deferred.pop(sid, []):
                    self._push(self.now, ev)
        elif kind == "block":
            _, key, on = event
            if on:
                self.blocked.add(key)
            else:
                self.blocked.discard(key)
            self.log("edge_blocked" if on else "edge_unblocked", edge=list(key))
        elif kind == "graph_update":
            self.graph = update_graph(self.graph, event[1])
            self.log("graph_update", version=self.graph.version, edits=len(event[1]))
            for server in self.servers.values():
                server.apply_graph(self.graph, self)
        elif kind == "request":
            self._resource_request(event[1])
        else:  # pragma: no cover
            raise ValueError(f"unknown event {kind}")

    def _resource_request(self, req) -> None:
        for server in self.servers.values():
            for iid, inc in server.incidents.items():
                if inc.location == req.location:
                    self.send(ResourceRequest(incident_id=iid, sender=site_actor(req.site),
                                              receiver=server.id, requested_type=req.service_type,
                                              site=req.site))
                    return
        self.log("unknown_incident", location=req.location, requested_type=req.service_type)


def run_scenario(scenario: Scenario | str | Path, seed: int = 0, use_cache: bool = True,
                 engine_mode: str = "lockstep") -> RunResult:
    if not isinstance(scenario, Scenario):
        scenario = load_scenario_file(scenario)
    return Simulation(scenario, seed, use_cache, engine_mode).run()


def write_outputs(result: RunResult, metrics_path: str | Path | None,
                  trace_path: str | Path | None) -> None:
    if trace_path is not None:
        Path(trace_path).write_text(result.trace_text, encoding="utf-8")
    if metrics_path is not None:
        Path(metrics_path).write_text(json.dumps(result.metrics, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
