"""Scenario files (JSON): schema, validation and conversion to typed specs.

All durations and timestamps in a scenario are decimal time units; they
are converted to integer milli-unit ticks, the same unit as edge weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .graph import CityGraph, EdgeEdit, GraphError, RoleKind, generate_city, load_graph, to_cost
from .messages import Severity, service_actor
from .responder import ServicePolicy
from .sas import SasConfig, SensorReading


class ScenarioError(ValueError):
    pass


_time = {"type": "number", "minimum": 0}
_pos_time = {"type": "number", "exclusiveMinimum": 0}
_node = {"type": "integer", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["graph", "servers"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "file": {"type": "string"},
                "text": {"type": "string"},
                "generate": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n", "density", "services"],
                    "properties": {
                        "n": {"type": "integer", "minimum": 1},
                        "density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "services": {"type": "object",
                                     "additionalProperties": {"type": "integer", "minimum": 0}},
                        "seed": {"type": "integer"},
                    },
                },
            },
            "oneOf": [{"required": ["file"]}, {"required": ["text"]}, {"required": ["generate"]}],
        },
        "servers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "p_workers": {"type": "integer", "minimum": 1},
                    "cache_capacity": {"type": "integer", "minimum": 1},
                    "compute_latency": _time,
                    "outages": {
                        "type": "array",
                        "items": {
                            "type": "array", "minItems": 2, "maxItems": 2,
                            "prefixItems": [_time, {"anyOf": [_time, {"type": "null"}]}],
                        },
                    },
                },
            },
        },
        "sas": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "location", "servers"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "location": _node,
                    "threshold": {"type": "number", "exclusiveMinimum": 0},
                    "servers": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                    "ping_timeout": _pos_time,
                    "alert_ack_timeout": _pos_time,
                    "max_retries": {"type": "integer", "minimum": 1},
                    "dedup_window": _time,
                    "readings": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["time", "hazard", "magnitude"],
                            "properties": {
                                "time": _time,
                                "sensor": {"type": "string"},
                                "hazard": {"type": "string", "minLength": 1},
                                "magnitude": {"type": "number", "minimum": 0},
                            },
                        },
                    },
                },
            },
        },
        "hazards": {
            "type": "object",
            "additionalProperties": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        },
        "services": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["node"],
                "properties": {
                    "node": _node,
                    "accept_probability": {
                        "anyOf": [
                            _prob,
                            {"type": "object", "additionalProperties": False,
                             "properties": {s.value: _prob for s in Severity}},
                        ],
                    },
                    "local_compute": {"type": "boolean"},
                    "decision_latency": _time,
                    "service_duration": _time,
                },
            },
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "latency": _pos_time,
                "drop_probability": _prob,
                "links": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["a", "b", "latency"],
                        "properties": {"a": {"type": "string"}, "b": {"type": "string"},
                                       "latency": _pos_time},
                    },
                },
            },
        },
        "faults": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "blocks": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["time", "u", "v"],
                        "properties": {"time": _time, "u": _node, "v": _node,
                                       "until": {"anyOf": [_time, {"type": "null"}]}},
                    },
                },
                "graph_updates": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["time", "edits"],
                        "properties": {
                            "time": _time,
                            "edits": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "additionalProperties": False,
                                    "required": ["u", "v"],
                                    "properties": {
                                        "u": _node, "v": _node,
                                        "weight": {"anyOf": [_time, {"type": "null"}]},
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
        "requests": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["time", "location", "type"],
                "properties": {"time": _time, "location": _node, "type": {"type": "string"},
                               "site": _node},
            },
        },
        "limits": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "confirm_timeout": _pos_time,
                "ack_timeout": _pos_time,
                "reroute_timeout": _pos_time,
                "horizon": _pos_time,
                "max_retransmits": {"type": "integer", "minimum": 1},
            },
        },
    },
}


@dataclass(frozen=True)
class ServerSpec:
    id: str
    p_workers: int = 4
    cache_capacity: int = 1024
    compute_latency: int = 1000
    outages: tuple[tuple[int, int | None], ...] = ()


@dataclass(frozen=True)
class SasSpec:
    config: SasConfig
    readings: tuple[SensorReading, ...]


@dataclass(frozen=True)
class NetworkSpec:
    latency: int = 1000
    drop_probability: float = 0.0
    links: dict[frozenset[str], int] = field(default_factory=dict)


@dataclass(frozen=True)
class BlockSpec:
    time: int
    u: int
    v: int
    until: int | None = None


@dataclass(frozen=True)
class GraphUpdateSpec:
    time: int
    edits: tuple[EdgeEdit, ...]


@dataclass(frozen=True)
class RequestSpec:
    time: int
    location: int
    service_type: str
    site: int


@dataclass(frozen=True)
class Limits:
    confirm_timeout: int = 30000
    ack_timeout: int = 20000
    reroute_timeout: int = 10000
    horizon: int = 1_000_000_000
    max_retransmits: int = 10


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: CityGraph
    servers: tuple[ServerSpec, ...]
    sas: tuple[SasSpec, ...]
    policies: dict[int, ServicePolicy]
    hazards: dict[str, tuple[str, ...]]
    network: NetworkSpec = NetworkSpec()
    blocks: tuple[BlockSpec, ...] = ()
    graph_updates: tuple[GraphUpdateSpec, ...] = ()
    requests: tuple[RequestSpec, ...] = ()
    limits: Limits = Limits()

    def required_types(self, hazard: str) -> tuple[str, ...]:
        return self.hazards.get(hazard, (hazard,))


def builtin_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("edgeroute.data").iterdir()
                  if p.name.endswith(".json"))


def resolve_scenario_path(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    if name_or_path in builtin_scenarios():
        return Path(str(resources.files("edgeroute.data") / f"{name_or_path}.json"))
    raise ScenarioError(f"no such scenario file or built-in scenario: {name_or_path}")


def load_scenario_file(path: str | Path) -> Scenario:
    path = resolve_scenario_path(str(path))
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return parse_scenario(data, base_dir=path.parent, source=str(path), text=text)


def _locate(text: str | None, path) -> str:
    """Best-effort ``:line`` of the object keys in ``path`` within ``text``."""
    if not text:
        return ""
    pos = found = -1
    for key in path:
        if isinstance(key, str):
            idx = text.find(json.dumps(key), pos + 1)
            if idx < 0:
                break
            pos = found = idx
    if found < 0:
        return ":1"
    return f":{text.count(chr(10), 0, found) + 1}"


def parse_scenario(data: dict, base_dir: Path | None = None, source: str = "<scenario>",
                   text: str | None = None) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(f"{source}{_locate(text, list(e.absolute_path))}: schema violation at "
                            f"{where}: {e.message}")
    try:
        return _build(data, base_dir or Path("."), source)
    except GraphError as exc:
        raise ScenarioError(f"{source}: graph: {exc}") from None


def _build(data: dict, base_dir: Path, source: str) -> Scenario:
    def fail(msg: str):
        raise ScenarioError(f"{source}: {msg}")

    g = data["graph"]
    if "file" in g:
        gpath = base_dir / g["file"]
        if not gpath.exists():
            fail(f"graph file not found: {gpath}")
        graph = load_graph(gpath.read_text(encoding="utf-8"))
    elif "text" in g:
        graph = load_graph(g["text"])
    else:
        gen = g["generate"]
        graph = generate_city(gen["n"], gen["density"], gen["services"], gen.get("seed", 0))
    n = graph.n

    servers = []
    for s in data["servers"]:
        outages = tuple((to_cost(a), None if b is None else to_cost(b)) for a, b in s.get("outages", []))
        for a, b in outages:
            if b is not None and b < a:
                fail(f"server {s['id']}: outage ends before it starts")
        servers.append(ServerSpec(s["id"], s.get("p_workers", 4), s.get("cache_capacity", 1024),
                                  to_cost(s.get("compute_latency", 1)), outages))
    server_ids = [s.id for s in servers]
    if len(set(server_ids)) != len(server_ids):
        fail("duplicate server id")

    hazards = {h: tuple(ts) for h, ts in data.get("hazards", {}).items()}
    known_types = graph.service_types

    sas_specs = []
    for s in data.get("sas", []):
        sid = s["id"]
        if sid in server_ids:
            fail(f"SAS id {sid} collides with a server id")
        loc = s["location"]
        if loc >= n:
            fail(f"SAS {sid}: location {loc} is not a node")
        if graph.role(loc).kind is not RoleKind.SURVEILLANCE:
            fail(f"SAS {sid}: node {loc} is not a surveillance point")
        for srv in s["servers"]:
            if srv not in server_ids:
                fail(f"SAS {sid}: undefined server {srv}")
        cfg = SasConfig(
            sas_id=sid, location=loc, detection_threshold=float(s.get("threshold", 1.0)),
            server_list=tuple(s["servers"]), ping_timeout=to_cost(s.get("ping_timeout", 5)),
            max_retries=s.get("max_retries", 3), dedup_window=to_cost(s.get("dedup_window", 10)),
            alert_ack_timeout=to_cost(s["alert_ack_timeout"]) if "alert_ack_timeout" in s else None,
        )
        readings = []
        for i, r in enumerate(s.get("readings", [])):
            for t in hazards.get(r["hazard"], (r["hazard"],)):
                if t not in known_types:
                    fail(f"SAS {sid}: hazard {r['hazard']!r} needs service type {t!r}, "
                         f"which has no service node")
            readings.append(SensorReading(sid, r.get("sensor", f"{sid}.s{i}"), loc, r["hazard"],
                                          float(r["magnitude"]), to_cost(r["time"])))
        sas_specs.append(SasSpec(cfg, tuple(readings)))
    if len({s.config.sas_id for s in sas_specs}) != len(sas_specs):
        fail("duplicate SAS id")

    policies: dict[int, ServicePolicy] = {}
    for v in graph.services():
        policies[v] = ServicePolicy(v)
    for s in data.get("services", []):
        v = s["node"]
        if v >= n or graph.role(v).kind is not RoleKind.SERVICE:
            fail(f"services: node {v} is not an intervention service")
        ap = s.get("accept_probability", 1.0)
        probs = ({sev: float(ap) for sev in Severity} if not isinstance(ap, dict)
                 else {sev: float(ap.get(sev.value, 1.0)) for sev in Severity})
        policies[v] = ServicePolicy(
            v, probs, s.get("local_compute", True), to_cost(s.get("decision_latency", 1)),
            to_cost(s.get("service_duration", 5)),
        )

    net = data.get("network", {})
    actors = set(server_ids) | {s.config.sas_id for s in sas_specs} | {
        service_actor(v) for v in graph.services()}
    links = {}
    for link in net.get("links", []):
        for a in (link["a"], link["b"]):
            if a not in actors and not a.startswith("site:"):
                fail(f"network link references unknown actor {a}")
        links[frozenset((link["a"], link["b"]))] = to_cost(link["latency"])
    network = NetworkSpec(to_cost(net.get("latency", 1)), float(net.get("drop_probability", 0.0)),
                          links)

    faults = data.get("faults", {})
    blocks = []
    for b in faults.get("blocks", []):
        if b["u"] >= n or b["v"] >= n or b["u"] == b["v"]:
            fail(f"block on invalid edge ({b['u']},{b['v']})")
        until = b.get("until")
        blocks.append(BlockSpec(to_cost(b["time"]), b["u"], b["v"],
                                None if until is None else to_cost(until)))
    updates = []
    for gu in faults.get("graph_updates", []):
        edits = []
        for e in gu["edits"]:
            if e["u"] >= n or e["v"] >= n or e["u"] == e["v"]:
                fail(f"graph update on invalid edge ({e['u']},{e['v']})")
            w = e.get("weight")
            edits.append(EdgeEdit(e["u"], e["v"], None if w is None else to_cost(w)))
        updates.append(GraphUpdateSpec(to_cost(gu["time"]), tuple(edits)))

    requests = []
    for r in data.get("requests", []):
        site = r.get("site", r["location"])
        if r["location"] >= n or site >= n:
            fail("request references unknown node")
        if r["type"] not in known_types:
            fail(f"request for service type {r['type']!r}, which has no service node")
        requests.append(RequestSpec(to_cost(r["time"]), r["location"], r["type"], site))

    lim = data.get("limits", {})
    limits = Limits(
        confirm_timeout=to_cost(lim.get("confirm_timeout", 30)),
        ack_timeout=to_cost(lim.get("ack_timeout", 20)),
        reroute_timeout=to_cost(lim.get("reroute_timeout", 10)),
        horizon=to_cost(lim.get("horizon", 1_000_000)),
        max_retransmits=lim.get("max_retransmits", 10),
    )
    return Scenario(
        name=data.get("name", source), graph=graph, servers=tuple(servers), sas=tuple(sas_specs),
        policies=policies, hazards=hazards, network=network, blocks=tuple(blocks),
        graph_updates=tuple(updates), requests=tuple(requests), limits=limits,
    )
