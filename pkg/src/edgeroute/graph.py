"""City graph: adjacency-matrix world model, node roles, partitioning.

Travel costs are stored as non-negative integers in milli-units (the text
format uses decimal time units, scaled by :data:`SCALE` at load) so that
path sums compare exactly.  Missing edges hold the :data:`NO_EDGE` sentinel.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

SCALE = 1000
NO_EDGE = -1
MAX_WEIGHT = np.iinfo(np.int32).max
WEIGHT_DTYPE = np.int32


class GraphError(ValueError):
    """Base class for graph validation problems."""


class GraphParseError(GraphError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line.strip()!r}")
        self.lineno = lineno


class RoleKind(str, enum.Enum):
    SURVEILLANCE = "surveillance"
    SERVICE = "service"
    LANDMARK = "landmark"


@dataclass(frozen=True)
class NodeRole:
    kind: RoleKind
    service_type: str | None = None

    def __post_init__(self):
        if (self.kind is RoleKind.SERVICE) != (self.service_type is not None):
            raise GraphError("service_type is required exactly for service nodes")

    @classmethod
    def parse(cls, text: str) -> "NodeRole":
        if text == "surveillance":
            return cls(RoleKind.SURVEILLANCE)
        if text == "landmark":
            return cls(RoleKind.LANDMARK)
        if text.startswith("service:") and len(text) > len("service:"):
            return cls(RoleKind.SERVICE, text[len("service:"):])
        raise GraphError(f"unknown role {text!r}")

    def __str__(self) -> str:
        if self.kind is RoleKind.SERVICE:
            return f"service:{self.service_type}"
        return self.kind.value


LANDMARK = NodeRole(RoleKind.LANDMARK)
SURVEILLANCE = NodeRole(RoleKind.SURVEILLANCE)


def to_cost(value) -> int:
    """Convert a decimal time value (str/int/float) to integer milli-units."""
    try:
        d = Decimal(str(value)) * SCALE
    except InvalidOperation as exc:
        raise GraphError(f"not a number: {value!r}") from exc
    if d != d.to_integral_value():
        raise GraphError(f"{value!r} has more than 3 decimal places")
    return int(d)


def format_cost(cost: int) -> str:
    whole, frac = divmod(int(cost), SCALE)
    if frac == 0:
        return str(whole)
    return f"{whole}.{frac:03d}".rstrip("0")


@dataclass(frozen=True, eq=False)
class CityGraph:
    """Immutable undirected weighted graph held as an n x n matrix."""

    weights: np.ndarray
    roles: tuple[NodeRole, ...]
    version: int = 0

    def __post_init__(self):
        w = self.weights
        n = w.shape[0]
        if w.ndim != 2 or w.shape != (n, n):
            raise GraphError("weight matrix must be square")
        if len(self.roles) != n:
            raise GraphError("one role per node required")
        if n == 0:
            raise GraphError("graph needs at least one node")
        if not np.all(np.diagonal(w) == 0):
            raise GraphError("diagonal must be zero")
        if np.any(w < NO_EDGE):
            raise GraphError("negative weight")
        if not np.array_equal(w, w.T):
            raise GraphError("weights must be symmetric")
        if w.dtype != WEIGHT_DTYPE or w.flags.writeable:
            w = np.array(w, dtype=WEIGHT_DTYPE)
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def has_edge(self, u: int, v: int) -> bool:
        return u != v and self.weights[u, v] != NO_EDGE

    def weight(self, u: int, v: int) -> int:
        w = int(self.weights[u, v])
        if w == NO_EDGE:
            raise KeyError((u, v))
        return w

    def edges(self) -> list[tuple[int, int, int]]:
        """Undirected edges as (u, v, w) with u < v, in index order."""
        us, vs = np.nonzero(np.triu(self.weights != NO_EDGE, k=1))
        return [(int(u), int(v), int(self.weights[u, v])) for u, v in zip(us, vs)]

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Adjacency lists ((v, w), ...) per vertex, ascending v."""
        adj = []
        for u in range(self.n):
            row = self.weights[u]
            vs = np.nonzero(row != NO_EDGE)[0]
            adj.append(tuple((int(v), int(row[v])) for v in vs if v != u))
        return tuple(adj)

    def role(self, v: int) -> NodeRole:
        return self.roles[v]

    def services(self, service_type: str | None = None) -> list[int]:
        return [
            v for v, r in enumerate(self.roles)
            if r.kind is RoleKind.SERVICE
            and (service_type is None or r.service_type == service_type)
        ]

    @property
    def service_types(self) -> set[str]:
        return {r.service_type for r in self.roles if r.kind is RoleKind.SERVICE}

    def surveillance_points(self) -> list[int]:
        return [v for v, r in enumerate(self.roles) if r.kind is RoleKind.SURVEILLANCE]

    def path_cost(self, path: Sequence[int]) -> int:
        """Sum of edge weights along ``path``; KeyError on a missing edge."""
        return sum(self.weight(a, b) for a, b in zip(path, path[1:]))

    def without_edges(self, removed: Iterable[tuple[int, int]]) -> "CityGraph":
        """Copy with the given undirected edges removed; version unchanged."""
        w = np.array(self.weights)
        for u, v in removed:
            w[u, v] = w[v, u] = NO_EDGE
        return CityGraph(w, self.roles, self.version)

    def to_text(self) -> str:
        lines = [f"graph {self.n}"]
        lines += [f"node {v} {r}" for v, r in enumerate(self.roles)]
        lines += [f"edge {u} {v} {format_cost(w)}" for u, v, w in self.edges()]
        return "\n".join(lines) + "\n"


def load_graph(source: str) -> CityGraph:
    """Parse the line-oriented graph text format.

    Raises GraphParseError for malformed lines and GraphError for
    semantic problems (negative weight, conflicting duplicate edge, role on
    an unknown node, self-loop).
    """
    n = None
    weights = None
    roles: list[NodeRole] = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        head = parts[0]
        if n is None:
            if head != "graph" or len(parts) != 2:
                raise GraphParseError(lineno, raw, "expected 'graph <n>' header")
            try:
                n = int(parts[1])
            except ValueError:
                raise GraphParseError(lineno, raw, "vertex count is not an integer") from None
            if n < 1:
                raise GraphParseError(lineno, raw, "vertex count must be positive")
            weights = np.full((n, n), NO_EDGE, dtype=np.int64)
            np.fill_diagonal(weights, 0)
            roles = [LANDMARK] * n
            continue
        if head == "node" and len(parts) == 3:
            v = _parse_index(lineno, raw, parts[1], n)
            try:
                roles[v] = NodeRole.parse(parts[2])
            except GraphError as exc:
                raise GraphParseError(lineno, raw, str(exc)) from None
        elif head == "edge" and len(parts) == 4:
            u = _parse_index(lineno, raw, parts[1], n)
            v = _parse_index(lineno, raw, parts[2], n)
            try:
                w = to_cost(parts[3])
            except GraphError as exc:
                raise GraphParseError(lineno, raw, str(exc)) from None
            if u == v:
                raise GraphError(f"line {lineno}: self-loop on node {u}")
            if w < 0:
                raise GraphError(f"line {lineno}: negative weight {parts[3]}")
            if w > MAX_WEIGHT:
                raise GraphError(f"line {lineno}: weight {parts[3]} too large")
            old = weights[u, v]
            if old != NO_EDGE and old != w:
                raise GraphError(f"line {lineno}: edge ({u},{v}) redefined with a different weight")
            weights[u, v] = weights[v, u] = w
        else:
            raise GraphParseError(lineno, raw, "unrecognised line")
    if n is None:
        raise GraphParseError(0, "", "missing 'graph <n>' header")
    return CityGraph(weights, tuple(roles), version=0)


def _parse_index(lineno: int, raw: str, text: str, n: int) -> int:
    try:
        v = int(text)
    except ValueError:
        raise GraphParseError(lineno, raw, f"bad node id {text!r}") from None
    if not 0 <= v < n:
        raise GraphError(f"line {lineno}: node {v} outside [0, {n})")
    return v


@dataclass(frozen=True)
class EdgeEdit:
    """Set edge (u, v) to ``weight`` (milli-units); ``None`` removes it."""

    u: int
    v: int
    weight: int | None


def update_graph(graph: CityGraph, edits: Iterable[EdgeEdit]) -> CityGraph:
    w = np.array(graph.weights, dtype=np.int64)
    for e in edits:
        if not (0 <= e.u < graph.n and 0 <= e.v < graph.n) or e.u == e.v:
            raise GraphError(f"invalid edge ({e.u},{e.v})")
        if e.weight is None:
            w[e.u, e.v] = w[e.v, e.u] = NO_EDGE
        else:
            if e.weight < 0:
                raise GraphError(f"negative weight on ({e.u},{e.v})")
            if e.weight > MAX_WEIGHT:
                raise GraphError(f"weight on ({e.u},{e.v}) too large")
            w[e.u, e.v] = w[e.v, e.u] = e.weight
    return CityGraph(w, graph.roles, graph.version + 1)


@dataclass(frozen=True)
class Partition:
    """Contiguous near-equal vertex blocks, one per worker.

    The first ``n % p`` blocks hold one extra vertex.
    """

    n: int
    p: int
    blocks: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        if not 1 <= self.p <= self.n:
            raise GraphError(f"worker count must be in [1, {self.n}], got {self.p}")
        q, r = divmod(self.n, self.p)
        blocks, lo = [], 0
        for i in range(self.p):
            hi = lo + q + (1 if i < r else 0)
            blocks.append((lo, hi))
            lo = hi
        object.__setattr__(self, "blocks", tuple(blocks))

    def owner(self, v: int) -> int:
        if not 0 <= v < self.n:
            raise IndexError(v)
        q, r = divmod(self.n, self.p)
        big = r * (q + 1)
        if v < big:
            return v // (q + 1)
        return r + (v - big) // q


def partition(graph: CityGraph, p: int) -> Partition:
    return Partition(graph.n, p)


def generate_city(
    n: int,
    density: float,
    service_counts: Mapping[str, int],
    seed: int,
    surveillance_fraction: float = 0.2,
    max_weight: float = 20.0,
) -> CityGraph:
    """Random connected city: a random spanning tree plus Bernoulli(density) extra edges.

    Weights are uniform in [1, max_weight] time units at milli resolution.
    Services are placed on random distinct nodes; at least one surveillance
    point is always designated.
    """
    if n < 1:
        raise GraphError("n must be positive")
    if not 0 < density <= 1:
        raise GraphError("density must be in (0, 1]")
    if any(c < 0 for c in service_counts.values()):
        raise GraphError("service counts must be non-negative")
    n_services = sum(service_counts.values())
    if n_services + 1 > n:
        raise GraphError(f"{n_services} services plus one surveillance point exceed {n} nodes")

    rng = np.random.default_rng(seed)
    lo, hi = SCALE, int(max_weight * SCALE)
    adj = np.triu(rng.random((n, n), dtype=np.float32) < density, k=1)
    order = rng.permutation(n)
    if n > 1:
        parents = order[(rng.random(n - 1) * np.arange(1, n)).astype(np.int64)]
        a, b = np.minimum(order[1:], parents), np.maximum(order[1:], parents)
        adj[a, b] = True
    w = np.where(adj, rng.integers(lo, hi + 1, size=(n, n), dtype=np.int32), NO_EDGE)
    w = np.where(adj, w, w.T)
    np.fill_diagonal(w, 0)

    nodes = rng.permutation(n)
    roles = [LANDMARK] * n
    k = 0
    for stype in sorted(service_counts):
        for _ in range(service_counts[stype]):
            roles[nodes[k]] = NodeRole(RoleKind.SERVICE, stype)
            k += 1
    n_surv = max(1, min(n - n_services, round(surveillance_fraction * n)))
    for v in nodes[k:k + n_surv]:
        roles[v] = SURVEILLANCE
    return CityGraph(w, tuple(roles), version=0)


def is_connected(graph: CityGraph) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v, _ in graph.neighbors[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == graph.n
