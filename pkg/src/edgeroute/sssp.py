"""Single-source shortest paths over a :class:`CityGraph`.

Two engines share one result type:

* :func:`dijkstra_sequential` -- binary-heap Dijkstra over adjacency lists.
* :func:`dijkstra_parallel` -- ``p`` workers, each owning a contiguous vertex
  block and the matching column block of the weight matrix.  Every iteration
  the workers report their local frontier minimum, worker 0 reduces them to
  the global minimum ``u`` and broadcasts it, the owner settles ``u`` and all
  workers relax their unsettled vertices against ``(u, d[u])``.

Ties between equal distances always go to the lowest vertex id, so both
engines settle vertices in the same order and produce identical ``dist``
and ``pred`` arrays.
"""

from __future__ import annotations

import heapq
import threading
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .graph import NO_EDGE, CityGraph, Partition

INF = int(np.iinfo(np.int64).max)
NO_PRED = -1


class EngineError(ValueError):
    pass


class VersionMismatch(EngineError):
    pass


@dataclass(frozen=True, eq=False)
class SsspResult:
    source: int
    dist: np.ndarray
    pred: np.ndarray
    graph_version: int
    settle_order: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.dist)

    def reachable(self, v: int) -> bool:
        return int(self.dist[v]) != INF

    def cost(self, v: int) -> int | None:
        d = int(self.dist[v])
        return None if d == INF else d


class FrontierCandidate(NamedTuple):
    vertex: int | None
    distance: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.distance, -1 if self.vertex is None else self.vertex)


NO_CANDIDATE = FrontierCandidate(None, INF)


def _check_source(graph: CityGraph, s: int) -> None:
    if not 0 <= s < graph.n:
        raise EngineError(f"source {s} outside [0, {graph.n})")


def dijkstra_sequential(graph: CityGraph, s: int) -> SsspResult:
    _check_source(graph, s)
    n = graph.n
    adj = graph.neighbors
    dist = [INF] * n
    pred = [NO_PRED] * n
    done = [False] * n
    order = []
    dist[s] = 0
    heap = [(0, s)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u] or d != dist[u]:
            continue
        done[u] = True
        order.append(u)
        for v, w in adj[u]:
            nd = d + w
            if not done[v] and nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return SsspResult(
        s, np.array(dist, dtype=np.int64), np.array(pred, dtype=np.int64),
        graph.version, tuple(order),
    )


class WorkerView:
    """One worker's slice of the problem: owned vertices [lo, hi)."""

    def __init__(self, index: int, lo: int, hi: int, weights: np.ndarray, source: int):
        self.index = index
        self.lo, self.hi = lo, hi
        # column block: cols[u, k] = w(u, lo + k); rows are contiguous
        self.cols = weights[:, lo:hi]
        first = self.cols[source].astype(np.int64)
        edge = first != NO_EDGE
        self.dist = np.where(edge, first, INF)
        self.pred = np.where(edge, source, NO_PRED).astype(np.int64)
        if lo <= source < hi:
            self.dist[source - lo] = 0
            self.pred[source - lo] = NO_PRED
        self.settled = np.zeros(hi - lo, dtype=bool)
        self.open = self.dist.copy()  # INF for settled vertices
        self._edge = self.cols != NO_EDGE
        self._touches = self._edge.any(axis=1)  # row u has a neighbour in this block
        self._unsettled = np.ones(hi - lo, dtype=bool)
        self._best: FrontierCandidate | None = None  # cached local_min, None when stale

    def local_min(self) -> FrontierCandidate:
        if self._best is None:
            self._best = self._scan()
        return self._best

    def _scan(self) -> FrontierCandidate:
        if self.hi == self.lo:
            return NO_CANDIDATE
        i = int(np.argmin(self.open))  # first index on ties = lowest vertex id
        d = int(self.open[i])
        if d == INF:
            return NO_CANDIDATE
        return FrontierCandidate(self.lo + i, d)

    def settle(self, u: int) -> None:
        if self.lo <= u < self.hi:
            self.settled[u - self.lo] = True
            self._unsettled[u - self.lo] = False
            self.open[u - self.lo] = INF
            self._best = None

    def relax(self, u: int, du: int) -> None:
        if not self._touches[u]:
            return
        cand = np.add(self.cols[u], du, dtype=np.int64)
        mask = self._edge[u] & self._unsettled
        mask &= cand < self.open
        idx = np.flatnonzero(mask)
        if idx.size:
            better = cand[idx]
            self.dist[idx] = better
            self.open[idx] = better
            self.pred[idx] = u
            self._best = None


def reduce_candidates(cands: Iterable[FrontierCandidate]) -> FrontierCandidate:
    best = NO_CANDIDATE
    for c in cands:
        if c.vertex is not None and (best.vertex is None or c.key < best.key):
            best = c
    return best


def dijkstra_parallel(graph: CityGraph, s: int, p: int, mode: str = "lockstep") -> SsspResult:
    """Partitioned Dijkstra with ``p`` workers.

    ``mode="lockstep"`` drives the workers round-robin in one thread;
    ``mode="threads"`` runs one thread per worker separated by barriers.
    Both yield identical results.
    """
    _check_source(graph, s)
    if not 1 <= p <= graph.n:
        raise EngineError(f"worker count must be in [1, {graph.n}], got {p}")
    part = Partition(graph.n, p)
    workers = [WorkerView(i, lo, hi, graph.weights, s) for i, (lo, hi) in enumerate(part.blocks)]
    if mode == "lockstep":
        order = _run_lockstep(workers, s)
    elif mode == "threads":
        order = _run_threads(workers, s)
    else:
        raise EngineError(f"unknown mode {mode!r}")
    dist = np.concatenate([w.dist for w in workers])
    pred = np.concatenate([w.pred for w in workers])
    return SsspResult(s, dist, pred, graph.version, tuple(order))


def _run_lockstep(workers: list[WorkerView], s: int) -> list[int]:
    order = []
    # the source is the first global minimum by construction (d = 0)
    u, du = s, 0
    while u is not None:
        order.append(u)
        for w in workers:
            w.settle(u)
        for w in workers:
            w.relax(u, du)
        best = reduce_candidates([w.local_min() for w in workers])
        u, du = best.vertex, best.distance
    return order


def _run_threads(workers: list[WorkerView], s: int) -> list[int]:
    p = len(workers)
    barrier = threading.Barrier(p)
    cands: list[FrontierCandidate] = [NO_CANDIDATE] * p
    shared = {"u": s, "du": 0}
    order: list[int] = []
    errors: list[BaseException] = []

    def run(i: int) -> None:
        w = workers[i]
        try:
            while True:
                u, du = shared["u"], shared["du"]
                if u is None:
                    return
                w.settle(u)
                w.relax(u, du)
                cands[i] = w.local_min()
                barrier.wait()
                if i == 0:
                    order.append(u)
                    best = reduce_candidates(cands)
                    shared["u"], shared["du"] = best.vertex, best.distance
                barrier.wait()
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:  # noqa: BLE001 - re-raised in caller
            errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=run, args=(i,), daemon=True) for i in range(1, p)]
    for t in threads:
        t.start()
    run(0)
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return order


def extract_path(result: SsspResult, target: int) -> list[int]:
    """Vertices from the source to ``target``; empty if unreachable."""
    if not 0 <= target < result.n:
        raise EngineError(f"target {target} outside [0, {result.n})")
    if not result.reachable(target):
        return []
    path = [target]
    v = target
    while v != result.source:
        v = int(result.pred[v])
        if v == NO_PRED or len(path) > result.n:
            raise EngineError("predecessor chain is broken")
        path.append(v)
    path.reverse()
    return path


@dataclass(frozen=True)
class RankedService:
    node: int
    service_type: str
    cost: int
    path: tuple[int, ...]  # service node -> source


def rank_services(
    result: SsspResult, graph: CityGraph, required_types: Iterable[str]
) -> list[RankedService]:
    """Reachable services of each required type, nearest first.

    Types appear in sorted order; within a type, ties on cost go to the
    lower node id.  Types with no reachable service contribute nothing.
    """
    if result.graph_version != graph.version:
        raise VersionMismatch(
            f"result computed on version {result.graph_version}, graph is {graph.version}"
        )
    ranked = []
    for stype in sorted(set(required_types)):
        found = [(int(result.dist[v]), v) for v in graph.services(stype) if result.reachable(v)]
        for cost, v in sorted(found):
            path = extract_path(result, v)
            path.reverse()
            ranked.append(RankedService(v, stype, cost, tuple(path)))
    return ranked


def group_by_type(ranked: Iterable[RankedService]) -> dict[str, list[RankedService]]:
    groups: dict[str, list[RankedService]] = {}
    for r in ranked:
        groups.setdefault(r.service_type, []).append(r)
    return groups
