"""Timing harness: sequential vs partitioned Dijkstra with a correctness check per cell."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .graph import generate_city
from .sssp import SsspResult, dijkstra_parallel, dijkstra_sequential


@dataclass(frozen=True)
class BenchCell:
    n: int
    engine: str  # "sequential" or "parallel"
    p: int | None
    median_s: float
    repetitions: int
    correct: bool
    mismatches: int


def same_result(a: SsspResult, b: SsspResult) -> bool:
    return (np.array_equal(a.dist, b.dist) and np.array_equal(a.pred, b.pred)
            and a.settle_order == b.settle_order)


def _timed(fn, reps: int) -> tuple[float, list]:
    times, results = [], []
    for _ in range(reps):
        t0 = time.perf_counter()
        results.append(fn())
        times.append(time.perf_counter() - t0)
    return statistics.median(times), results


def run_bench(sizes: Iterable[int], p_values: Iterable[int], repetitions: int = 3, seed: int = 0,
              density: float = 0.05, mode: str = "lockstep", source: int = 0) -> list[BenchCell]:
    sizes, p_values = list(sizes), list(p_values)
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if any(n < 2 for n in sizes):
        raise ValueError("sizes must be at least 2")
    if any(p < 1 for p in p_values):
        raise ValueError("p values must be at least 1")
    cells = []
    for n in sizes:
        graph = generate_city(n, density, {}, seed + n)
        seq_t, seq_runs = _timed(lambda: dijkstra_sequential(graph, source), repetitions)
        ref = seq_runs[0]
        bad = sum(not same_result(r, ref) for r in seq_runs[1:])
        cells.append(BenchCell(n, "sequential", None, seq_t, repetitions, bad == 0, bad))
        for p in p_values:
            pp = min(p, n)
            t, runs = _timed(lambda: dijkstra_parallel(graph, source, pp, mode), repetitions)
            bad = sum(not same_result(r, ref) for r in runs)
            cells.append(BenchCell(n, "parallel", p, t, repetitions, bad == 0, bad))
    return cells


def format_table(cells: list[BenchCell]) -> str:
    rows = [f"{'n':>6}  {'engine':<10}  {'p':>3}  {'median_ms':>10}  {'speedup':>7}  check"]
    base = {}
    for c in cells:
        if c.engine == "sequential":
            base[c.n] = c.median_s
        speed = base[c.n] / c.median_s if c.median_s > 0 else float("inf")
        rows.append(f"{c.n:>6}  {c.engine:<10}  {c.p if c.p else '-':>3}  "
                    f"{c.median_s * 1000:>10.2f}  {speed:>7.2f}  "
                    f"{'pass' if c.correct else f'FAIL ({c.mismatches})'}")
    return "\n".join(rows)


def write_csv(cells: list[BenchCell], out: TextIO) -> None:
    w = csv.writer(out)
    w.writerow(["n", "engine", "p", "median_s", "repetitions", "correct", "mismatches"])
    for c in cells:
        w.writerow([c.n, c.engine, c.p or "", f"{c.median_s:.6f}", c.repetitions,
                    c.correct, c.mismatches])
