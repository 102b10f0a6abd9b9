"""Acceptance criteria, each checked at its stated tolerance and time budget.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.  Run ``python tests/test_acceptance.py`` for the lines alone.
"""

import time

import numpy as np

from edgeroute.bench import run_bench
from edgeroute.metrics import metrics_from_trace
from edgeroute.responder import edge_key
from edgeroute.scenario import builtin_scenarios, load_scenario_file
from edgeroute.sim import run_scenario
from edgeroute.sssp import INF, dijkstra_parallel, dijkstra_sequential

from acceptance_log import record
from oracles import brute_force_distances, floyd_warshall, path_cost, random_matrix_graph
from simkit import build, builtin, run


def oracle_form(dist):
    return [float("inf") if d == INF else int(d) for d in dist]


def check(number, title, limit, body):
    """Run ``body`` (returning a list of failure strings) and record the verdict."""
    t0 = time.perf_counter()
    failures = body()
    elapsed = time.perf_counter() - t0
    record(number, title, not failures, elapsed, limit, "; ".join(failures[:3]))
    assert not failures, failures[:10]
    assert elapsed <= limit, f"took {elapsed:.1f}s, budget {limit}s"


def test_parallel_matches_sequential():
    def body():
        rng = np.random.default_rng(20240601)
        bad = []
        for i in range(500):
            n = int(rng.integers(2, 129))
            g = random_matrix_graph(rng, n, float(rng.uniform(0.05, 1.0)))
            s = int(rng.integers(n))
            ref = dijkstra_sequential(g, s)
            for p in sorted({1, 2, 3, 7, n} & set(range(1, n + 1))):
                mode = "threads" if i % 25 == 0 else "lockstep"
                r = dijkstra_parallel(g, s, p, mode)
                if not (np.array_equal(r.dist, ref.dist) and np.array_equal(r.pred, ref.pred)
                        and r.settle_order == ref.settle_order):
                    bad.append(f"graph {i} n={n} p={p}")
        return bad
    check(1, "parallel == sequential on 500 random graphs", 60, body)


def test_engines_match_independent_oracles():
    def body():
        rng = np.random.default_rng(77)
        bad = []
        for i in range(100):
            n = int(rng.integers(2, 11))
            g = random_matrix_graph(rng, n, float(rng.uniform(0.05, 1.0)))
            s = int(rng.integers(n))
            want = brute_force_distances(g, s)
            for r in (dijkstra_sequential(g, s), dijkstra_parallel(g, s, min(3, n))):
                if oracle_form(r.dist) != want:
                    bad.append(f"brute force graph {i}")
        for i in range(100):
            n = int(rng.integers(2, 65))
            g = random_matrix_graph(rng, n, float(rng.uniform(0.05, 1.0)))
            fw = floyd_warshall(g)
            for s in rng.choice(n, size=min(n, 4), replace=False):
                s = int(s)
                for r in (dijkstra_sequential(g, s), dijkstra_parallel(g, s, min(4, n))):
                    if oracle_form(r.dist) != fw[s]:
                        bad.append(f"floyd-warshall graph {i} source {s}")
        return bad
    check(2, "distances equal brute force (n<=10) and Floyd-Warshall (n<=64)", 30, body)


def dispatch_view(result):
    orders = sorted((e["t"], e["msg"]["incident_id"], e["msg"]["service"], tuple(e["msg"]["path"]),
                     e["msg"]["cost"]) for e in result.events("send")
                    if e["msg"]["kind"] == "InterventionOrder")
    arrivals = sorted((e["t"], e["incident"], e["actor"]) for e in result.events("team_arrive"))
    return orders, arrivals


def test_cache_transparent_and_effective():
    def body():
        bad = []
        for name in ("demo", "repeat"):
            on = run_scenario(name, 0, use_cache=True)
            off = run_scenario(name, 0, use_cache=False)
            if dispatch_view(on) != dispatch_view(off):
                bad.append(f"{name}: routes or arrivals differ with cache off")
            if not dispatch_view(on)[0]:
                bad.append(f"{name}: nothing dispatched")
        rep = run_scenario("repeat", 0)
        t = rep.metrics["totals"]
        if t["engine_runs_parallel"] != 1 or t["cache_hits"] < 1:
            bad.append(f"repeat: {t['engine_runs_parallel']} engine runs, {t['cache_hits']} hits")
        return bad
    check(3, "cache on/off gives identical dispatch; repeat runs the engine once", 10, body)


def test_failover():
    def body():
        bad = []
        demo = run_scenario("demo", 0)
        fo = demo.events("failover")
        delivered = demo.events("alert_delivered")
        if len(fo) != 1 or fo[0]["reason"] != "ping_timeout":
            bad.append(f"demo: {len(fo)} failovers")
        else:
            timeout = load_scenario_file("demo").sas[0].config.ping_timeout
            first_ping = next(e["t"] for e in demo.events("send") if e["msg"]["kind"] == "Ping")
            if fo[0]["t"] != first_ping + timeout:
                bad.append("demo: failover not exactly one ping timeout after the first ping")
        if [d["server"] for d in delivered] != ["edge-b"]:
            bad.append("demo: alert not delivered to edge-b")
        if len(demo.events("dispatch")) != 1:
            bad.append("demo: no dispatch")
        sc = load_scenario_file("failover_all")
        cfg = sc.sas[0].config
        res = run_scenario(sc, 0)
        failed = res.events("delivery_failed")
        pings = [e for e in res.events("send") if e["msg"]["kind"] == "Ping"]
        if len(failed) != 1 or failed[0]["passes"] != cfg.max_retries:
            bad.append("failover_all: no single delivery failure after max_retries passes")
        if len(pings) != cfg.max_retries * len(cfg.server_list):
            bad.append(f"failover_all: {len(pings)} pings")
        if res.metrics["totals"]["undelivered_incidents"] != 1:
            bad.append("failover_all: incident not counted undelivered")
        return bad
    check(4, "one failover past an offline server; failure after max_retries passes", 5, body)


def test_dedup():
    def body():
        res = run_scenario("dedup", 0)
        alerts = [e for e in res.events("send") if e["msg"]["kind"] == "IncidentAlert"]
        sensors = res.events("sensor_batch")[0]["readings"]
        bad = []
        if len(alerts) != 1:
            bad.append(f"{len(alerts)} IncidentAlerts on the wire")
        if sensors < 10:
            bad.append(f"only {sensors} simultaneous readings")
        return bad
    check(5, "burst of detections yields exactly one IncidentAlert", 5, body)


def test_decline_promotes_next_rank():
    def body():
        bad = []
        res = run_scenario("decline", 0)
        engaged = res.events("engaged")
        if [(e["service"], e["rank"]) for e in engaged] != [(7, 2)]:
            bad.append(f"engaged {[(e['service'], e['rank']) for e in engaged]}")
        data = builtin("decline")
        data["services"] = [{"node": v, "accept_probability": 0.0} for v in (6, 7)]
        res = run(data)
        if res.events("engaged") or res.metrics["totals"]["unserved_incidents"] != 1:
            bad.append("all-decline run not reported unserved")
        return bad
    check(6, "decline promotes rank 2; all declining leaves the incident unserved", 5, body)


def test_reroute_around_discovered_block():
    def body():
        bad = []
        sim = build(builtin("reroute"))
        graph = sim.graph
        blocks = {edge_key(b.u, b.v) for b in sim.scenario.blocks}
        res = sim.run()
        arrive = res.events("team_arrive")
        found = res.events("block_discovered")
        if not arrive or not found:
            return ["team never arrived or never discovered the block"]
        walk = arrive[0]["walk"]
        hops = list(zip(walk, walk[1:]))
        if not all(graph.has_edge(a, b) for a, b in hops):
            bad.append(f"walk {walk} not contiguous")
        if any(edge_key(a, b) in blocks for a, b in hops):
            bad.append(f"walk {walk} crosses a blocked edge")
        at = found[0]["node"]
        tail = walk[walk.index(at):]
        want = floyd_warshall(graph.without_edges(blocks))[at][walk[-1]]
        if path_cost(graph, tail) != want:
            bad.append(f"post-discovery cost {path_cost(graph, tail)} != oracle {want}")
        rr = res.events("reroute")
        if not rr or rr[0]["cost"] != want:
            bad.append("reroute event missing or cost differs from oracle")
        return bad
    check(7, "team detours around a discovered block at oracle cost", 10, body)


def test_determinism_and_metrics_recompute():
    def body():
        bad = []
        for name in builtin_scenarios():
            a, b = run_scenario(name, 42), run_scenario(name, 42)
            if a.trace_text != b.trace_text or a.metrics != b.metrics:
                bad.append(f"{name}: runs differ")
            if metrics_from_trace(a.trace) != a.metrics:
                bad.append(f"{name}: metrics differ from trace recompute")
        return bad
    check(8, "same seed gives byte-identical traces; metrics recompute from trace", 10, body)


def test_benchmark_correctness():
    def body():
        cells = run_bench([1024, 4096], [1, 2, 4, 8], repetitions=3)
        return [f"n={c.n} p={c.p}" for c in cells if not c.correct]
    check(9, "benchmark grid n in {1024, 4096}, p in {1, 2, 4, 8} all correct", 300, body)


if __name__ == "__main__":
    import sys
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
