"""Command-line entry point: gen, route, simulate, verify, bench.

Exit codes: 0 success, 1 usage error, 2 input validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from .bench import format_table, run_bench, same_result, write_csv
from .graph import GraphError, format_cost, generate_city, load_graph
from .metrics import metrics_from_trace
from .scenario import ScenarioError, builtin_scenarios, load_scenario_file
from .sim import run_scenario, write_outputs
from .sssp import INF, EngineError, dijkstra_parallel, dijkstra_sequential, extract_path, rank_services

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _service_counts(text: str) -> dict[str, int]:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, _, count = part.partition("=")
        try:
            out[name] = int(count)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected type=count, got {part!r}") from None
    return out


def _read_graph(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise GraphError(f"cannot read {path}: {exc.strerror}") from None
    return load_graph(text)


def cmd_gen(args) -> int:
    graph = generate_city(args.n, args.density, args.services, args.seed)
    text = graph.to_text()
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}: {graph.n} nodes, {len(graph.edges())} edges")
    return EXIT_OK


def cmd_route(args) -> int:
    graph = _read_graph(args.graph)
    if not 0 <= args.source < graph.n:
        raise EngineError(f"source {args.source} out of range [0, {graph.n})")
    p = min(args.p, graph.n)
    seq = dijkstra_sequential(graph, args.source)
    par = dijkstra_parallel(graph, args.source, p, args.mode)
    print(f"source {args.source}  nodes {graph.n}  workers {p}")
    print(f"{'node':>6}  {'role':<16}  {'dist':>10}  path")
    for v in range(graph.n):
        d = par.dist[v]
        dist = "inf" if d == INF else format_cost(int(d))
        path = " ".join(map(str, extract_path(par, v)))
        print(f"{v:>6}  {str(graph.role(v)):<16}  {dist:>10}  {path}")
    ranked = rank_services(par, graph, graph.service_types)
    if ranked:
        print("ranking")
        rank_of: dict[str, int] = {}
        for rs in ranked:
            rank_of[rs.service_type] = rank_of.get(rs.service_type, 0) + 1
            route = " ".join(map(str, rs.path))
            print(f"  {rs.service_type:<12} #{rank_of[rs.service_type]}  node {rs.node:<5} "
                  f"cost {format_cost(rs.cost):>8}  route {route}")
    agree = same_result(seq, par)
    print(f"agreement {'true' if agree else 'false'}")
    return EXIT_OK if agree else EXIT_RUNTIME


def cmd_simulate(args) -> int:
    scenario = load_scenario_file(args.scenario)
    result = run_scenario(scenario, seed=args.seed, use_cache=not args.no_cache,
                          engine_mode=args.mode)
    write_outputs(result, args.metrics, args.trace)
    t = result.metrics["totals"]
    print(f"scenario {scenario.name}  seed {args.seed}  cache {'off' if args.no_cache else 'on'}")
    for key in ("incidents", "unserved_incidents", "undelivered_incidents", "failovers", "reroutes",
                "cache_hit_ratio", "engine_runs_parallel", "engine_runs_sequential",
                "messages_sent", "messages_dropped"):
        print(f"  {key:<24} {t[key]}")
    if args.verbose:
        for iid, m in result.metrics["incidents"].items():
            print(f"  {iid}: {m['status']}  detect->dispatch {m['detection_to_dispatch']}  "
                  f"dispatch->arrival {m['dispatch_to_arrival']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.metrics and not args.trace:
        raise UsageError("--metrics needs --trace")
    if args.trace:
        lines = Path(args.trace).read_text(encoding="utf-8").splitlines()
        rebuilt = metrics_from_trace(lines)
        if args.metrics:
            reported = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
            ok = rebuilt == reported
            print(f"metrics match trace: {'true' if ok else 'false'}")
            return EXIT_OK if ok else EXIT_RUNTIME
        print(json.dumps(rebuilt, indent=2, sort_keys=True))
        return EXIT_OK
    rng = random.Random(args.seed)
    failures = 0
    for i in range(args.graphs):
        n = rng.randint(2, args.max_n)
        density = rng.uniform(0.05, 1.0)
        graph = generate_city(n, density, {}, rng.randrange(2**31))
        s = rng.randrange(n)
        ref = dijkstra_sequential(graph, s)
        for p in sorted({1, 2, 3, 7, n}):
            if not same_result(dijkstra_parallel(graph, s, min(p, n), args.mode), ref):
                failures += 1
                print(f"mismatch: graph {i} n={n} density={density:.3f} source={s} p={p}")
    print(f"checked {args.graphs} graphs, {failures} mismatches")
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def cmd_bench(args) -> int:
    if min(args.sizes) < 2:
        raise UsageError("--sizes values must be at least 2")
    if min(args.p) < 1:
        raise UsageError("--p values must be at least 1")
    if max(args.p) > min(args.sizes):
        raise UsageError("--p values cannot exceed the smallest size")
    cells = run_bench(args.sizes, args.p, args.repetitions, args.seed, args.density, args.mode)
    print(format_table(cells))
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            write_csv(cells, fh)
    failed = sum(not c.correct for c in cells)
    print(f"correctness failures: {failed}")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgeroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    modes = ("lockstep", "threads")

    g = sub.add_parser("gen", help="generate a random city graph")
    g.add_argument("--n", type=_positive, required=True)
    g.add_argument("--density", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--services", type=_service_counts, default={"fire": 2, "medical": 2},
                   help="comma-separated type=count (default fire=2,medical=2)")
    g.add_argument("-o", "--output", help="output path (default stdout)")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("route", help="shortest paths and service ranking from one node")
    r.add_argument("graph")
    r.add_argument("--source", type=int, default=0)
    r.add_argument("--p", type=_positive, default=4, help="worker count")
    r.add_argument("--mode", choices=modes, default="lockstep")
    r.set_defaults(func=cmd_route)

    s = sub.add_parser("simulate", help="run a scenario file or built-in scenario",
                       epilog="built-in scenarios: " + ", ".join(builtin_scenarios()))
    s.add_argument("scenario")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--metrics", help="write the metrics JSON here")
    s.add_argument("--trace", help="write the JSON-lines trace here")
    s.add_argument("--no-cache", action="store_true", help="disable the path cache")
    s.add_argument("--mode", choices=modes, default="lockstep")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="engine equivalence sweep, or trace/metrics consistency")
    v.add_argument("--graphs", type=_positive, default=100)
    v.add_argument("--max-n", type=_positive, default=128)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--mode", choices=modes, default="lockstep")
    v.add_argument("--trace", help="recompute metrics from this trace")
    v.add_argument("--metrics", help="compare the recomputed metrics with this file")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="time sequential vs partitioned Dijkstra")
    b.add_argument("--sizes", type=_int_list, default=[1024, 4096])
    b.add_argument("--p", type=_int_list, default=[1, 2, 4, 8])
    b.add_argument("--repetitions", type=_positive, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--density", type=float, default=0.05)
    b.add_argument("--mode", choices=modes, default="lockstep")
    b.add_argument("--csv", help="also write the table as CSV")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (GraphError, ScenarioError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"edgeroute: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
