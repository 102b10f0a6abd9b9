"""Shortest-path routing for emergency dispatch over a network of edge servers.

The engine computes single-source shortest paths with a partitioned,
worker-parallel Dijkstra whose output is identical to the sequential
algorithm.  Around it sits a deterministic discrete-event simulator of
surveillance systems, edge servers and intervention services.
"""

from .cache import CacheEntry, CacheStats, PathCache
from .graph import (
    CityGraph,
    EdgeEdit,
    GraphError,
    GraphParseError,
    NodeRole,
    generate_city,
    load_graph,
    partition,
    update_graph,
)
from .scenario import Scenario, ScenarioError, load_scenario_file, parse_scenario
from .sim import Simulation, run_scenario
from .sssp import SsspResult, dijkstra_parallel, dijkstra_sequential, extract_path, rank_services

__all__ = [
    "CacheEntry", "CacheStats", "CityGraph", "EdgeEdit", "GraphError", "GraphParseError",
    "NodeRole", "PathCache", "Scenario", "ScenarioError", "Simulation", "SsspResult",
    "dijkstra_parallel", "dijkstra_sequential", "extract_path", "generate_city", "load_graph",
    "load_scenario_file", "parse_scenario", "partition", "rank_services", "run_scenario",
    "update_graph",
]
