import json

import pytest

from edgeroute.messages import Severity
from edgeroute.scenario import (
    ScenarioError,
    builtin_scenarios,
    load_scenario_file,
    parse_scenario,
    resolve_scenario_path,
)

from simkit import DATA, base, builtin, reading


def parse(data):
    return parse_scenario(data, base_dir=DATA)


@pytest.mark.parametrize("name", builtin_scenarios())
def test_builtins_load(name):
    sc = load_scenario_file(name)
    assert sc.graph.n >= 2 and sc.servers


def test_unknown_scenario_name():
    with pytest.raises(ScenarioError):
        resolve_scenario_path("no-such-thing")


def test_times_are_ticks():
    d = base(sas=[{"id": "sas-0", "location": 0, "servers": ["edge-a"], "ping_timeout": 2.5,
                   "readings": [reading(1.25)]}],
             faults={"blocks": [{"time": 3, "u": 2, "v": 4, "until": 4.5}]})
    sc = parse(d)
    assert sc.sas[0].config.ping_timeout == 2500
    assert sc.sas[0].readings[0].timestamp == 1250
    assert (sc.blocks[0].time, sc.blocks[0].until) == (3000, 4500)


def test_per_severity_acceptance():
    sc = parse(base(services=[{"node": 6, "accept_probability": {"high": 0.0}}]))
    pol = sc.policies[6]
    assert pol.accepts(Severity.HIGH) == 0.0 and pol.accepts(Severity.LOW) == 1.0
    assert sc.policies[7].accepts(Severity.HIGH) == 1.0


def test_inline_and_generated_graphs():
    sc = parse(base(graph={"text": "graph 2\nnode 0 surveillance\nnode 1 service:fire\nedge 0 1 1\n"},
                    hazards={}))
    assert sc.graph.n == 2
    sc = parse(base(graph={"generate": {"n": 30, "density": 0.2, "services": {"fire": 2}, "seed": 1}},
                    hazards={}, sas=[]))
    assert sc.graph.n == 30 and len(sc.graph.services("fire")) == 2


def write(tmp_path, text):
    p = tmp_path / "s.json"
    p.write_text(text)
    return p


def test_schema_error_reports_line(tmp_path):
    d = base()
    d["servers"][0]["p_workers"] = "four"
    text = json.dumps(d, indent=2)
    p = write(tmp_path, text)
    with pytest.raises(ScenarioError) as exc:
        load_scenario_file(p)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if '"p_workers"' in l)
    assert f"{p}:{line}:" in str(exc.value) and "p_workers" in str(exc.value)


def test_missing_required_key_reports_root(tmp_path):
    d = base()
    del d["servers"]
    p = write(tmp_path, json.dumps(d, indent=2))
    with pytest.raises(ScenarioError, match=r":1: schema violation at <root>"):
        load_scenario_file(p)


def test_json_syntax_error_has_line_and_column(tmp_path):
    p = write(tmp_path, '{\n  "graph": ,\n}')
    with pytest.raises(ScenarioError, match=r"s\.json:2:\d+: invalid JSON"):
        load_scenario_file(p)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d["sas"][0]["servers"].append("edge-z"), "undefined server edge-z"),
    (lambda d: d["sas"][0].update(location=4), "not a surveillance point"),
    (lambda d: d["sas"][0].update(location=40), "not a node"),
    (lambda d: d["servers"].append({"id": "edge-a"}), "duplicate server id"),
    (lambda d: d["servers"][0].update(outages=[[5, 2]]), "ends before it starts"),
    (lambda d: d.update(services=[{"node": 2}]), "not an intervention service"),
    (lambda d: d.update(network={"links": [{"a": "edge-a", "b": "ghost", "latency": 1}]}),
     "unknown actor ghost"),
    (lambda d: d.update(faults={"blocks": [{"time": 0, "u": 3, "v": 3}]}), "invalid edge"),
    (lambda d: d.update(faults={"graph_updates": [{"time": 0, "edits": [{"u": 0, "v": 50}]}]}),
     "invalid edge"),
    (lambda d: d.update(requests=[{"time": 0, "location": 0, "type": "coastguard"}]),
     "no service node"),
    (lambda d: d["sas"][0].update(readings=[reading(1, hazard="flood")]), "no service node"),
    (lambda d: d.update(graph={"file": "missing.g"}), "graph file not found"),
    (lambda d: d.update(graph={"text": "graph 2\nedge 0 5 1\n"}), "graph:"),
])
def test_semantic_errors(mutate, message):
    d = base()
    mutate(d)
    with pytest.raises(ScenarioError, match=message):
        parse(d)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(network={"drop_probability": 2}),
    lambda d: d.update(services=[{"node": 6, "accept_probability": -0.1}]),
    lambda d: d.update(extra=1),
    lambda d: d["servers"][0].update(p_workers=0),
    lambda d: d["sas"][0]["readings"].append({"time": -1, "hazard": "smoke", "magnitude": 1}),
])
def test_schema_rejections(mutate):
    d = base()
    mutate(d)
    with pytest.raises(ScenarioError, match="schema violation"):
        parse(d)


def test_builtin_files_are_valid_json_objects():
    for name in builtin_scenarios():
        assert isinstance(builtin(name), dict)
