import json

import pydot
import pytest

from hdsbisim import cli
from hdsbisim.export import from_json, points_dump, quotient_to_dict, system_to_dict, to_dot, to_json
from hdsbisim.model import thermostat_path
from systems import chain

INTERIOR_GUARD = """
vars x
mode A output a
  flow x' = 1
  invariant 0 <= x <= 1
mode B output b
  flow x' = -1
  invariant 0 <= x <= 1
edge A -> B input go
  guard x = 0.5
edge B -> A input go
  guard x = 0
"""


def test_json_round_trip(thermostat_result):
    text = to_json(thermostat_result.graph)
    doc = from_json(text)
    assert doc == quotient_to_dict(thermostat_result.graph)
    assert list(doc["metadata"]) == ["k", "eta", "grid_size", "model_digest", "status"]
    assert doc["metadata"]["k"] == 2 and doc["metadata"]["grid_size"] == 66
    for st, node in zip(doc["states"], sorted(thermostat_result.graph.nodes, key=lambda n: n.id)):
        assert tuple(st["representative"]["point"]) == node.representative.point
    assert json.dumps(doc, indent=2) + "\n" == text


def test_dot_is_parseable(thermostat_result):
    text = to_dot(thermostat_result.graph)
    (g,) = pydot.graph_from_dot_data(text)
    assert len(g.get_nodes()) == 13  # 12 states plus the default node statement
    assert len(g.get_edges()) == len(thermostat_result.graph.edges)
    labels = {e.get_label().strip('"') for e in g.get_edges()}
    assert labels == {"ON", "OFF", "*"}


def test_system_export():
    doc = system_to_dict(chain("a", "b"), {"k": 1})
    assert doc["transitions"] == [{"src": 0, "input": "u", "dst": 1}]
    assert doc["states"][0] == {"id": 0, "output": "a", "representative": None}


def test_points_dump(thermostat_result):
    lines = points_dump(thermostat_result.grid).splitlines()
    assert len(lines) == 66
    assert lines[0].split("\t")[0] == "OFF_safe"


def test_check_command(tmp_path, capsys):
    assert cli.main(["check", "--model", str(thermostat_path())]) == 0
    bad = tmp_path / "bad.hds"
    bad.write_text(INTERIOR_GUARD)
    assert cli.main(["check", "--model", str(bad)]) == 1
    assert "A -go-> B" in capsys.readouterr().out
    assert cli.main(["check", "--model", str(tmp_path / "missing.hds")]) == 2
    broken = tmp_path / "broken.hds"
    broken.write_text("vars x\nmode A\n")
    assert cli.main(["check", "--model", str(broken)]) == 2


def test_bisim_command_writes_identical_files(tmp_path, capsys):
    outs = []
    for i in range(2):
        out = tmp_path / f"q{i}.json"
        code = cli.main(["bisim", "--model", str(thermostat_path()), "--eta", "0.0707107",
                         "--out", str(out), "--points", str(tmp_path / "pts.tsv")])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    assert summary == "k=2 classes=12 grid=66 eta=0.0707107 status=fixed-point"
    assert len(from_json(outs[0].decode())["states"]) == 12


def test_example_command_dot_to_stdout(capsys):
    assert cli.main(["example", "--format", "dot", "--out", "-"]) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith('digraph "quotient"')
    assert "classes=12" in captured.err


@pytest.mark.parametrize("argv", [
    ["bisim", "--model", "x.hds", "--eta", "-1"],
    ["bisim", "--model", "x.hds", "--eta", "0.1", "--sweep-rounds", "1"],
    ["example", "--sweep-factor", "2"],
])
def test_invalid_run_config(argv, capsys):
    assert cli.main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_bad_format_rejected_by_parser():
    with pytest.raises(SystemExit) as info:
        cli.main(["example", "--format", "svg"])
    assert info.value.code == 2


def test_engine_failure_exit_code(tmp_path, capsys):
    spiral = tmp_path / "spiral.hds"
    spiral.write_text("""
vars x y
mode A output a
  flow x' = -y
  flow y' = x
  invariant -2 <= x <= 2; -2 <= y <= 2
mode B output b
  flow x' = 1
  flow y' = 0
  invariant x <= 1; -2 <= x; -2 <= y <= 2
edge B -> A input go
  guard x = 1; -1 <= y <= 1
""")
    code = cli.main(["bisim", "--model", str(spiral), "--eta", "1", "--t-max", "3", "--step", "0.01"])
    assert code == 3
    assert "t_max" in capsys.readouterr().err
