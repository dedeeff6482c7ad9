import csv
import json
from pathlib import Path

import pytest

from locsim.cli import main, parse_seeds
from locsim.engine import CSV_COLUMNS
from locsim.schemes import ConsistencyError, HlrScheme
from locsim.scenario import ScenarioError, canonical_scenario, load_scenario, parse_scenario
from locsim.topology import build_canonical_fixture, dump_topology

ROOT = Path(__file__).resolve().parents[1]
CANONICAL = ROOT / "scenarios" / "canonical.ini"

SMALL = """
[topology]
source = canonical
[traffic]
cmr = 2
[run]
seed = 5
users = 12
horizon_events = 800
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- scenario files --------------------------------------------------------------


def test_shipped_scenarios_parse():
    for p in (ROOT / "scenarios").glob("*.ini"):
        sc = load_scenario(p)
        assert sc.seed is not None


def test_canonical_file_matches_builtin():
    sc = load_scenario(CANONICAL)
    ref = canonical_scenario(seed=1)
    assert (sc.users, sc.calls.preferred_size, sc.calls.preferred_prob) == (ref.users, 5, 0.8)
    assert sc.move_rate == ref.move_rate
    assert sc.tree.children == ref.tree.children


def test_missing_seed_rejected():
    with pytest.raises(ScenarioError, match="run.seed"):
        parse_scenario("[run]\nusers = 4\n")


def test_unknown_section_rejected():
    with pytest.raises(ScenarioError, match="unknown section"):
        parse_scenario("[run]\nseed = 1\n[extras]\nx = 1\n")


def test_bad_model_param_names_key():
    with pytest.raises(ScenarioError, match="gm-alpha"):
        parse_scenario("[mobility]\nsource = gauss-markov\ngm_alpha = 2\n[run]\nseed = 1\n")


def test_trace_sources_resolve_relative_paths(tmp_path):
    (tmp_path / "calls.txt").write_text("#calltrace v1\n1.0 0 1\n2.0 1 0\n")
    (tmp_path / "z.trace").write_text("#zonetrace v1\n0.5 0 a b\n1.5 1 c c2\n")
    text = "[mobility]\nsource = trace\ntrace = z.trace\n[traffic]\nsource = trace\ntrace = calls.txt\n[run]\nseed = 1\nusers = 2\n"
    (tmp_path / "s.ini").write_text(text)
    sc = load_scenario(tmp_path / "s.ini")
    assert len(sc.call_trace) == 2 and sc.trace.is_zone_events


def test_parse_seeds():
    assert parse_seeds("1-3,7") == [1, 2, 3, 7]


# -- commands -------------------------------------------------------------------------


def test_simulate_writes_one_row(small, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["simulate", str(small), "--scheme", "hlr", "--out", str(out)]) == 0
    [row] = rows(out)
    assert list(row) == list(CSV_COLUMNS)
    assert row["scheme"] == "hlr" and row["seed"] == "5"


def test_simulate_is_byte_identical(small, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["simulate", str(small), "--scheme", "ws-hier", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_missing_seed_exit_2(tmp_path, capsys):
    p = tmp_path / "noseed.ini"
    p.write_text("[run]\nusers = 4\n")
    assert main(["simulate", str(p)]) == 2
    assert "run.seed is required" in capsys.readouterr().err


def test_simulate_consistency_abort_exit_3(small, monkeypatch, capsys):
    def broken(self, caller_zone, callee):
        raise ConsistencyError("lookup failure: injected")

    monkeypatch.setattr(HlrScheme, "hlr_on_call", broken)
    assert main(["simulate", str(small), "--scheme", "hlr"]) == 3
    assert "aborted at event" in capsys.readouterr().err


def test_sweep_grid_and_metadata(small, tmp_path):
    out = tmp_path / "sweep.csv"
    plot = tmp_path / "plot.csv"
    code = main([
        "sweep", str(small), "--cmr", "0.25,0.5,1,2,4,8", "--schemes", "hlr,ws-hlr,hier,ws-hier",
        "--out", str(out), "--plot-data", str(plot),
    ])
    assert code == 0
    table = rows(out)
    assert len(table) == 24
    assert {(r["scheme"], r["cmr"]) for r in table} == {
        (s, repr(c)) for s in ("hlr", "ws-hlr", "hier", "ws-hier") for c in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    }
    meta = json.loads(Path(f"{out}.meta.json").read_text())
    assert meta["paired"] is True and len(meta["stream_digests"]) == 6
    assert len(rows(plot)) == 24


def test_sweep_single_cell_matches_simulate(small, tmp_path):
    s_out, w_out = tmp_path / "s.csv", tmp_path / "w.csv"
    assert main(["simulate", str(small), "--scheme", "ws-hlr", "--cmr", "2", "--out", str(s_out)]) == 0
    assert main(["sweep", str(small), "--cmr", "2", "--schemes", "ws-hlr", "--out", str(w_out)]) == 0
    assert s_out.read_text() == w_out.read_text()


def test_sweep_bad_scheme_exit_2(small):
    assert main(["sweep", str(small), "--cmr", "1", "--schemes", "gsm"]) == 2
    assert main(["sweep", str(small), "--cmr", "0,1"]) == 2


def test_validate_canonical_passes(capsys):
    assert main(["validate", str(CANONICAL)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 5


def _scenario_with_topology(tmp_path, text):
    (tmp_path / "t.topo").write_text(text)
    p = tmp_path / "s.ini"
    p.write_text("[topology]\nsource = t.topo\n[run]\nseed = 1\n")
    return p


def test_validate_reports_min_children(tmp_path, capsys):
    p = _scenario_with_topology(tmp_path, "root R S\nedge R x\nedge R y\nedge x z\nedge S s1\nedge S s2\n")
    assert main(["validate", str(p)]) == 1
    assert "min-children violated at x" in capsys.readouterr().out


def test_validate_reports_probability_sum(tmp_path, capsys):
    tree, grid = build_canonical_fixture()
    text = dump_topology(tree, grid)
    lines = []
    for line in text.splitlines():
        if line.startswith("move a "):
            parts = line.split()
            nbs = [p.rsplit(":", 1) for p in parts[2:]]
            scaled = [f"{n}:{float(v) * 0.9!r}" for n, v in nbs]
            line = "move a " + " ".join(scaled)
        lines.append(line)
    p = _scenario_with_topology(tmp_path, "\n".join(lines) + "\n")
    assert main(["validate", str(p)]) == 1
    assert "probability sum violated at a" in capsys.readouterr().out


def test_simulate_refuses_invalid_topology(tmp_path):
    p = _scenario_with_topology(tmp_path, "root R S\nedge R x\nedge R y\nedge x z\nedge S s1\nedge S s2\n")
    assert main(["simulate", str(p)]) == 2


def test_generate_mobility_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.mob", tmp_path / "b.mob"
    for p in (a, b):
        args = ["generate-mobility", "--model", "random-waypoint", "--nodes", "10", "--seed", "7"]
        assert main(args + ["--duration", "120", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("#mobtrace v1")
    nodes = {line.split()[1] for line in a.read_text().splitlines()[1:]}
    assert len(nodes) == 10
    assert "zone_crossings=" in capsys.readouterr().out


def test_generate_mobility_bad_alpha(tmp_path, capsys):
    code = main(["generate-mobility", "--model", "gauss-markov", "--nodes", "3", "--seed", "1",
                 "--gm-alpha", "1.3", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "gm-alpha out of range" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_generate_mobility_requires_seed():
    with pytest.raises(SystemExit) as info:
        main(["generate-mobility", "--model", "rpgm", "--nodes", "3"])
    assert info.value.code == 2


def test_generated_trace_drives_a_simulation(tmp_path):
    trace = tmp_path / "gm.mob"
    assert main(["generate-mobility", "--model", "gauss-markov", "--nodes", "8", "--seed", "2",
                 "--duration", "600", "--out", str(trace)]) == 0
    p = tmp_path / "s.ini"
    p.write_text(f"[mobility]\nsource = trace\ntrace = {trace.name}\n[traffic]\ncmr = 1\n[run]\nseed = 2\nusers = 8\n")
    out = tmp_path / "r.csv"
    assert main(["simulate", str(p), "--scheme", "ws-hier", "--check", "touched", "--out", str(out)]) == 0
    assert int(rows(out)[0]["lookups_total"]) > 0


def test_report_aggregates(small, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(small), "--cmr", "1,4", "--schemes", "hlr,ws-hlr", "--seeds", "1-3", "--out", str(out)]) == 0
    agg = tmp_path / "agg.csv"
    assert main(["report", str(out), "--out", str(agg)]) == 0
    table = rows(agg)
    assert len(table) == 4 and all(r["n"] == "3" for r in table)
    raw = [r for r in rows(out) if r["scheme"] == "hlr" and r["cmr"] == "1.0"]
    mean = sum(float(r["hop_cost"]) for r in raw) / 3
    cell = next(r for r in table if r["scheme"] == "hlr" and r["cmr"] == "1.0")
    assert float(cell["hop_cost_mean"]) == pytest.approx(mean)
    assert "±" in capsys.readouterr().out


def test_report_missing_file_exit_2(tmp_path):
    assert main(["report", str(tmp_path / "nope.csv")]) == 2
