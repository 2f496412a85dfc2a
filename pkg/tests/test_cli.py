import json
from pathlib import Path

from fpaxos.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ----------------------------------------------------------- quorum analyze


def test_analyze_simple(capsys):
    code, out, _ = run_cli(capsys, "quorum", "analyze", "--kind", "simple", "--n", "10", "--q2", "3")
    assert code == 0
    assert "min |Q1|                 : 8" in out
    assert "guaranteed f (both phases) : 2" in out
    assert "cross-phase intersection : OK" in out


def test_analyze_grid_json(capsys):
    code, out, _ = run_cli(
        capsys, "quorum", "analyze", "--kind", "grid",
        "--rows", "4", "--cols", "5", "--mode", "fpaxos", "--json",
    )
    assert code == 0
    d = json.loads(out)
    assert (d["q1"], d["q2"]) == (5, 4)
    assert d["placement_range"] == [4, 12]


def test_analyze_invalid_params_exit_2(capsys):
    code, _, err = run_cli(capsys, "quorum", "analyze", "--kind", "simple", "--n", "3", "--q2", "4")
    assert code == 2
    assert "error:" in err


def test_analyze_missing_flags_exit_2(capsys):
    code, _, err = run_cli(capsys, "quorum", "analyze", "--kind", "simple", "--n", "10")
    assert code == 2


# ------------------------------------------------------------------- check


def test_check_majority_safe(capsys):
    code, out, _ = run_cli(
        capsys, "check", "--kind", "majority", "--n", "3", "--ballots", "2", "--values", "2"
    )
    assert code == 0
    assert "states explored : 3921" in out
    assert "SAFE" in out


def test_check_improved_majority_safe(capsys):
    code, out, _ = run_cli(
        capsys, "check", "--kind", "majority", "--n", "4", "--improved", "--ballots", "2"
    )
    assert code == 0
    assert "SAFE" in out


def test_check_custom_disjoint_violates(capsys, tmp_path):
    cx = tmp_path / "cx.jsonl"
    code, out, _ = run_cli(
        capsys, "check", "--custom-q1", "[[0]]", "--custom-q2", "[[1]]",
        "--n", "2", "--counterexample", str(cx),
    )
    assert code == 1
    assert "VIOLATION" in out
    assert "replay          : confirmed" in out
    lines = [json.loads(l) for l in cx.read_text().splitlines()]
    assert lines[0]["violated"] in ("agreement", "proposal-consistency")
    assert 1 <= len(lines) - 1 <= 10


def test_check_config_file(capsys, tmp_path):
    cfgfile = tmp_path / "check.json"
    cfgfile.write_text(json.dumps({"quorum": {"kind": "majority", "n": 3}, "ballots": 2}))
    code, out, _ = run_cli(capsys, "check", "--config", str(cfgfile))
    assert code == 0
    assert "SAFE" in out


def test_check_sweep(capsys):
    code, out, _ = run_cli(capsys, "check", "--sweep", "2", "--max-states", "100000")
    assert code == 0
    assert "sweep: consistent" in out
    assert "broken-disjoint(n=2)" in out


# ---------------------------------------------------------------- simulate


def test_simulate_scenario_matches_golden(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--scenario", "fig2a")
    assert code == 0
    assert out == (GOLDEN / "fig2a.jsonl").read_text()


def test_simulate_scenario_amnesia_exits_1(capsys, tmp_path):
    trace = tmp_path / "amnesia.jsonl"
    code, out, _ = run_cli(capsys, "simulate", "--scenario", "amnesia", "--trace", str(trace))
    assert code == 1
    d = json.loads(out)
    assert d["violation"] is True
    assert set(d["decided"]) == {"x", "y"}
    assert trace.read_text() == (GOLDEN / "amnesia.jsonl").read_text()


def test_simulate_run_writes_outputs(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    metrics = tmp_path / "m.json"
    csv = tmp_path / "m.csv"
    code, out, _ = run_cli(
        capsys, "simulate", "--kind", "majority", "--n", "4", "--improved",
        "--duration-ms", "1500", "--warmup-ms", "200", "--cooldown-ms", "200",
        "--trace", str(trace), "--metrics", str(metrics), "--csv", str(csv),
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["protocol_msgs_per_commit"] == 4.0
    assert json.loads(metrics.read_text())["committed"] == summary["committed"]
    assert csv.read_text().splitlines()[0].startswith("n,kind,q1,q2,seed")
    assert trace.read_text().splitlines()


def test_simulate_crash_flags(capsys):
    code, out, _ = run_cli(
        capsys, "simulate", "--kind", "majority", "--n", "4", "--improved",
        "--duration-ms", "4000", "--warmup-ms", "300", "--cooldown-ms", "300",
        "--crash", "t=1500,r=2", "--crash", "t=1500,r=3",
    )
    assert code == 0
    assert json.loads(out)["committed"] > 0  # commits continue after the crash


def test_simulate_wipe_crash_exits_1_with_counterexample(capsys, tmp_path):
    trace = tmp_path / "violation.jsonl"
    code, _, err = run_cli(
        capsys, "simulate", "--kind", "majority", "--n", "3",
        "--duration-ms", "4000", "--warmup-ms", "200", "--cooldown-ms", "200",
        "--window", "2",
        "--crash", "t=1000,r=1,wipe", "--restore", "t=1500,r=1",
        "--crash", "t=2000,r=0", "--elect", "t=2500,r=2",
        "--trace", str(trace),
    )
    assert code == 1
    assert "SAFETY VIOLATION" in err
    lines = trace.read_text().splitlines()
    assert any('"ev":"violation"' in l for l in lines)


def test_simulate_config_file(capsys, tmp_path):
    cfg = {
        "quorum": {"kind": "simple", "n": 5, "q2_size": 2},
        "duration_ms": 1200,
        "warmup_ms": 100,
        "cooldown_ms": 100,
        "seed": 5,
    }
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(capsys, "simulate", "--config", str(path))
    assert code == 0
    assert json.loads(out)["seed"] == 5


def test_simulate_determinism_across_invocations(capsys, tmp_path):
    outs = []
    for i in (1, 2):
        trace = tmp_path / f"t{i}.jsonl"
        code, out, _ = run_cli(
            capsys, "simulate", "--kind", "simple", "--n", "5", "--q2", "2",
            "--seed", "9", "--duration-ms", "1000", "--warmup-ms", "100",
            "--cooldown-ms", "100", "--trace", str(trace),
        )
        assert code == 0
        outs.append((out, trace.read_bytes()))
    assert outs[0] == outs[1]


def test_seed_env_default(capsys, monkeypatch):
    monkeypatch.setenv("FPAXOS_SEED", "42")
    code, out, _ = run_cli(
        capsys, "simulate", "--kind", "majority", "--n", "3",
        "--duration-ms", "800", "--warmup-ms", "100", "--cooldown-ms", "100",
    )
    assert code == 0
    assert json.loads(out)["seed"] == 42


# ----------------------------------------------------------------- goldens


def test_analyze_output_matches_golden(capsys):
    _, out, _ = run_cli(capsys, "quorum", "analyze", "--kind", "simple", "--n", "10", "--q2", "3")
    assert out == (GOLDEN / "cli_analyze_simple_10_3.txt").read_text()
    _, out, _ = run_cli(
        capsys, "quorum", "analyze", "--kind", "grid", "--rows", "4", "--cols", "5",
        "--mode", "fpaxos",
    )
    assert out == (GOLDEN / "cli_analyze_grid_4x5.txt").read_text()


def test_check_output_matches_golden(capsys):
    _, out, _ = run_cli(
        capsys, "check", "--kind", "majority", "--n", "3", "--ballots", "2", "--values", "2"
    )
    assert out == (GOLDEN / "cli_check_majority3.txt").read_text()


def test_sweep_output_matches_golden(capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    code, _, _ = run_cli(
        capsys, "sweep", "--kind", "simple", "--n", "5", "--q2", "2",
        "--q2-list", "1,2", "--seeds", "1", "--duration-ms", "800",
        "--warmup-ms", "100", "--cooldown-ms", "100", "--out", str(out_path),
    )
    assert code == 0
    assert out_path.read_text() == (GOLDEN / "cli_sweep_small.csv").read_text()


# ------------------------------------------------------------------- sweep


def test_sweep_inline_flags(capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    code, out, _ = run_cli(
        capsys, "sweep", "--kind", "simple", "--n", "8", "--q2", "2",
        "--q2-list", "2,3", "--seeds", "2", "--duration-ms", "1500",
        "--warmup-ms", "200", "--cooldown-ms", "200", "--out", str(out_path),
    )
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert lines[0] == "n,kind,q1,q2,seed,throughput,mean_lat,p99_lat,msgs_per_commit"
    assert len(lines) == 5
    msgs = [float(l.split(",")[-1]) for l in lines[1:]]
    assert msgs == [6.0, 6.0, 8.0, 8.0]  # 2*q2 + 2, per seed


def test_sweep_spec_file(capsys, tmp_path):
    out_path = tmp_path / "sweep.json"
    spec = {
        "quorum": {"kind": "simple", "n": 5, "q2_size": 2},
        "duration_ms": 1000,
        "warmup_ms": 100,
        "cooldown_ms": 100,
        "q2_list": [1, 2],
        "seeds": 1,
        "out": str(out_path),
        "format": "json",
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    code, out, _ = run_cli(capsys, "sweep", "--spec", str(spec_path))
    assert code == 0
    rows = json.loads(out_path.read_text())
    assert [r["q2"] for r in rows] == [1, 2]


def test_sweep_requires_out(capsys):
    code, _, err = run_cli(capsys, "sweep", "--kind", "majority", "--n", "3")
    assert code == 2
    assert "out" in err


def test_sweep_refuses_non_intersecting_quorums(capsys, tmp_path):
    out_path = tmp_path / "never.csv"
    spec = {
        "quorum": {"kind": "explicit", "n": 2, "q1_sets": [[0]], "q2_sets": [[1]]},
        "duration_ms": 1000,
        "warmup_ms": 100,
        "cooldown_ms": 100,
        "seeds": 1,
        "out": str(out_path),
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    code, _, err = run_cli(capsys, "sweep", "--spec", str(spec_path))
    assert code == 2
    assert "do not intersect" in err
    assert not out_path.exists()  # refused before any run started
