import csv
import hashlib
import json

import numpy as np
import pytest

from attnbarter.abm import init_population, sweep
from attnbarter.cli import main
from attnbarter.core import ModelParams

BASE = {"q0": 0.8, "c": 0.2}
LOG_EXPENSIVE = {"q0": 0.8, "c": 2.0, "attention": {"kind": "log1p"}}


def run(tmp_path, command, config, *extra, name="cfg.json"):
    cfg = tmp_path / name
    cfg.write_text(json.dumps(config))
    out = tmp_path / f"out_{command}_{name}"
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def read_csv(path):
    with path.open() as fh:
        return list(csv.DictReader(fh))


def test_solve_baseline_params(tmp_path):
    rc, out = run(tmp_path, "solve", {"params": BASE})
    assert rc == 0
    assert json.loads((out / "verification.json").read_text())["max_gain"] <= 1e-3
    eq = json.loads((out / "equilibrium.json").read_text())
    assert len(eq["clubs"]) == 7
    assert len(read_csv(out / "curve.csv")) == 1001
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "solve" and manifest["config"]["params"] == BASE
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert "threads" not in json.dumps(manifest)


def test_solve_without_clubs_is_benchmark(tmp_path):
    rc, out = run(tmp_path, "solve", {"params": LOG_EXPENSIVE, "grid_size": 11})
    assert rc == 0
    assert json.loads((out / "equilibrium.json").read_text())["clubs"] == []
    for row in read_csv(out / "curve.csv"):
        assert float(row["bartered"]) == 0.0
        assert float(row["consumption_u"]) == pytest.approx(0.02, abs=1e-12)
        assert float(row["followees"]) == pytest.approx(0.2, abs=1e-12)


def test_solve_five_club_variant(tmp_path):
    rc, out = run(tmp_path, "solve", {"params": BASE, "stopping": "gain_floor(0.07)"})
    assert rc == 0
    assert len(json.loads((out / "equilibrium.json").read_text())["clubs"]) == 5


def test_missing_q0(tmp_path, capsys):
    rc, _ = run(tmp_path, "solve", {"params": {"c": 0.2}})
    assert rc == 2
    assert "q0" in capsys.readouterr().err


@pytest.mark.parametrize(
    "command, config",
    [
        ("solve", {"params": BASE, "bogus": 1}),
        ("solve", {}),
        ("solve-het", {"params": BASE, "damping": 1.5}),
        ("synth", {"params": BASE, "synth": {"n": 0}}),
        ("simulate", {"params": BASE, "n": 1}),
        ("simulate", {"params": BASE, "placement": "hex"}),
        ("verify", {"params": BASE, "stopping": "sometimes"}),
    ],
)
def test_config_errors(tmp_path, command, config):
    assert run(tmp_path, command, config)[0] == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2


def test_seed_flag_rules(tmp_path):
    assert run(tmp_path, "solve", {"params": BASE}, "--seed", "3")[0] == 2
    assert run(tmp_path, "synth", {"params": BASE, "synth": {"n": 20}}, "--seed", "-1")[0] == 2


def test_set_override(tmp_path):
    rc, out = run(tmp_path, "solve", {"params": BASE}, "--set", "params.c=2.0", "--set", "params.attention.kind=log1p")
    assert rc == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["params"]["c"] == 2.0
    assert run(tmp_path, "solve", {"params": BASE}, "--set", "nokey")[0] == 2


def test_solve_het(tmp_path):
    rc, out = run(tmp_path, "solve-het", {"params": {**BASE, "attention": {"kind": "log1p"}}, "grid_size": 41})
    assert rc == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["best_response_residual"] < 1e-6
    rc, out = run(tmp_path, "solve-het", {"params": LOG_EXPENSIVE, "grid_size": 21}, name="c2.json")
    assert rc == 0
    assert all(float(r["threshold"]) == 0.0 for r in read_csv(out / "profile.csv"))


def test_solve_het_non_convergence(tmp_path):
    cfg = {"params": {**BASE, "attention": {"kind": "log1p"}}, "grid_size": 21, "max_iter": 2}
    assert run(tmp_path, "solve-het", cfg)[0] == 3


def test_simulate_two_agents_matches_sweep(tmp_path):
    rc, out = run(tmp_path, "simulate", {"params": BASE, "n": 2, "placement": "even_grid"})
    assert rc == 0
    state = init_population(2, 0, ModelParams(0.8, 0.2), "even_grid")
    direct = sweep(state, np.random.default_rng(0))
    barter = [r for r in read_csv(out / "edges.csv") if r["kind"] == "barter"]
    assert len(barter) == 2 * len(direct.barter_edges())
    agents = read_csv(out / "agents.csv")
    assert [float(a["ability"]) for a in agents] == [0.25, 0.75]


def test_simulate_uses_solved_equilibrium(tmp_path):
    rc, solved = run(tmp_path, "solve", {"params": BASE, "grid_size": 11})
    assert rc == 0
    cfg = {"equilibrium": str(solved / "equilibrium.json"), "n": 120}
    rc, out = run(tmp_path, "simulate", cfg, "--seed", "4", name="sim.json")
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["inputs"]["equilibrium"]["sha256"] == hashlib.sha256(
        (solved / "equilibrium.json").read_bytes()
    ).hexdigest()
    assert manifest["config"]["seed"] == 4


def test_simulate_non_convergence(tmp_path):
    assert run(tmp_path, "simulate", {"params": BASE, "n": 200, "max_sweeps": 1})[0] == 3


def test_missing_equilibrium_file(tmp_path):
    assert run(tmp_path, "verify", {"equilibrium": "absent.json"})[0] == 4


def three_node(tmp_path):
    (tmp_path / "edges.csv").write_text("src,dst\nx,y\nx,z\ny,x\n")
    (tmp_path / "users.csv").write_text(
        "id,followers_count,followees_count,tweets,likes,tenure_days,list_count\n"
        "x,1,2,10,0,100,5\ny,1,1,10,0,200,50\nz,1,0,10,0,300,500\n"
    )
    return {"edges": "edges.csv", "users": "users.csv", "filters": {"min_followees": None, "max_followees": None}}


def test_analyze_three_node_fixture(tmp_path):
    rc, out = run(tmp_path, "analyze", {**three_node(tmp_path), "bins": 3})
    assert rc == 0
    rows = {r["id"]: r for r in read_csv(out / "network_stats.csv")}
    assert {k: (rows[k]["followers"], rows[k]["followees"], rows[k]["reciprocal"]) for k in rows} == {
        "x": ("1", "2", "1"),
        "y": ("1", "1", "1"),
        "z": ("1", "0", "0"),
    }
    assert float(rows["x"]["ratio"]) == 0.5 and rows["z"]["ratio"] == "nan"
    assert [float(rows[k]["percentile"]) for k in "xyz"] == pytest.approx([1 / 3, 2 / 3, 1.0])
    regs = json.loads((out / "regressions.json").read_text())
    assert regs["graph"]["ratio_undefined"] == 1
    series = [r for r in read_csv(out / "percentile_series.csv") if r["metric"] == "followees"]
    assert [float(r["mean"]) for r in series] == [2.0, 1.0, 0.0]


def test_analyze_without_users(tmp_path):
    cfg = three_node(tmp_path)
    cfg["users"] = None
    assert run(tmp_path, "analyze", cfg)[0] == 4
    cfg["users"] = "missing.csv"
    assert run(tmp_path, "analyze", cfg, name="m.json")[0] == 4


def test_analyze_filters_everyone(tmp_path):
    cfg = three_node(tmp_path)
    cfg["filters"] = {"min_followees": 10}
    assert run(tmp_path, "analyze", cfg)[0] == 4


def outputs(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


@pytest.mark.parametrize(
    "command, config",
    [
        ("solve", {"params": BASE, "grid_size": 101, "verify": {"n_grid": 100}}),
        ("verify", {"params": BASE, "n_grid": 100}),
        ("simulate", {"params": BASE, "n": 150, "seed": 2}),
        ("synth", {"params": BASE, "synth": {"n": 200}, "seed": 2}),
        ("solve-het", {"params": {**BASE, "attention": {"kind": "log1p"}}, "grid_size": 31}),
    ],
)
def test_threads_do_not_change_outputs(tmp_path, command, config):
    rc1, out1 = run(tmp_path, command, config, "--threads", "1", name="a.json")
    rc4, out4 = run(tmp_path, command, config, "--threads", "4", name="b.json")
    assert rc1 == rc4 == 0
    assert outputs(out1) == outputs(out4)


def test_synth_then_analyze(tmp_path):
    rc, synth_out = run(tmp_path, "synth", {"params": BASE, "synth": {"n": 400, "noise": 0.0}, "seed": 1})
    assert rc == 0
    cfg = {"edges": str(synth_out / "edges.csv"), "users": str(synth_out / "users.csv"), "bins": 20}
    rc, out = run(tmp_path, "analyze", cfg, name="an.json")
    assert rc == 0
    truth = {r["id"]: float(r["ability"]) for r in read_csv(synth_out / "truth.csv")}
    stats = read_csv(out / "network_stats.csv")
    assert len(stats) == 400
    for r in stats:
        assert float(r["percentile"]) == pytest.approx(truth[r["id"]] + 0.5 / 400, abs=1e-12)


@pytest.mark.parametrize(
    "name, command",
    [
        ("solve", "solve"),
        ("solve_five_clubs", "solve"),
        ("solve_het", "solve-het"),
        ("simulate", "simulate"),
        ("synth", "synth"),
        ("analyze", "analyze"),
        ("verify", "verify"),
    ],
)
def test_shipped_configs_are_valid(name, command):
    from pathlib import Path

    from attnbarter.cli import DEFAULTS, _merge

    doc = json.loads((Path(__file__).parent.parent / "configs" / f"{name}.json").read_text())
    merged = _merge(DEFAULTS[command], doc)
    if merged.get("params"):
        ModelParams.from_mapping(merged["params"])
