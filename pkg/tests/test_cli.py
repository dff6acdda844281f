import json
from pathlib import Path

import pytest

from wctrlsim.cli import main

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"


@pytest.fixture()
def tiny_config(tmp_path):
    raw = {
        "kind": "remote-control",
        "seed": 11,
        "duration_s": 0.5,
        "nodes": [
            {"id": 0, "role": "controller"},
            {"id": 1, "role": "robot", "start_pose": [0, 0, 0], "path": [[5.0, 0.0]]},
        ],
        "channel": {"default_per": 0.1},
        "run_to_completion": False,
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


def test_run_writes_trace_and_metrics(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(tiny_config), "--out", str(out)]) == 0
    assert (out / "trace.csv").exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["kind"] == "remote-control"
    assert 0.0 <= metrics["delivery"]["cmd"]["ratio"] <= 1.0
    assert "completed" not in capsys.readouterr().err


def test_run_outputs_are_deterministic(tiny_config, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(tiny_config), "--out", str(out_a)]) == 0
    assert main(["run", str(tiny_config), "--out", str(out_b)]) == 0
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()
    assert (out_a / "metrics.json").read_bytes() == (out_b / "metrics.json").read_bytes()


def test_seed_override_changes_output(tiny_config, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["run", str(tiny_config), "--out", str(out_a)])
    main(["run", str(tiny_config), "--out", str(out_b), "--seed", "999"])
    assert (out_a / "trace.csv").read_bytes() != (out_b / "trace.csv").read_bytes()


def test_invalid_config_is_rejected_with_exit_code_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "kind": "remote-control", "seed": 1,
        "nodes": [{"id": 0, "role": "controller"}],
    }), encoding="utf-8")
    assert main(["run", str(bad), "--out", str(tmp_path / "out")]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_node_in_link_is_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "kind": "remote-control", "seed": 1,
        "nodes": [
            {"id": 0, "role": "controller"},
            {"id": 1, "role": "robot", "start_pose": [0, 0, 0], "path": [[1, 0]]},
        ],
        "channel": {"links": [{"from": 0, "to": 7, "per": 0.5}]},
    }), encoding="utf-8")
    assert main(["run", str(bad), "--out", str(tmp_path / "out")]) == 2
    assert "unknown node" in capsys.readouterr().err


def test_plot_data_cycle_cdf(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", str(tiny_config), "--out", str(out)])
    capsys.readouterr()  # drop the run summary line
    assert main(["plot-data", str(out / "trace.csv"), "--metric", "cycle-cdf"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "latency_us,fraction"
    fractions = [float(line.split(",")[1]) for line in lines[1:]]
    assert fractions == sorted(fractions)
    assert fractions[-1] == pytest.approx(1.0)


def test_plot_data_path(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", str(tiny_config), "--out", str(out)])
    capsys.readouterr()  # drop the run summary line
    assert main(["plot-data", str(out / "trace.csv"), "--metric", "path"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "time_us,node,x,y,cross_track_m"
    assert len(lines) > 10


def test_plot_data_gap(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(SCENARIO_DIR / "leader_follower_l.json"), "--out", str(out),
                 "--seed", "13"]) == 0
    assert main(["plot-data", str(out / "trace.csv"), "--metric", "gap",
                 "--out", str(tmp_path / "gap.csv")]) == 0
    lines = (tmp_path / "gap.csv").read_text().strip().splitlines()
    assert lines[0] == "time_us,gap_m"
    gaps = [float(line.split(",")[1]) for line in lines[1:]]
    assert min(gaps) > 0.2


def test_sweep_grid(tiny_config, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({
        "parameters": {"channel.default_per": [0.0, 0.5]},
        "seeds": [1, 2],
    }), encoding="utf-8")
    out = tmp_path / "sweep"
    assert main(["sweep", str(tiny_config), "--grid", str(grid), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 5  # header + 2 pers x 2 seeds
    header = lines[0].split(",")
    assert "cmd_delivery_ratio" in header
