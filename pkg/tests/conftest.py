import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # tests/oracles.py

from wctrlsim.scenario import config_from_dict, load_config
from wctrlsim.simulation import run_scenario

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_remote_config(**overrides):
    """One controller driving one robot on a long straight path; knobs via overrides."""
    raw = {
        "kind": "remote-control",
        "seed": 1,
        "duration_s": 5.0,
        "nodes": [
            {"id": 0, "role": "controller"},
            {"id": 1, "role": "robot", "start_pose": [0.0, 0.0, 0.0],
             "path": [[5.0, 0.0]]},
        ],
        "channel": {"default_per": 0.0},
        "run_to_completion": False,
    }
    raw.update(overrides)
    return config_from_dict(raw)


@pytest.fixture(scope="session")
def square_config():
    return load_config(SCENARIO_DIR / "remote_control_square.json")


@pytest.fixture(scope="session")
def square_result(square_config):
    return run_scenario(square_config)


@pytest.fixture(scope="session")
def platoon_config():
    return load_config(SCENARIO_DIR / "leader_follower_l.json")


@pytest.fixture(scope="session")
def platoon_result(platoon_config):
    return run_scenario(platoon_config)
