import copy
import json

import pytest

TINY = {
    "generator": {"K": 2, "J": 3, "N": 600, "seed": 0},
    "split": {"train_frac": 0.5, "seed": 0},
    "train": {"epochs": 2, "batch_size": 64, "lr": 0.001},
    "models": [
        {"name": "sevae", "kind": "sevae", "params": {"hidden": [16, 16], "d_c": 4}},
        {"name": "vae", "kind": "vae", "params": {"hidden": [16, 16]}},
    ],
    "sample_sizes": [150, 300],
    "seeds": [0, 1, 2],
    "ablation": {"sample_sizes": [150], "seeds": [0], "base": {"hidden": [16, 16], "d_c": 4}},
    "metrics": {"bins": 5},
    "output_dir": "runs",
}


@pytest.fixture
def tiny_dict():
    """A fresh copy of a config small enough to sweep in a few seconds."""
    return copy.deepcopy(TINY)


@pytest.fixture
def tiny_config_path(tmp_path, tiny_dict):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_dict))
    return path


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
