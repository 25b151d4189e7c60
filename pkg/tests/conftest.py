import sys
from pathlib import Path

import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent))

SMALL_SCENARIO = {"seed": 3, "rows": 2, "cols": 2, "weeks": 3, "duplicates": 20}

# small model and training sizes so the whole pipeline runs in seconds
SMALL_OVERRIDES = {
    "sampling_probability": 0.2,
    "split": {"train_weeks": 1, "test_weeks": 2},
    "thresholds": {"calibrate": True},
    "model": {"kind": "dap", "embedding_dim": 8, "lstm_hidden": 8, "branch_dense": 8,
              "head_sizes": [16, 12, 8, 2]},
    "training": {"epochs": 3, "patience": 1},
    "ablation": {"model": {"kind": "dnn", "dnn_hidden": [8, 8, 8]},
                 "categories": ["traffic", "time"]},
}


def make_small_city(root: Path) -> Path:
    """Generate the small synthetic city through the CLI and shrink its config."""
    from accrisk.cli import main

    root.mkdir(parents=True, exist_ok=True)
    (root / "scenario.yaml").write_text(yaml.safe_dump(SMALL_SCENARIO))
    assert main(["synth", "--config", str(root / "scenario.yaml"), "--out", str(root)]) == 0
    doc = yaml.safe_load((root / "config.yaml").read_text())
    for key, value in SMALL_OVERRIDES.items():
        if isinstance(value, dict):
            doc.setdefault(key, {}).update(value)
        else:
            doc[key] = value
    (root / "small.yaml").write_text(yaml.safe_dump(doc))
    return root / "small.yaml"


@pytest.fixture(scope="session")
def small_config(tmp_path_factory):
    return make_small_city(tmp_path_factory.mktemp("city"))
