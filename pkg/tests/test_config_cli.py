import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from accrisk import config as config_mod
from accrisk.cli import main
from accrisk.config import ModelConfig, PipelineConfig, SplitConfig
from accrisk.errors import ConfigError

# ---------------------------------------------------------------------------
# config documents


def test_minimal_document_uses_defaults():
    cfg = config_mod.parse("files:\n  events: e.csv\n", "/data")
    assert cfg.files.events == "e.csv" and cfg.path("events") == Path("/data/e.csv")
    assert cfg.grid.cell_size == 5000 and cfg.interval_minutes == 15 and cfg.window == 8
    assert cfg.sampling_probability == 0.02 and cfg.dedup.distance_m == 250
    assert cfg.model.head_sizes == (512, 256, 64, 2) and cfg.training.epochs == 60
    assert cfg.split.train_weeks == 10 and cfg.split.val_fraction == 0.1


def test_round_trip():
    cfg = PipelineConfig(city="x", start="2018-06-04T00:00:00Z", utc_offset=-4, seeds=(4, 5),
                         split=SplitConfig(3, 1, 0.2), model=ModelConfig("logreg", penalty="l1",
                                                                        lam=0.01))
    assert config_mod.parse(config_mod.render(cfg)) == cfg
    assert config_mod.parse(config_mod.render(PipelineConfig())) == PipelineConfig()


@pytest.mark.parametrize("doc,path", [
    ("grid:\n  cell_size: -5\n", "grid.cell_size"),
    ("model:\n  head_sizes: [512, 256, 64, 3]\n", "model.head_sizes"),
    ("training:\n  epochs: 5\n  patience: 5\n", "training.patience"),
    ("bogus: 1\n", "bogus"),
    ("files:\n  evnts: a.csv\n", "files.evnts"),
    ("sampling_probability: 0\n", "sampling_probability"),
    ("seeds: []\n", "seeds"),
    ("window: 6\n", "window"),
    ("start: yesterday\n", "start"),
    ("dedup:\n  minutes: ten\n", "dedup.minutes"),
    ("ablation:\n  model:\n    dnn_hidden: [8, 8]\n", "ablation.model.dnn_hidden"),
    ("- just\n- a list\n", "<root>"),
])
def test_config_errors_name_the_field(doc, path):
    with pytest.raises(ConfigError) as exc:
        config_mod.parse(doc)
    assert exc.value.field == path
    assert exc.value.exit_code == 2


def test_bad_yaml():
    with pytest.raises(ConfigError):
        config_mod.parse("a: [1, 2\n")


# ---------------------------------------------------------------------------
# command line


def test_missing_config_file(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_config_required(tmp_path):
    assert main(["integrate", "--out", str(tmp_path)]) == 2


def test_unknown_scenario_key(tmp_path):
    (tmp_path / "s.yaml").write_text("seeed: 3\n")
    assert main(["synth", "--config", str(tmp_path / "s.yaml"), "--out", str(tmp_path)]) == 2


def test_gradcheck_command(tmp_path):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "gradcheck.json").read_text())
    assert report["max_relative_error"] < 1e-4 and report["blocks"]


def test_evaluate_before_featurize(small_config, tmp_path, capsys):
    assert main(["evaluate", "--config", str(small_config), "--out", str(tmp_path / "o")]) == 3
    assert "StageOrderError" in capsys.readouterr().err


def test_missing_input_file(small_config, tmp_path):
    doc = yaml.safe_load(small_config.read_text())
    doc["files"]["events"] = "missing.csv"
    bad = small_config.parent / "bad.yaml"
    bad.write_text(yaml.safe_dump(doc))
    assert main(["integrate", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "accrisk", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "gradcheck" in res.stdout


# ---------------------------------------------------------------------------
# end to end on the small synthetic city


@pytest.fixture(scope="module")
def pipeline_run(small_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    for cmd in ("integrate", "calibrate", "annotate", "featurize", "train", "evaluate", "ablate"):
        assert main([cmd, "--config", str(small_config), "--out", str(out)]) == 0, cmd
    return out


def test_stage_outputs(pipeline_run, small_config):
    out = pipeline_run
    manifest = json.loads((small_config.parent / "manifest.json").read_text())
    dedup = json.loads((out / "dedup_report.json").read_text())
    assert dedup["duplicates_removed"] == len(manifest["planted_duplicates"])
    thresholds = json.loads((out / "thresholds.json").read_text())
    assert thresholds["traffic-signal"] == manifest["planted_radii"]["intersection"]
    assert thresholds["junction"] == manifest["planted_radii"]["junction"]
    info = json.loads((out / "featurize.json").read_text())
    assert info["windows"] == manifest["expected_windows"]
    assert (out / "models" / "dap_seed3.ckpt").read_bytes()[:8] == b"ACRCKPT\0"
    report = (out / "report.csv").read_text().splitlines()
    assert report[0] == "configuration,class,precision,recall,f1,support,seed"
    assert any(line.startswith("dap,accident,") for line in report)
    ablation = (out / "ablation.txt").read_text()
    assert "dnn:only-one(traffic)" in ablation and "dnn:all-but-one(time)" in ablation
    recorded = json.loads((out / "run_manifest.json").read_text())
    assert set(recorded) == {"integrate", "calibrate", "annotate", "featurize", "train",
                             "evaluate", "ablate"}


def test_rerun_is_byte_identical(pipeline_run, small_config):
    out = pipeline_run
    before = json.loads((out / "run_manifest.json").read_text())
    for cmd in ("integrate", "featurize", "train", "evaluate"):
        assert main([cmd, "--config", str(small_config), "--out", str(out)]) == 0
    after = json.loads((out / "run_manifest.json").read_text())
    for stage in ("integrate", "featurize", "train", "evaluate"):
        assert after[stage] == before[stage]


def test_seed_override(small_config, pipeline_run, tmp_path):
    out = tmp_path / "o"
    for cmd in ("integrate", "featurize", "train"):
        assert main([cmd, "--config", str(small_config), "--out", str(out), "--seed", "11"]) == 0
    assert (out / "models" / "dap_seed11.ckpt").exists()
