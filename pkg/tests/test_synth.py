import json
import math

import numpy as np
import pytest

from accrisk.featurize import featurize_city
from accrisk.ingest import deduplicate
from accrisk.synth import SynthScenario, analytic_rate, generate, rule_predictions, write_city


def small(**kw):
    return SynthScenario(**{"seed": 5, "rows": 2, "cols": 2, "weeks": 3, "duplicates": 20, **kw})


def test_same_seed_same_files(tmp_path):
    a = write_city(generate(small()), tmp_path / "a")
    b = write_city(generate(small()), tmp_path / "b")
    assert a["files"] == b["files"]
    c = write_city(generate(small(seed=6)), tmp_path / "c")
    assert c["files"]["events.csv"] != a["files"]["events.csv"]
    on_disk = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert on_disk["files"] == a["files"]


def test_window_counts_follow_the_law():
    s = small()
    city = generate(s)
    m = city.manifest
    assert m["intervals"] == 3 * 7 * 96
    assert m["windows_per_region"] == m["intervals"] - 8
    events, _ = deduplicate(city.events)
    entries, regions = featurize_city(events, s.grid, s.start_s, s.n_intervals)
    assert len(regions) == m["regions"] == 4
    assert len(entries) == m["expected_windows"]


@pytest.mark.parametrize("rule", ["traffic+poi", "traffic", "traffic+time"])
def test_accident_rate_within_three_sigma(rule):
    s = small(rule=rule, seed=9)
    m = generate(s).manifest
    n = m["expected_windows"]
    p = analytic_rate(s)
    assert m["analytic_accident_rate"] == p
    observed = m["accident_windows"] / n
    assert abs(observed - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_planted_duplicates_are_exactly_removed():
    city = generate(small())
    out, rep = deduplicate(city.events)
    assert rep.duplicates_removed == len(city.manifest["planted_duplicates"]) == 20
    survivors = {e.id for e in out}
    assert not survivors & {d["duplicate"] for d in city.manifest["planted_duplicates"]}
    assert len(out) == city.manifest["expected_survivors"]


def test_labels_follow_rule_up_to_noise():
    s = small(seed=2)
    city = generate(s)
    events, _ = deduplicate(city.events)
    entries, regions = featurize_city(events, s.grid, s.start_s, s.n_intervals)
    cells = np.array([r.row * s.cols + r.col for r in regions])
    rule = rule_predictions(city, cells[entries.region], entries.start)
    disagree = np.mean(rule != entries.label)
    n = len(entries)
    assert abs(disagree - s.noise) <= 3 * math.sqrt(s.noise * (1 - s.noise) / n)


def test_scenario_validation():
    with pytest.raises(ValueError):
        SynthScenario(rule="moon")
