"""One test per acceptance criterion; each prints a single PASS/FAIL line.

Tolerances and runtime limits are pinned as module constants.
"""

import filecmp
import math
import random
import time
from datetime import datetime, timedelta, timezone
from fractions import Fraction

import numpy as np
import pytest

from accrisk.augment import CANDIDATE_RADII, calibrate_threshold
from accrisk.cli import main
from accrisk.evaluate import (AblationSpec, ConfusionCounts, ablate, prf1, summarize,
                              weighted_f1_exact)
from accrisk.featurize import (N_FEATURES, N_STATICS, STEP_WIDTH, TIME_COLS, WEATHER_FLAG_COLS,
                               DatasetSplit, NormalizationStats, SampleSet, featurize_city,
                               make_windows, negative_sample, temporal_split)
from accrisk.geo import GeoPoint
from accrisk.ingest import deduplicate
from accrisk.models import TrainConfig, build_logreg, build_model, predict_labels, train
from accrisk.nnkit.gradcheck import grad_check
from accrisk.nnkit.layers import LSTM, BatchNorm, Dense, ReLU, Sigmoid, Tanh, cross_entropy, softmax
from accrisk.nnkit.rng import RngStream
from accrisk.solar import DAYLIGHT_SYSTEMS, period_of_day, solar_elevation
from accrisk.synth import (SynthScenario, calibration_corpus, dedup_corpus, generate,
                           rule_predictions)
from conftest import make_small_city
from oracles import apparent_solar_hours, rational_prf1, rational_weighted

GRAD_TOL = 1e-4
GRAD_SECONDS = 120
DEDUP_CORPORA, DEDUP_SHUFFLES, DEDUP_SECONDS = 50, 10, 60
CALIBRATION_SECONDS = 60
PLANTED_RADII = (30, 50, 100)
SHAPE_ENTRIES = 10_000
LEARN_RATIO, LEARN_EPOCHS, LEARN_SECONDS = 0.85, 60, 15 * 60
LR_ACCURACY = 0.95
ABLATION_GAP, TIME_DROP = 0.2, 0.05
METRIC_MATRICES = 100
SAMPLING_P, SAMPLING_N = 0.02, 100_000
SOLAR_PAIRS, SUNRISE_MINUTES = 1000, 10.0


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for the criterion, then assert."""
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail
    return emit


# ---------------------------------------------------------------------------
# 1. gradient integrity


class _LayerModel:
    """Wraps one layer (or a stack ending in softmax+CE) for grad_check."""

    def __init__(self, layers, x):
        self.layers, self.x = layers, x

    def parameters(self):
        out = {"input": self.x}
        for k, layer in enumerate(self.layers):
            out.update({f"{k}.{n}": v for n, v in layer.params.items()})
        return out

    def loss_and_grads(self, labels, R, check=False, need_grads=True):
        h = self.x
        for layer in self.layers:
            h = layer.forward(h, True)
        if R is None:
            loss, dh = cross_entropy(softmax(h), labels)
        else:
            loss, dh = float(np.sum(R * h)), R
        if not need_grads:
            return loss, None
        for layer in self.layers:
            layer.zero_grad()
        for layer in reversed(self.layers):
            dh = layer.backward(dh)
        grads = {"input": dh}
        for k, layer in enumerate(self.layers):
            grads.update({f"{k}.{n}": layer.grads[n] for n in layer.params})
        return loss, grads


def test_criterion_1_gradient_integrity(verdict):
    t = time.time()
    rng = RngStream(1)
    bn = BatchNorm(3)
    bn.track_running = False
    bn.params["gamma"][...] = rng.normal(size=3)
    R = lambda shape: np.random.default_rng(2).normal(size=shape)  # noqa: E731
    cases = {
        "dense": (_LayerModel([Dense(4, 2, rng)], rng.normal(size=(3, 4))), R((3, 2))),
        "sigmoid": (_LayerModel([Sigmoid()], rng.normal(size=(3, 4))), R((3, 4))),
        "relu": (_LayerModel([ReLU()], rng.normal(size=(3, 4)) + 0.05), R((3, 4))),
        "tanh": (_LayerModel([Tanh()], rng.normal(size=(3, 4))), R((3, 4))),
        "softmax+ce": (_LayerModel([Dense(4, 2, rng)], rng.normal(size=(5, 4))), None),
        "batchnorm": (_LayerModel([bn], rng.normal(size=(4, 3))), R((4, 3))),
        "lstm": (_LayerModel([LSTM(3, 5, 2, rng)], rng.normal(size=(2, 3, 3))), R((2, 5))),
    }
    worst = {}
    for name, (model, r) in cases.items():
        labels = np.array([0, 1, 1, 0, 1])[:model.x.shape[0]]
        worst[name] = max(grad_check(model, (labels, r)).values())
    toy = build_model("dap", region_count=3, seed=0, embedding_dim=8, lstm_hidden=8,
                      branch_dense=8, head_sizes=(16, 12, 8, 2))
    batch = np.random.default_rng(3).normal(size=(4, N_FEATURES))
    worst["toy DAP"] = max(grad_check(toy, (batch, np.array([0, 1, 2, 1]),
                                            np.array([1, 0, 1, 0]))).values())
    elapsed = time.time() - t
    ok = max(worst.values()) < GRAD_TOL and elapsed < GRAD_SECONDS
    verdict(1, ok, f"max relative error {max(worst.values()):.2e} over "
                   f"{', '.join(worst)} (< {GRAD_TOL:g}); {elapsed:.1f}s (< {GRAD_SECONDS}s)")


# ---------------------------------------------------------------------------
# 2. dedup correctness


def test_criterion_2_dedup_correctness(verdict):
    t = time.time()
    bad = []
    for seed in range(DEDUP_CORPORA):
        events, expected = dedup_corpus(seed)
        out, _ = deduplicate(events)
        if sorted(e.id for e in out) != expected:
            bad.append((seed, "survivors"))
        r = random.Random(seed)
        for _ in range(DEDUP_SHUFFLES):
            shuffled = events[:]
            r.shuffle(shuffled)
            if deduplicate(shuffled)[0] != out:
                bad.append((seed, "order"))
                break
    elapsed = time.time() - t
    verdict(2, not bad and elapsed < DEDUP_SECONDS,
            f"{DEDUP_CORPORA} corpora x {DEDUP_SHUFFLES} shuffles, mismatches {bad or 'none'}; "
            f"{elapsed:.1f}s (< {DEDUP_SECONDS}s)")


# ---------------------------------------------------------------------------
# 3. threshold calibration recovery


def test_criterion_3_calibration_recovery(verdict):
    t = time.time()
    results = []
    for r_star in PLANTED_RADII:
        for family in ("intersection", "junction"):
            acc, pois = calibration_corpus(r_star, family, seed=r_star)
            res = calibrate_threshold(acc, pois, family)
            k = CANDIDATE_RADII.index(r_star)
            s = res.jaccard_scores
            unimodal = (all(a <= b for a, b in zip(s[:k], s[1:k + 1]))
                        and all(a >= b for a, b in zip(s[k:], s[k + 1:])))
            results.append((r_star, family, res.best_radius, unimodal))
    elapsed = time.time() - t
    ok = all(b == r and u for r, _, b, u in results) and len(CANDIDATE_RADII) == 17
    verdict(3, ok and elapsed < CALIBRATION_SECONDS,
            "recovered " + ", ".join(f"{r}->{b}{'' if u else ' (not unimodal)'}"
                                     for r, _, b, u in results)
            + f"; {elapsed:.1f}s (< {CALIBRATION_SECONDS}s)")


# ---------------------------------------------------------------------------
# 4. feature-shape law


def test_criterion_4_feature_shape_law(verdict):
    counts_ok = all(len(make_windows(np.zeros((T, STEP_WIDTH)), np.zeros(N_STATICS))) == T - 8
                    for T in range(9, 101))
    s = SynthScenario(seed=4, rows=2, cols=2, weeks=4, duplicates=20)
    city = generate(s)
    events, _ = deduplicate(city.events)
    entries, _ = featurize_city(events, s.grid, s.start_s, s.n_intervals, city.weather,
                                city.pois, city.vectors, utc_offset_hours=s.utc_offset)
    pick = np.random.default_rng(0).choice(len(entries), SHAPE_ENTRIES, replace=False)
    sample = entries.subset(np.sort(pick))
    widths = {e.flatten().size for e in sample}
    split = temporal_split(sample, train_weeks=2, test_weeks=2)
    bad = 0
    for part in (sample.X, split.train.X, split.test.X):
        dyn = part[:, N_STATICS:].reshape(-1, 8, STEP_WIDTH)
        onehot = dyn[..., TIME_COLS[1:6]]
        flags = dyn[..., np.r_[TIME_COLS[0], TIME_COLS[6], WEATHER_FLAG_COLS]]
        bad += int(np.sum(onehot.sum(axis=-1) != 1) + np.sum(~np.isin(onehot, (0, 1)))
                   + np.sum(~np.isin(flags, (0, 1))))
    ok = widths == {305} and N_FEATURES == 113 + 8 * 24 and counts_ok and bad == 0
    verdict(4, ok, f"widths {sorted(widths)}, T-8 law for T in [9,100] "
                   f"{'holds' if counts_ok else 'fails'}, {bad} indicator violations "
                   f"over {SHAPE_ENTRIES} entries")


# ---------------------------------------------------------------------------
# 5. learnability


@pytest.mark.slow
def test_criterion_5_learnability(verdict):
    t = time.time()
    s = SynthScenario(seed=0)  # traffic+poi rule, 5% label noise
    city = generate(s)
    events, _ = deduplicate(city.events)
    entries, regions = featurize_city(events, s.grid, s.start_s, s.n_intervals, city.weather,
                                      city.pois, city.vectors, utc_offset_hours=s.utc_offset)
    sampled = negative_sample(entries, 0.15, 0)
    split = temporal_split(sampled)
    cells = np.array([r.row * s.cols + r.col for r in regions])
    bayes = summarize(rule_predictions(city, cells[split.test.region], split.test.start),
                      split.test.label)["classes"]["accident"].f1
    tc = TrainConfig(epochs=LEARN_EPOCHS, early_stopping_patience=5, batch=256, seeds=(0,))
    scores = {}
    for kind in ("dap", "dnn"):
        m = build_model(kind, split.layout, len(regions), seed=0)
        m, hist = train(m, split, tc, 0)
        f1 = summarize(predict_labels(m, split.test), split.test.label)["classes"]["accident"].f1
        scores[kind] = (f1 / bayes, len(hist))
    # logistic regression on a linearly separable fixture
    rng = np.random.default_rng(0)
    X = np.zeros((600, N_FEATURES))
    X[:, :2] = rng.normal(size=(600, 2))
    y = (X[:, 0] - 0.5 * X[:, 1] > 0).astype(int)
    X[:, :2] += np.where(y[:, None] == 1, 0.25, -0.25)
    sep = SampleSet(np.zeros(600), np.arange(600), y, X)
    w = N_FEATURES
    lr_split = DatasetSplit(sep, sep.subset(np.arange(540, 600)), sep,
                            NormalizationStats(np.zeros(w), np.ones(w), np.zeros(w)))
    lr, _ = train(build_logreg(), lr_split, TrainConfig(epochs=30, seeds=(0,)))
    acc = float(np.mean(predict_labels(lr, sep) == y))
    elapsed = time.time() - t
    ok = (all(r >= LEARN_RATIO and n <= LEARN_EPOCHS for r, n in scores.values())
          and acc >= LR_ACCURACY and elapsed < LEARN_SECONDS)
    verdict(5, ok, f"{len(sampled)} entries, Bayes F1 {bayes:.3f}; "
                   + ", ".join(f"{k} ratio {r:.3f} in {n} epochs" for k, (r, n) in scores.items())
                   + f" (>= {LEARN_RATIO}); LR accuracy {acc:.3f} (>= {LR_ACCURACY}); "
                   f"{elapsed:.0f}s (< {LEARN_SECONDS}s)")


# ---------------------------------------------------------------------------
# 6. ablation discrimination


def _ablation_fixture(rule, p):
    s = SynthScenario(seed=1, rows=2, cols=2, weeks=6, rule=rule, noise=0.02, duplicates=50)
    city = generate(s)
    events, _ = deduplicate(city.events)
    entries, regions = featurize_city(events, s.grid, s.start_s, s.n_intervals, city.weather,
                                      city.pois, city.vectors, utc_offset_hours=s.utc_offset)
    split = temporal_split(negative_sample(entries, p, 0), train_weeks=4, test_weeks=2)

    def builder(layout, seed):
        return build_model("dap-noembed", layout, len(regions), seed, lstm_hidden=32,
                           branch_dense=32, head_sizes=(64, 32, 16, 2))
    return split, builder


@pytest.mark.slow
def test_criterion_6_ablation_discrimination(verdict):
    tc = TrainConfig(epochs=60, early_stopping_patience=5, batch=256, seeds=(0, 1, 2))
    split, builder = _ablation_fixture("traffic", 1.0)
    traffic = ablate(split, AblationSpec("only-one", ("traffic",)), builder, tc).accident_f1
    weather = ablate(split, AblationSpec("only-one", ("weather",)), builder, tc).accident_f1
    split, builder = _ablation_fixture("traffic+time", 0.3)
    full = ablate(split, AblationSpec("all-but-one", ()), builder, tc).accident_f1
    no_time = ablate(split, AblationSpec("all-but-one", ("time",)), builder, tc).accident_f1
    ok = traffic - weather >= ABLATION_GAP and full - no_time >= TIME_DROP
    verdict(6, ok, f"only-one(traffic) {traffic:.3f} vs only-one(weather) {weather:.3f} "
                   f"(gap >= {ABLATION_GAP}); time-rule fixture all {full:.3f} vs "
                   f"all-but-one(time) {no_time:.3f} (drop >= {TIME_DROP})")


# ---------------------------------------------------------------------------
# 7. metric oracle


def test_criterion_7_metric_oracle(verdict):
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(METRIC_MATRICES):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 1000, 4))
        per = prf1(ConfusionCounts(tp, fp, tn, fn))
        for cls, args in (("accident", (tp, fp, fn)), ("non-accident", (tn, fn, fp))):
            m = per[cls]
            mismatches += (m.precision_q, m.recall_q, m.f1_q) != rational_prf1(*args)
        f1s = [per["accident"].f1_q, per["non-accident"].f1_q]
        sup = [tp + fn, tn + fp]
        if sum(sup):
            mismatches += weighted_f1_exact(f1s, sup) != rational_weighted(f1s, sup)
    example = prf1(ConfusionCounts(5, 5, 0, 0))["accident"].f1_q
    verdict(7, mismatches == 0 and example == Fraction(2, 3),
            f"{mismatches} mismatches on {METRIC_MATRICES} random matrices; "
            f"tp=5 fp=5 fn=0 gives F1 {example}")


# ---------------------------------------------------------------------------
# 8. determinism


def test_criterion_8_determinism(verdict, tmp_path):
    outs = []
    for run in ("a", "b"):
        cfg = make_small_city(tmp_path / f"city_{run}")
        out = tmp_path / f"out_{run}"
        for cmd in ("integrate", "calibrate", "annotate", "featurize", "train", "evaluate"):
            assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    files = ["events.csv", "samples.csv", "report.csv", "report.txt", "thresholds.json",
             "annotations.csv", "models/dap_seed3.ckpt", "models/dap_seed3_history.csv",
             "run_manifest.json"]
    same = {f: filecmp.cmp(outs[0] / f, outs[1] / f, shallow=False) for f in files}
    city_same = filecmp.cmp(tmp_path / "city_a" / "events.csv", tmp_path / "city_b" / "events.csv",
                            shallow=False)
    verdict(8, all(same.values()) and city_same,
            f"{sum(same.values())}/{len(files)} pipeline outputs byte-identical across two runs"
            f"{'' if city_same else '; synthetic inputs differ'}")


# ---------------------------------------------------------------------------
# 9. negative sampling


def test_criterion_9_negative_sampling(verdict):
    s = SampleSet(np.zeros(SAMPLING_N), np.arange(SAMPLING_N), np.zeros(SAMPLING_N),
                  np.zeros((SAMPLING_N, 1)))
    kept = len(negative_sample(s, SAMPLING_P, 0))
    mean = SAMPLING_N * SAMPLING_P
    sd = math.sqrt(SAMPLING_N * SAMPLING_P * (1 - SAMPLING_P))
    verdict(9, abs(kept - mean) <= 3 * sd,
            f"kept {kept} of {SAMPLING_N} negatives, expected {mean:.0f} +/- {3 * sd:.1f}")


# ---------------------------------------------------------------------------
# 10. solar labeling


def test_criterion_10_solar_labeling(verdict):
    rng = np.random.default_rng(10)
    violations = 0
    for _ in range(SOLAR_PAIRS):
        p = GeoPoint(float(rng.uniform(-65, 65)), float(rng.uniform(-180, 180)))
        t = datetime.fromtimestamp(int(rng.integers(1_262_304_000, 1_893_456_000)), tz=timezone.utc)
        day = [period_of_day(p, t, s) == "day" for s in DAYLIGHT_SYSTEMS]
        violations += any(a and not b for a, b in zip(day, day[1:]))
    # sunrise at the equator on the March equinox, by bisection on our elevation
    here = GeoPoint(0.0, 0.0)
    lo = datetime(2019, 3, 20, 3, tzinfo=timezone.utc)
    hi = datetime(2019, 3, 20, 9, tzinfo=timezone.utc)
    while hi - lo > timedelta(seconds=1):
        mid = lo + (hi - lo) / 2
        if solar_elevation(here, mid) < -0.833:
            lo = mid
        else:
            hi = mid
    off = abs(apparent_solar_hours(0.0, hi) - 6.0) * 60
    verdict(10, violations == 0 and off < SUNRISE_MINUTES,
            f"{violations} ordering violations on {SOLAR_PAIRS} pairs; equinox sunrise "
            f"{off:.1f} min from 06:00 local solar time (< {SUNRISE_MINUTES:g})")
