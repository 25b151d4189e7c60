"""Pipeline stages over an output directory.

Each stage reads the files of earlier stages from ``out``, writes its own
files there, and records their SHA-256 digests in ``run_manifest.json``.
Nothing written depends on wall-clock time, so reruns are byte-identical.

Stage outputs::

    integrate   events.csv, dedup_report.json
    calibrate   calibration_intersection.csv, calibration_junction.csv, thresholds.json
    annotate    annotations.csv
    featurize   samples.csv, regions.csv, featurize.json
    train       models/<kind>_seed<k>.ckpt, models/<kind>_seed<k>_history.csv
    evaluate    report.csv, report.txt
    ablate      ablation.csv, ablation.txt
    gradcheck   gradcheck.json
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import augment, featurize, ingest
from .config import PipelineConfig
from .errors import ConfigError, NumericError, StageOrderError
from .geo import GeoPoint, GridSpec

log = logging.getLogger(__name__)

STAGES = ("integrate", "calibrate", "annotate", "featurize", "train", "evaluate", "ablate",
          "gradcheck")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def record(out, stage: str, outputs) -> dict:
    """Add ``outputs`` (paths inside ``out``) to the run manifest under ``stage``."""
    out = Path(out)
    mpath = out / "run_manifest.json"
    manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
    manifest[stage] = {Path(p).relative_to(out).as_posix(): sha256(p) for p in outputs}
    _dump_json(manifest, mpath)
    return manifest[stage]


def _require(out, *names) -> list[Path]:
    paths = [Path(out) / n for n in names]
    missing = [p.name for p in paths if not p.exists()]
    if missing:
        raise StageOrderError(f"missing {', '.join(missing)} in {out}; run the earlier stage first")
    return paths


def _input(cfg: PipelineConfig, name: str) -> Path:
    p = cfg.path(name)
    if p is None or not p.is_file():
        raise ConfigError(f"files.{name}", f"no such file {p}")
    return p


# ---------------------------------------------------------------------------
# stages


def integrate(cfg: PipelineConfig, out) -> dict:
    """Parse the raw events, remove duplicates, write the merged event file."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    events = ingest.parse_events(_input(cfg, "events"), cfg.files.events_format)
    merged, report = ingest.deduplicate(events, cfg.dedup.distance_m, cfg.dedup.minutes)
    ingest.write_events(merged, out / "events.csv")
    _dump_json(report.to_dict(), out / "dedup_report.json")
    return record(out, "integrate", [out / "events.csv", out / "dedup_report.json"])


def _patterns(cfg: PipelineConfig) -> augment.PatternSet:
    p = cfg.path("patterns")
    return augment.PatternSet.load(p) if p is not None else augment.PatternSet.default()


def calibrate(cfg: PipelineConfig, out) -> dict:
    """Choose the intersection and junction radii by Jaccard agreement."""
    out = Path(out)
    (events_path,) = _require(out, "events.csv")
    accidents = [e for e in ingest.parse_events(events_path) if e.etype == "accident"]
    pois = ingest.parse_poi(_input(cfg, "poi"))
    ps = _patterns(cfg)
    best = {}
    files = []
    for family in augment.TARGETS:
        res = augment.calibrate_threshold(accidents, pois, family, ps)
        res.to_csv(out / f"calibration_{family}.csv")
        files.append(out / f"calibration_{family}.csv")
        best[family] = res.best_radius
    table = augment.ThresholdTable.from_calibration(best["intersection"], best["junction"])
    _dump_json(table.to_dict(), out / "thresholds.json")
    return record(out, "calibrate", sorted(files) + [out / "thresholds.json"])


def threshold_table(cfg: PipelineConfig, out) -> augment.ThresholdTable:
    if cfg.thresholds.calibrate:
        (path,) = _require(out, "thresholds.json")
        return augment.ThresholdTable(json.loads(path.read_text()))
    return augment.ThresholdTable.from_calibration(cfg.thresholds.intersection,
                                                   cfg.thresholds.junction)


def annotate(cfg: PipelineConfig, out) -> dict:
    """Per-event POI flags plus the joined weather station and its time lag."""
    out = Path(out)
    (events_path,) = _require(out, "events.csv")
    events = ingest.parse_events(events_path)
    pois = ingest.parse_poi(_input(cfg, "poi"))
    stations = augment.WeatherStations(ingest.parse_weather(_input(cfg, "weather")))
    table = threshold_table(cfg, out)
    index = augment.poi_index(pois)
    path = out / "annotations.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *ingest.POI_TYPES, "station_id", "weather_lag_minutes"])
        for e in events:
            flags = augment.annotate_poi(e, index, table)
            rec, lag = augment.join_weather(e, stations) if len(stations) else (None, None)
            w.writerow([e.id, *(int(flags[t]) for t in ingest.POI_TYPES),
                        rec.station_id if rec else "", "" if lag is None else repr(lag)])
    return record(out, "annotate", [path])


def study_period(cfg: PipelineConfig, events) -> tuple[int, int]:
    """(first interval start, number of intervals) covering the train and test weeks."""
    if cfg.start is not None:
        t0 = int(ingest.parse_time(cfg.start).timestamp())
    else:
        first = min(int(e.start_time.timestamp()) for e in events)
        t0 = first - first % featurize.INTERVAL_S
    weeks = cfg.split.train_weeks + cfg.split.test_weeks
    n = int(round(weeks * featurize.WEEK_S)) // featurize.INTERVAL_S
    return t0, n


def grid_for(cfg: PipelineConfig, events) -> GridSpec:
    g = cfg.grid
    if g.anchor_lat is not None:
        return GridSpec(GeoPoint(g.anchor_lat, g.anchor_lng), g.rows, g.cols, g.cell_size)
    return GridSpec.covering([e.location for e in events], g.cell_size)


def featurize_stage(cfg: PipelineConfig, out) -> dict:
    """Window every region, negative-sample, and write the (unscaled) sample file."""
    out = Path(out)
    (events_path,) = _require(out, "events.csv")
    events = ingest.parse_events(events_path)
    weather = ingest.parse_weather(_input(cfg, "weather"))
    pois = ingest.parse_poi(_input(cfg, "poi"))
    wv = ingest.parse_word_vectors(_input(cfg, "word_vectors"))
    grid = grid_for(cfg, events)
    t0, n = study_period(cfg, events)
    boundary = t0 + int(round(cfg.split.train_weeks * featurize.WEEK_S))
    if cfg.path("history") is not None:
        history = ingest.parse_events(_input(cfg, "history"))
    else:
        history = [e for e in events if int(e.start_time.timestamp()) < boundary]
    entries, regions = featurize.featurize_city(events, grid, t0, n, weather, pois, wv, history,
                                                cfg.utc_offset)
    sampled = featurize.negative_sample(entries, cfg.sampling_probability, cfg.seeds[0])
    sampled.to_csv(out / "samples.csv")
    with (out / "regions.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region_index", "row", "col"])
        for r in regions:
            w.writerow([r.region_index, r.row, r.col])
    info = {"t0": ingest.format_time(_utc(t0)), "intervals": n, "regions": len(regions),
            "grid": {"anchor_lat": grid.anchor.lat, "anchor_lng": grid.anchor.lng,
                     "rows": grid.rows, "cols": grid.cols, "cell_size": grid.cell_size},
            "windows": len(entries), "positives": int(entries.label.sum()),
            "sampled": len(sampled)}
    _dump_json(info, out / "featurize.json")
    return record(out, "featurize", [out / "samples.csv", out / "regions.csv",
                                     out / "featurize.json"])


def _utc(t_s):
    from datetime import datetime, timezone

    return datetime.fromtimestamp(int(t_s), tz=timezone.utc)


def load_split(cfg: PipelineConfig, out) -> tuple[featurize.DatasetSplit, int]:
    """The normalised split and the region count from the featurize outputs."""
    samples_path, info_path = _require(out, "samples.csv", "featurize.json")
    info = json.loads(info_path.read_text())
    samples = featurize.SampleSet.from_csv(samples_path)
    t0 = int(ingest.parse_time(info["t0"]).timestamp())
    split = featurize.temporal_split(samples, cfg.split.train_weeks, cfg.split.test_weeks,
                                     cfg.split.val_fraction, t0)
    return split, info["regions"]


def checkpoint_path(out, kind: str, seed: int) -> Path:
    return Path(out) / "models" / f"{kind}_seed{seed}.ckpt"


def train_stage(cfg: PipelineConfig, out) -> dict:
    from .models import build_model, save_model, train, write_history

    out = Path(out)
    split, n_regions = load_split(cfg, out)
    (out / "models").mkdir(exist_ok=True)
    tc = cfg.train_config()
    kind = cfg.model.kind
    files = []
    st = split.normalization_stats
    for seed in tc.seeds:
        m = build_model(kind, split.layout, n_regions, seed, **cfg.model.options())
        m, history = train(m, split, tc, seed)
        ck = checkpoint_path(out, kind, seed)
        save_model(ck, m, {"norm_mean": st.mean, "norm_std": st.std, "norm_fill": st.fill},
                   {"seed": seed, "epochs_run": len(history), "config_model": kind})
        hist = ck.with_name(f"{kind}_seed{seed}_history.csv")
        write_history(history, hist)
        files += [ck, hist]
    return record(out, "train", files)


def evaluate_stage(cfg: PipelineConfig, out) -> dict:
    from .evaluate import EvalReport, write_reports
    from .models import load_model, predict_labels

    out = Path(out)
    split, _ = load_split(cfg, out)
    kind = cfg.model.kind
    paths = [checkpoint_path(out, kind, s) for s in cfg.seeds]
    missing = [p.name for p in paths if not p.exists()]
    if missing:
        raise StageOrderError(f"missing checkpoints {', '.join(missing)}; run train first")
    report = EvalReport(kind)
    for seed, p in zip(cfg.seeds, paths):
        m, _, _ = load_model(p)
        report.add(seed, predict_labels(m, split.test), split.test.label)
    write_reports([report], out / "report.csv", out / "report.txt")
    return record(out, "evaluate", [out / "report.csv", out / "report.txt"])


def ablate_stage(cfg: PipelineConfig, out) -> dict:
    from .evaluate import ablation_study, write_reports
    from .models import build_model

    out = Path(out)
    split, n_regions = load_split(cfg, out)
    mc = cfg.ablation.model

    def builder(layout, seed):
        return build_model(mc.kind, layout, n_regions, seed, **mc.options())

    reports = ablation_study(split, builder, cfg.train_config(), cfg.ablation.scenarios,
                             cfg.ablation.categories, prefix=f"{mc.kind}:")
    write_reports(reports, out / "ablation.csv", out / "ablation.txt")
    return record(out, "ablate", [out / "ablation.csv", out / "ablation.txt"])


def toy_dap(seed: int = 0):
    """A small DAP (hidden 8, embedding 8) over the full feature layout."""
    from .models import build_model

    return build_model("dap", featurize.FULL_LAYOUT, 3, seed, embedding_dim=8, lstm_hidden=8,
                       branch_dense=8, head_sizes=(16, 12, 8, 2))


def toy_batch(seed: int = 0, n: int = 4, regions: int = 3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, featurize.N_FEATURES))
    return X, rng.integers(0, regions, n), np.arange(n) % 2


def gradcheck_stage(cfg: PipelineConfig, out, tolerance: float = 1e-4) -> dict:
    from .nnkit.gradcheck import grad_check

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    errors = grad_check(toy_dap(seed), toy_batch(seed), seed=seed)
    worst = max(errors.values())
    _dump_json({"max_relative_error": worst, "tolerance": tolerance, "blocks": errors},
               out / "gradcheck.json")
    rec = record(out, "gradcheck", [out / "gradcheck.json"])
    if not worst < tolerance:
        raise NumericError(f"gradient check failed: max relative error {worst:.3g}")
    return rec


RUNNERS = {"integrate": integrate, "calibrate": calibrate, "annotate": annotate,
           "featurize": featurize_stage, "train": train_stage, "evaluate": evaluate_stage,
           "ablate": ablate_stage, "gradcheck": gradcheck_stage}


def run(command: str, cfg: PipelineConfig, out) -> dict:
    if command not in RUNNERS:
        raise ValueError(f"unknown stage {command!r}")
    log.info("running %s into %s", command, out)
    return RUNNERS[command](cfg, out)


def run_all(cfg: PipelineConfig, out, stages=("integrate", "calibrate", "annotate", "featurize",
                                              "train", "evaluate")) -> dict:
    return {s: run(s, cfg, out) for s in stages}
