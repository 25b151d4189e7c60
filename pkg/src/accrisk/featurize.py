"""Per-region interval vectors, region statics, windowed sample entries,
negative sampling and the chronological train/validation/test split.

Flattened entry layout (305 values)::

    0..12     POI counts, in POI_TYPES order
    13..112   Desc2Vec
    113..304  8 interval blocks of 24, oldest first; inside a block:
              0..6   traffic counts (EVENT_TYPES order)
              7      weekday flag
              8..12  one-hot local time slot [6,10) [10,15) [15,19) [19,22) [22,6)
              13     daylight flag (sunrise/sunset system)
              14..19 temperature, pressure, humidity, visibility, wind speed, precipitation
              20..23 rain, snow, fog, hail flags
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SpanError, TooShort
from .geo import CellId, GridSpec
from .ingest import (EVENT_TYPES, POI_TYPES, WEATHER_CONTINUOUS, WEATHER_FLAGS, EventRecord,
                     PoiRecord, WordVectorTable, format_time, parse_time)
from .solar import is_day_array

INTERVAL_S = 15 * 60
WINDOW = 8
N_TRAFFIC, N_TIME, N_WEATHER = 7, 7, 10
STEP_WIDTH = N_TRAFFIC + N_TIME + N_WEATHER
N_POI, N_DESC = len(POI_TYPES), 100
N_STATICS = N_POI + N_DESC
N_FEATURES = N_STATICS + WINDOW * STEP_WIDTH

# positions inside one 24-wide interval block
TRAFFIC_COLS = np.arange(0, 7)
TIME_COLS = np.arange(7, 14)
WEATHER_COLS = np.arange(14, 24)
WEEKDAY_COL, SLOT_COLS, DAYLIGHT_COL = 7, np.arange(8, 13), 13
WEATHER_CONT_COLS = np.arange(14, 20)
WEATHER_FLAG_COLS = np.arange(20, 24)
STEP_INDICATOR_COLS = np.concatenate([TIME_COLS, WEATHER_FLAG_COLS])
ACCIDENT_COL = EVENT_TYPES.index("accident")

# order inside the weather sub-vector
WEATHER_FIELDS = WEATHER_CONTINUOUS + WEATHER_FLAGS

WEATHER_CARRY_S = 6 * 3600

CATEGORIES = ("traffic", "time", "weather", "poi", "desc2vec")
_STEP_CATEGORY_COLS = {"traffic": TRAFFIC_COLS, "time": TIME_COLS, "weather": WEATHER_COLS}


@dataclass(frozen=True)
class FeatureLayout:
    """Widths of the flattened blocks: statics (poi, desc) then ``steps`` x ``step``."""

    poi: int = N_POI
    desc: int = N_DESC
    step: int = STEP_WIDTH
    steps: int = WINDOW

    @property
    def width(self) -> int:
        return self.poi + self.desc + self.steps * self.step

    def split(self, X):
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        a, b = self.poi, self.poi + self.desc
        return X[:, :a], X[:, a:b], X[:, b:].reshape(n, self.steps, self.step)

    def to_dict(self):
        return {"poi": self.poi, "desc": self.desc, "step": self.step, "steps": self.steps}


FULL_LAYOUT = FeatureLayout()


def category_columns(categories: Iterable[str]):
    """Columns of the full 305 layout kept for ``categories`` and the reduced layout."""
    cats = set(categories)
    unknown = cats - set(CATEGORIES)
    if unknown:
        raise ValueError(f"unknown feature categories {sorted(unknown)}")
    cols = []
    if "poi" in cats:
        cols.extend(range(N_POI))
    if "desc2vec" in cats:
        cols.extend(range(N_POI, N_STATICS))
    step_cols = np.sort(np.concatenate(
        [_STEP_CATEGORY_COLS[c] for c in ("traffic", "time", "weather") if c in cats]
        or [np.empty(0, dtype=int)])).astype(int)
    for k in range(WINDOW):
        cols.extend((N_STATICS + k * STEP_WIDTH + step_cols).tolist())
    layout = FeatureLayout(N_POI if "poi" in cats else 0, N_DESC if "desc2vec" in cats else 0,
                           len(step_cols), WINDOW)
    return np.array(cols, dtype=np.int64), layout


# ---------------------------------------------------------------------------
# record types


@dataclass(frozen=True)
class IntervalVector:
    traffic: np.ndarray
    time: np.ndarray
    weather: np.ndarray

    @classmethod
    def from_array(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[TRAFFIC_COLS], v[TIME_COLS], v[WEATHER_COLS])

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.traffic, self.time, self.weather])


@dataclass(frozen=True)
class RegionStatics:
    poi_counts: np.ndarray
    desc2vec: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.poi_counts, self.desc2vec])


@dataclass(frozen=True)
class SampleEntry:
    region_index: int
    window_start: datetime
    dynamics: np.ndarray  # (8, 24), oldest first
    statics: np.ndarray   # (113,)
    label: int

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.statics, self.dynamics.reshape(-1)])


class SampleSet:
    """Column store of sample entries: region, window start (unix s), label, features."""

    def __init__(self, region, start, label, X):
        self.region = np.asarray(region, dtype=np.int64).reshape(-1)
        self.start = np.asarray(start, dtype=np.int64).reshape(-1)
        self.label = np.asarray(label, dtype=np.int64).reshape(-1)
        X = np.asarray(X, dtype=float)
        self.X = X.reshape(len(self.region), X.shape[-1] if X.ndim > 1 else -1)
        if not (len(self.start) == len(self.label) == len(self.region) == self.X.shape[0]):
            raise ValueError("sample set columns differ in length")

    @classmethod
    def empty(cls, width=N_FEATURES):
        return cls([], [], [], np.zeros((0, width)))

    @classmethod
    def from_entries(cls, entries: Sequence[SampleEntry]):
        if not entries:
            return cls.empty()
        return cls([e.region_index for e in entries],
                   [int(e.window_start.timestamp()) for e in entries],
                   [e.label for e in entries],
                   np.stack([e.flatten() for e in entries]))

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"]):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.region for p in parts]),
                   np.concatenate([p.start for p in parts]),
                   np.concatenate([p.label for p in parts]),
                   np.concatenate([p.X for p in parts]))

    def __len__(self):
        return len(self.label)

    @property
    def width(self):
        return self.X.shape[1]

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.region[idx], self.start[idx], self.label[idx], self.X[idx])

    def with_features(self, X) -> "SampleSet":
        return SampleSet(self.region, self.start, self.label, X)

    def __getitem__(self, k) -> SampleEntry:
        x = self.X[k]
        if self.width != N_FEATURES:
            raise ValueError("entry view needs the full 305-value layout")
        return SampleEntry(int(self.region[k]),
                           datetime.fromtimestamp(int(self.start[k]), tz=timezone.utc),
                           x[N_STATICS:].reshape(WINDOW, STEP_WIDTH), x[:N_STATICS],
                           int(self.label[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def sorted(self) -> "SampleSet":
        return self.subset(np.lexsort((self.region, self.start)))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region_index", "window_start", "label"]
                       + [f"f{k}" for k in range(self.width)])
            for k in range(len(self)):
                start = datetime.fromtimestamp(int(self.start[k]), tz=timezone.utc)
                w.writerow([int(self.region[k]), format_time(start), int(self.label[k])]
                           + [repr(v) for v in self.X[k].tolist()])

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        region, start, label, rows = [], [], [], []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            width = len(header) - 3
            for row in reader:
                region.append(int(row[0]))
                start.append(int(parse_time(row[1]).timestamp()))
                label.append(int(row[2]))
                rows.append(row[3:])
        X = np.array(rows, dtype=float) if rows else np.zeros((0, width))
        return cls(region, start, label, X)


# ---------------------------------------------------------------------------
# regions and statics


def build_region_set(events: Sequence[EventRecord], g: GridSpec) -> list[CellId]:
    """Occupied cells, densely indexed in (row, col) order; events off-grid are ignored."""
    if not events:
        raise ValueError("cannot build regions from zero events")
    rows, cols = g.cell_indices([e.location.lat for e in events], [e.location.lng for e in events])
    cells = sorted({(int(r), int(c)) for r, c in zip(rows, cols) if r >= 0})
    return [CellId(r, c, k) for k, (r, c) in enumerate(cells)]


_TOKEN = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.split(text.lower()) if t]


def desc2vec(region: CellId | None, history: Sequence[EventRecord], wv: WordVectorTable,
             grid: GridSpec | None = None) -> np.ndarray:
    """Mean word vector over every in-vocabulary token of the history descriptions.

    With ``grid`` given, history is first restricted to events in ``region``.
    """
    if grid is not None and region is not None:
        history = [e for e in history
                   if tuple(int(v) for v in grid.cell_indices(e.location.lat, e.location.lng))
                   == (region.row, region.col)]
    total = np.zeros(wv.dimension)
    n = 0
    for e in history:
        for tok in tokenize(e.description):
            i = wv.index.get(tok)
            if i is not None:
                total += wv.vectors[i]
                n += 1
    return total / n if n else total


def poi_counts(region: CellId, pois: Sequence[PoiRecord], grid: GridSpec) -> np.ndarray:
    counts = np.zeros(N_POI)
    if not pois:
        return counts
    rows, cols = grid.cell_indices([p.location.lat for p in pois], [p.location.lng for p in pois])
    for p, r, c in zip(pois, rows, cols):
        if r == region.row and c == region.col:
            counts[POI_TYPES.index(p.ptype)] += 1
    return counts


# ---------------------------------------------------------------------------
# interval vectors


def time_slot(local_hour: int) -> int:
    if 6 <= local_hour < 10:
        return 0
    if 10 <= local_hour < 15:
        return 1
    if 15 <= local_hour < 19:
        return 2
    if 19 <= local_hour < 22:
        return 3
    return 4


def time_features(starts_s, utc_offset_hours: float, daylight) -> np.ndarray:
    """(n, 7) weekday flag, one-hot slot and daylight flag for interval starts."""
    starts_s = np.asarray(starts_s, dtype=np.int64)
    local = starts_s + int(round(utc_offset_hours * 3600))
    days = np.floor_divide(local, 86400)
    hour = (local - days * 86400) // 3600
    weekday = (days + 3) % 7 < 5  # 1970-01-01 was a Thursday; Monday == 0
    slot = np.select([(hour >= 6) & (hour < 10), (hour >= 10) & (hour < 15),
                      (hour >= 15) & (hour < 19), (hour >= 19) & (hour < 22)],
                     [0, 1, 2, 3], 4)
    out = np.zeros((len(starts_s), N_TIME))
    out[:, 0] = weekday
    out[np.arange(len(starts_s)), 1 + slot] = 1.0
    out[:, 6] = np.asarray(daylight, dtype=float)
    return out


class StationSeries:
    """One station's reports as arrays, for nearest-time lookups with carry-forward."""

    def __init__(self, records):
        recs = sorted(records, key=lambda r: r.time)
        self.times = np.array([int(r.time.timestamp()) for r in recs], dtype=np.int64)
        self.values = np.array([[np.nan if getattr(r, f) is None else float(getattr(r, f))
                                 for f in WEATHER_FIELDS] for r in recs], dtype=float)
        self.values = self.values.reshape(len(recs), N_WEATHER)

    def at(self, starts_s) -> np.ndarray:
        """(n, 10) weather vectors for interval starts.

        The report closest in time (earlier on ties) supplies every field,
        provided it lies within six hours. Continuous fields it lacks are
        carried forward from the latest earlier report that has them, again
        within six hours; anything else stays NaN. Flags default to 0.
        """
        starts_s = np.asarray(starts_s, dtype=np.int64)
        n = len(starts_s)
        out = np.full((n, N_WEATHER), np.nan)
        out[:, 6:] = 0.0
        if not len(self.times):
            return out
        k = np.searchsorted(self.times, starts_s, side="left")
        prev = np.clip(k - 1, 0, len(self.times) - 1)
        nxt = np.clip(k, 0, len(self.times) - 1)
        gprev = np.where(k - 1 >= 0, np.abs(starts_s - self.times[prev]), np.iinfo(np.int64).max)
        gnext = np.where(k < len(self.times), np.abs(self.times[nxt] - starts_s),
                         np.iinfo(np.int64).max)
        pick = np.where(gprev <= gnext, prev, nxt)
        gap = np.minimum(gprev, gnext)
        ok = gap <= WEATHER_CARRY_S
        out[ok] = self.values[pick[ok]]
        out[ok, 6:] = np.nan_to_num(out[ok, 6:])
        # carry-forward for missing continuous fields
        last = np.searchsorted(self.times, starts_s, side="right") - 1
        for j in range(6):
            col = self.values[:, j]
            valid = ~np.isnan(col)
            # index of the latest valid report at or before each report position
            pos = np.where(valid, np.arange(len(col)), -1)
            pos = np.maximum.accumulate(pos)
            need = np.isnan(out[:, j]) & (last >= 0)
            if not need.any():
                continue
            src = pos[np.clip(last, 0, None)]
            usable = need & (src >= 0)
            usable &= np.where(src >= 0, starts_s - self.times[np.clip(src, 0, None)], 1 << 62) \
                <= WEATHER_CARRY_S
            out[usable, j] = col[src[usable]]
        return out


def region_timeline(region: CellId, grid: GridSpec, t0_s: int, n_intervals: int,
                    events: Sequence[EventRecord], station: StationSeries | None,
                    utc_offset_hours: float = 0.0) -> np.ndarray:
    """(n_intervals, 24) raw interval vectors for one region starting at ``t0_s``.

    ``events`` should already be restricted to the region; events outside
    the covered period are ignored.
    """
    starts = t0_s + INTERVAL_S * np.arange(n_intervals, dtype=np.int64)
    out = np.zeros((n_intervals, STEP_WIDTH))
    if events:
        secs = np.array([int(e.start_time.timestamp()) for e in events], dtype=np.int64)
        types = np.array([EVENT_TYPES.index(e.etype) for e in events], dtype=np.int64)
        k = np.floor_divide(secs - t0_s, INTERVAL_S)
        keep = (k >= 0) & (k < n_intervals)
        np.add.at(out, (k[keep], types[keep]), 1.0)
    center = grid.center(region.row, region.col)
    daylight = is_day_array(center.lat, center.lng, starts, "sunrise-sunset")
    out[:, TIME_COLS] = time_features(starts, utc_offset_hours, daylight)
    if station is not None:
        out[:, WEATHER_COLS] = station.at(starts)
    else:
        out[:, WEATHER_COLS] = np.nan
        out[:, WEATHER_FLAG_COLS] = 0.0
    return out


def interval_features(region: CellId, t: datetime, events: Sequence[EventRecord],
                      grid: GridSpec, station: StationSeries | None = None,
                      utc_offset_hours: float = 0.0) -> IntervalVector:
    """Interval vector for the 15-minute interval starting at ``t``."""
    t_s = int(t.timestamp())
    if t_s % INTERVAL_S:
        raise ValueError("interval start must be aligned to 15 minutes")
    in_region = [e for e in events
                 if tuple(int(v) for v in grid.cell_indices(e.location.lat, e.location.lng))
                 == (region.row, region.col)]
    return IntervalVector.from_array(
        region_timeline(region, grid, t_s, 1, in_region, station, utc_offset_hours)[0])


# ---------------------------------------------------------------------------
# windows and sampling


def make_windows(timeline: np.ndarray, statics, region_index: int = 0, t0_s: int = 0,
                 window: int = WINDOW) -> SampleSet:
    """One entry per window of ``window`` intervals, labelled by the next interval.

    A timeline of ``T`` intervals yields ``T - window`` entries.
    """
    timeline = np.asarray(timeline, dtype=float)
    statics = statics.values if isinstance(statics, RegionStatics) else np.asarray(statics, float)
    T = timeline.shape[0]
    if T < window + 1:
        raise TooShort(f"timeline of {T} intervals; need at least {window + 1}")
    n = T - window
    idx = np.arange(n)[:, None] + np.arange(window)[None, :]
    dyn = timeline[idx].reshape(n, -1)
    X = np.concatenate([np.broadcast_to(statics, (n, statics.size)), dyn], axis=1)
    label = (timeline[window:, ACCIDENT_COL] > 0).astype(np.int64)
    starts = t0_s + INTERVAL_S * np.arange(n, dtype=np.int64)
    return SampleSet(np.full(n, region_index), starts, label, X)


def group_by_cell(events: Sequence[EventRecord], grid: GridSpec) -> dict:
    """Events keyed by (row, col); off-grid events are dropped."""
    out: dict[tuple[int, int], list[EventRecord]] = {}
    if not events:
        return out
    rows, cols = grid.cell_indices([e.location.lat for e in events],
                                   [e.location.lng for e in events])
    for e, r, c in zip(events, rows.tolist(), cols.tolist()):
        if r >= 0:
            out.setdefault((r, c), []).append(e)
    return out


def featurize_city(events: Sequence[EventRecord], grid: GridSpec, t0_s: int, n_intervals: int,
                   weather: Sequence = (), pois: Sequence[PoiRecord] = (),
                   wv: WordVectorTable | None = None, history: Sequence[EventRecord] | None = None,
                   utc_offset_hours: float = 0.0, regions: Sequence[CellId] | None = None):
    """Every window of every region, unsampled, plus the region list.

    ``history`` feeds Desc2Vec (defaults to ``events``); each region uses the
    weather station closest to its center.
    """
    from .augment import WeatherStations

    regions = list(regions) if regions is not None else build_region_set(events, grid)
    by_cell = group_by_cell(events, grid)
    hist_by_cell = by_cell if history is None else group_by_cell(history, grid)
    stations = WeatherStations(weather) if weather else None
    series = {}
    parts = []
    for reg in regions:
        station = None
        if stations is not None:
            k = stations.nearest_station(grid.center(reg.row, reg.col))
            if k not in series:
                series[k] = StationSeries(stations.records[k])
            station = series[k]
        if wv is not None:
            d2v = desc2vec(None, hist_by_cell.get((reg.row, reg.col), ()), wv)
        else:
            d2v = np.zeros(N_DESC)
        statics = np.concatenate([poi_counts(reg, pois, grid), d2v])
        timeline = region_timeline(reg, grid, t0_s, n_intervals, by_cell.get((reg.row, reg.col), []),
                                   station, utc_offset_hours)
        parts.append(make_windows(timeline, statics, reg.region_index, t0_s))
    return SampleSet.concat(parts), regions


def negative_sample(entries: SampleSet, p: float = 0.02, seed=0) -> SampleSet:
    """Keep every positive and each negative independently with probability ``p``."""
    if not 0 < p <= 1:
        raise ValueError("sampling probability must lie in (0, 1]")
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    u = gen.random(len(entries))
    keep = (entries.label == 1) | (u < p)
    return entries.subset(np.flatnonzero(keep))


# ---------------------------------------------------------------------------
# split and normalisation


def scaled_columns(layout: FeatureLayout = FULL_LAYOUT, step_cols=None):
    """Step-feature positions and static positions that are z-scored.

    ``step_cols`` gives, for a reduced layout, which of the 24 original
    interval positions each kept position corresponds to.
    """
    step_cols = np.arange(STEP_WIDTH) if step_cols is None else np.asarray(step_cols)
    scaled_step = np.flatnonzero(np.isin(step_cols, np.concatenate([TRAFFIC_COLS,
                                                                    WEATHER_CONT_COLS])))
    scaled_static = np.arange(layout.poi)
    return scaled_step, scaled_static


@dataclass
class NormalizationStats:
    """Per-feature z-scoring fitted on training entries.

    Interval features share one mean/std across the window positions.
    ``fill`` is the value substituted for NaNs before scaling (the training
    mean); unscaled columns have mean 0 and std 1.
    """

    mean: np.ndarray
    std: np.ndarray
    fill: np.ndarray

    @classmethod
    def fit(cls, X, layout: FeatureLayout = FULL_LAYOUT, step_cols=None):
        X = np.asarray(X, dtype=float)
        w = layout.width
        mean, std, fill = np.zeros(w), np.ones(w), np.zeros(w)
        scaled_step, scaled_static = scaled_columns(layout, step_cols)
        n_stat = layout.poi + layout.desc
        for j in range(n_stat):
            col = X[:, j]
            mu = np.nanmean(col) if np.any(~np.isnan(col)) else 0.0
            fill[j] = mu
            if j in scaled_static:
                sd = np.nanstd(col) if np.any(~np.isnan(col)) else 0.0
                if sd > 0:
                    mean[j], std[j] = mu, sd
        dyn = X[:, n_stat:].reshape(-1, layout.step) if layout.step else np.zeros((0, 0))
        for j in range(layout.step):
            col = dyn[:, j]
            have = np.any(~np.isnan(col))
            mu = np.nanmean(col) if have else 0.0
            sd = np.nanstd(col) if have else 0.0
            cols = n_stat + j + layout.step * np.arange(layout.steps)
            fill[cols] = mu
            if j in scaled_step and sd > 0:
                mean[cols], std[cols] = mu, sd
        return cls(mean, std, fill)

    def apply(self, X) -> np.ndarray:
        X = np.array(X, dtype=float)
        nan = np.isnan(X)
        if nan.any():
            X[nan] = np.broadcast_to(self.fill, X.shape)[nan]
        return (X - self.mean) / self.std


@dataclass
class DatasetSplit:
    train: SampleSet
    validation: SampleSet
    test: SampleSet
    normalization_stats: NormalizationStats
    boundary_s: int = 0
    layout: FeatureLayout = FULL_LAYOUT

    def restrict(self, columns, layout, stats=None) -> "DatasetSplit":
        """Same split over a column subset; ``stats`` must match the subset."""
        cut = lambda s: s.with_features(s.X[:, columns])  # noqa: E731
        st = stats or NormalizationStats(self.normalization_stats.mean[columns],
                                         self.normalization_stats.std[columns],
                                         self.normalization_stats.fill[columns])
        return DatasetSplit(cut(self.train), cut(self.validation), cut(self.test), st,
                            self.boundary_s, layout)


WEEK_S = 7 * 86400


def temporal_split(entries: SampleSet, train_weeks: float = 10, test_weeks: float = 2,
                   val_fraction: float = 0.1, start_s: int | None = None,
                   normalize: bool = True) -> DatasetSplit:
    """Chronological split by window start.

    Entries starting before ``start + train_weeks`` train (the last
    ``val_fraction`` of them, chronologically, validate); entries starting
    at or after that boundary and before ``test_weeks`` later are tested.
    Statistics come from the training part only; every part is then
    imputed and z-scored with them.
    """
    if len(entries) == 0:
        raise SpanError("no entries to split")
    t0 = int(entries.start.min()) if start_s is None else int(start_s)
    boundary = t0 + int(round(train_weeks * WEEK_S))
    end = boundary + int(round(test_weeks * WEEK_S))
    train_idx = np.flatnonzero(entries.start < boundary)
    test_idx = np.flatnonzero((entries.start >= boundary) & (entries.start < end))
    if not len(train_idx) or not len(test_idx):
        raise SpanError(f"entries do not span {train_weeks}+{test_weeks} weeks "
                        f"(train {len(train_idx)}, test {len(test_idx)})")
    train = entries.subset(train_idx).sorted()
    test = entries.subset(test_idx).sorted()
    n_val = int(math.ceil(val_fraction * len(train))) if val_fraction > 0 else 0
    if n_val >= len(train):
        raise SpanError("validation fraction leaves no training entries")
    fit = train.subset(np.arange(len(train) - n_val))
    val = train.subset(np.arange(len(train) - n_val, len(train)))
    layout = FULL_LAYOUT if entries.width == N_FEATURES else None
    if layout is None:
        raise ValueError("temporal_split expects the full 305-value layout")
    stats = NormalizationStats.fit(fit.X, layout)
    if normalize:
        fit, val, test = (s.with_features(stats.apply(s.X)) for s in (fit, val, test))
    return DatasetSplit(fit, val, test, stats, boundary, layout)
