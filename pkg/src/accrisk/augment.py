"""Location-type pseudo labels, POI radius calibration, POI flags, weather joins."""

from __future__ import annotations

import bisect
import csv
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyIndex, EmptyInput
from .geo import GeoPoint, SpatialIndex
from .ingest import POI_TYPES, EventRecord, PoiRecord, WeatherRecord

TARGETS = ("junction", "intersection")

CANDIDATE_RADII = (5, 10, 15, 20, 25, 30, 40, 50, 75, 100, 125, 150, 200, 250, 300, 400, 500)

# POI types whose presence stands for each description-derived target
FAMILY_POI_TYPES = {
    "intersection": ("crossing", "stop", "traffic-signal"),
    "junction": ("junction",),
}

JUNCTION_BASED = ("amenity", "junction", "no-exit")


@dataclass(frozen=True)
class Pattern:
    regex: str
    target: str
    family: str

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"pattern target must be one of {TARGETS}, got {self.target!r}")
        re.compile(self.regex)


class PatternSet:
    """Ordered regexes mapping descriptions onto junction/intersection labels.

    Matching is case-insensitive. Junction patterns are evaluated first and a
    description that hits any of them is never also labelled an intersection.
    """

    def __init__(self, patterns: Iterable[Pattern]):
        self.patterns = list(patterns)
        self._compiled = [(re.compile(p.regex, re.IGNORECASE), p) for p in self.patterns]

    def __len__(self):
        return len(self.patterns)

    @classmethod
    def default(cls) -> "PatternSet":
        return cls([
            Pattern(r"\bon\b.+\bat\s+exit\b", "junction", "mapquest"),
            Pattern(r"^\W*at\b.+?\bexit\b", "junction", "bing"),
            Pattern(r"\bramp\s+to\b", "junction", "bing"),
            Pattern(r"\bon\b.+\bat\b", "intersection", "mapquest"),
        ])

    @classmethod
    def load(cls, path) -> "PatternSet":
        pats = []
        with Path(path).open(encoding="utf-8") as fh:
            for line, text in enumerate(fh, start=1):
                text = text.rstrip("\n")
                if not text.strip() or text.startswith("#"):
                    continue
                parts = text.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{line}: expected regex<TAB>target<TAB>family")
                pats.append(Pattern(*parts))
        return cls(pats)

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for p in self.patterns:
                fh.write(f"{p.regex}\t{p.target}\t{p.family}\n")


def match_patterns(description: str, ps: PatternSet | None = None) -> frozenset:
    ps = ps or PatternSet.default()
    hits = set()
    for rx, p in ps._compiled:
        if p.target == "junction" and rx.search(description):
            hits.add("junction")
            break
    if not hits:
        for rx, p in ps._compiled:
            if p.target == "intersection" and rx.search(description):
                hits.add("intersection")
                break
    return frozenset(hits)


def jaccard(s1, s2) -> float:
    s1, s2 = set(s1), set(s2)
    union = s1 | s2
    if not union:
        return 0.0
    return len(s1 & s2) / len(union)


# ---------------------------------------------------------------------------
# threshold calibration


@dataclass(frozen=True)
class CalibrationResult:
    candidate_radii: tuple
    jaccard_scores: tuple
    best_radius: float

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["radius", "jaccard"])
            for r, s in zip(self.candidate_radii, self.jaccard_scores):
                w.writerow([r, repr(float(s))])


def _nearest_of_types(points: Sequence[GeoPoint], pois: Sequence[PoiRecord], types,
                      horizon: float) -> np.ndarray:
    """Distance from each point to its closest POI of ``types`` (inf beyond ``horizon``)."""
    chosen = [p.location for p in pois if p.ptype in types]
    out = np.full(len(points), np.inf)
    if not chosen:
        return out
    idx = SpatialIndex(chosen)
    for k, pt in enumerate(points):
        _, d = idx.within_radius_ids(pt, horizon)
        if d.size:
            out[k] = d[0]
    return out


def calibrate_threshold(accidents: Sequence[EventRecord], pois: Sequence[PoiRecord],
                        family: str, ps: PatternSet | None = None,
                        candidates: Sequence[float] = CANDIDATE_RADII) -> CalibrationResult:
    """Pick the POI radius whose proximity labels best agree with description labels.

    For each candidate radius the accidents carrying a description match for
    ``family`` are compared with those having a POI of the family's types
    within the radius; the score is their Jaccard similarity.
    """
    if not accidents:
        raise EmptyInput("calibration needs at least one accident")
    if not candidates or any(c <= 0 for c in candidates):
        raise ValueError("candidate radii must be positive and non-empty")
    ps = ps or PatternSet.default()
    ids = [a.id for a in accidents]
    s1 = {i for i, a in zip(ids, accidents) if family in match_patterns(a.description, ps)}
    dmin = _nearest_of_types([a.location for a in accidents], pois,
                             FAMILY_POI_TYPES[family], float(max(candidates)))
    scores = []
    for tau in candidates:
        s2 = {i for i, d in zip(ids, dmin) if d <= tau}
        scores.append(jaccard(s1, s2))
    best = max(range(len(candidates)), key=lambda k: (scores[k], -candidates[k]))
    return CalibrationResult(tuple(candidates), tuple(scores), candidates[best])


# ---------------------------------------------------------------------------
# POI flags


@dataclass
class ThresholdTable:
    radii: dict = field(default_factory=dict)

    def __post_init__(self):
        for t in POI_TYPES:
            self.radii.setdefault(t, 100.0 if t in JUNCTION_BASED else 30.0)
        unknown = set(self.radii) - set(POI_TYPES)
        if unknown:
            raise ValueError(f"unknown POI types {sorted(unknown)}")
        if any(r <= 0 for r in self.radii.values()):
            raise ValueError("POI radii must be positive")

    @classmethod
    def from_calibration(cls, intersection_radius: float, junction_radius: float):
        return cls({t: (junction_radius if t in JUNCTION_BASED else intersection_radius)
                    for t in POI_TYPES})

    def __getitem__(self, ptype):
        return self.radii[ptype]

    def to_dict(self):
        return {t: self.radii[t] for t in POI_TYPES}


def poi_index(pois: Sequence[PoiRecord]) -> SpatialIndex:
    return SpatialIndex([p.location for p in pois], list(pois), bucket_m=250.0)


def annotate_poi(e: EventRecord, index: SpatialIndex, tt: ThresholdTable | None = None) -> dict:
    """One flag per POI type: is a POI of that type within its radius of the event?"""
    tt = tt or ThresholdTable()
    flags = dict.fromkeys(POI_TYPES, False)
    ids, d = index.within_radius_ids(e.location, max(tt.radii.values()))
    for k, dist in zip(ids, d):
        p = index.items[k]
        if dist <= tt[p.ptype]:
            flags[p.ptype] = True
    return flags


# ---------------------------------------------------------------------------
# weather


class WeatherStations:
    """Stations in a spatial index, each with its records sorted by time."""

    def __init__(self, records: Iterable[WeatherRecord]):
        by_station: dict[str, list[WeatherRecord]] = {}
        for r in records:
            by_station.setdefault(r.station_id, []).append(r)
        self.station_ids = sorted(by_station)
        self.records = [sorted(by_station[s], key=lambda r: r.time) for s in self.station_ids]
        self.times = [[r.time for r in recs] for recs in self.records]
        self.index = SpatialIndex([recs[0].location for recs in self.records],
                                  self.station_ids, bucket_m=5000.0)

    def __len__(self):
        return len(self.station_ids)

    def nearest_station(self, point: GeoPoint) -> int:
        if not self.station_ids:
            raise EmptyIndex("no weather stations")
        return self.index.nearest_id(point)[0]

    def closest_record(self, station: int, t: datetime) -> WeatherRecord:
        times = self.times[station]
        k = bisect.bisect_left(times, t)
        best = None
        for j in (k - 1, k):
            if 0 <= j < len(times):
                gap = abs((times[j] - t).total_seconds())
                if best is None or gap < best[0]:
                    best = (gap, j)
        return self.records[station][best[1]]


def join_weather(e: EventRecord, stations: WeatherStations):
    """(record, lag in minutes) from the nearest station's closest-in-time report."""
    s = stations.nearest_station(e.location)
    rec = stations.closest_record(s, e.start_time)
    return rec, abs((rec.time - e.start_time).total_seconds()) / 60.0
