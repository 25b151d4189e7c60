"""Synthetic cities and corpora with planted ground truth.

``generate`` writes a complete fixture city (events, weather, POI and word
vector files plus a JSON manifest). The manifest records the planted
duplicates, POI association radii, the accident rule and the entry counts
the pipeline should reproduce.

Accidents follow a rule over the previous interval so that the Bayes
optimal predictor is known: with ``R`` the rule outcome, an accident occurs
with probability ``1 - noise`` when ``R`` holds and ``noise`` otherwise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .geo import METERS_PER_DEGREE, GeoPoint, GridSpec
from .ingest import (EVENT_TYPES, EventRecord, PoiRecord, Source, WeatherRecord, WordVectorTable,
                     write_events, write_poi, write_weather, write_word_vectors)
from .nnkit.rng import RngStream

INTERVAL_S = 15 * 60

RULES = ("traffic+poi", "traffic", "traffic+time")

# separation between same-type base events close in time; keeps planted
# duplicate clusters from touching each other
_SEPARATION_M = 700.0
_SEPARATION_S = 25 * 60
_EVENT_MARGIN_M = 300.0
_POI_MARGIN_M = 450.0

_STREETS = ("main", "oak", "pine", "maple", "cedar", "elm", "peachtree", "spring", "ponce",
            "memorial", "piedmont", "northside", "howell", "mill", "boulevard")
_HIGHWAYS = ("i-85", "i-75", "i-20", "i-285", "ga-400", "us-78")

_DESCRIPTIONS = {
    "broken-vehicle": "Disabled vehicle on {s1} St. Right shoulder blocked.",
    "congestion": "Slow traffic on {s1} St from {s2} Ave to {s3} Rd.",
    "construction": "Road construction on {s1} St. Right lane closed.",
    "event": "Stadium event traffic near {s1} St. Expect delays.",
    "lane-blocked": "Lane blocked due to flooding on {s1} St.",
    "flow-incident": "Broken traffic light on {s1} St. Use caution.",
}


@dataclass
class SynthScenario:
    seed: int = 0
    anchor_lat: float = 33.70
    anchor_lng: float = -84.45
    rows: int = 3
    cols: int = 3
    cell_size: float = 5000.0
    start: str = "2018-06-04T04:00:00+00:00"
    weeks: int = 12
    utc_offset: float = -4.0
    rule: str = "traffic+poi"
    congestion_threshold: int = 2
    congestion_rate: float = 1.0
    other_rate: float = 0.05
    noise: float = 0.05
    junction_fraction: float = 0.5
    rush_slots: tuple = (0, 2)
    duplicates: int = 200
    duplicate_jitter_m: float = 200.0
    duplicate_jitter_min: float = 8.0
    intersection_radius: float = 30.0
    junction_radius: float = 100.0
    near_poi_fraction: float = 0.6
    pois_per_cell: float = 8.0
    stations: int = 2
    weather_missing: float = 0.05
    vocab_extra: int = 40

    def __post_init__(self):
        self.rush_slots = tuple(self.rush_slots)
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}")
        if not 0 <= self.noise < 0.5:
            raise ValueError("noise must lie in [0, 0.5)")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(GeoPoint(self.anchor_lat, self.anchor_lng), self.rows, self.cols,
                        self.cell_size)

    @property
    def start_s(self) -> int:
        return int(datetime.fromisoformat(self.start).timestamp())

    @property
    def n_intervals(self) -> int:
        return self.weeks * 7 * 96


@dataclass
class SynthCity:
    scenario: SynthScenario
    events: list
    weather: list
    pois: list
    vectors: WordVectorTable
    manifest: dict
    rule_grid: np.ndarray = field(repr=False, default=None)  # (regions, T) rule outcome


def _local_slot(t_s: int, utc_offset: float) -> tuple[int, bool]:
    local = t_s + int(round(utc_offset * 3600))
    days = local // 86400
    hour = (local - days * 86400) // 3600
    weekday = (days + 3) % 7 < 5
    for k, (lo, hi) in enumerate(((6, 10), (10, 15), (15, 19), (19, 22))):
        if lo <= hour < hi:
            return k, weekday
    return 4, weekday


class _Placer:
    """Rejection sampler that keeps same-type events apart in space and time."""

    def __init__(self, rng: RngStream, grid: GridSpec):
        self.rng = rng
        self.grid = grid
        self.recent: dict[tuple[int, str], list[tuple[int, float, float]]] = {}

    def _ok(self, key, t_s, north, east):
        for (t2, n2, e2) in self.recent.get(key, ()):
            if abs(t_s - t2) < _SEPARATION_S and math.hypot(north - n2, east - e2) < _SEPARATION_M:
                return False
        return True

    def place(self, cell, etype, t_s, anchors=(), max_offset=0.0, tries=60):
        """Local (north, east) metres inside ``cell`` or ``None`` if nothing fits.

        With ``anchors`` given, the point lies within ``max_offset`` of one of them.
        """
        r, c = cell
        size = self.grid.cell_size
        key = (r * self.grid.cols + c, etype)
        for _ in range(tries):
            if anchors:
                a = anchors[int(self.rng.integers(len(anchors)))]
                ang = self.rng.uniform(0, 2 * math.pi)
                d = max_offset * math.sqrt(self.rng.uniform(0, 1))
                north, east = a[0] + d * math.cos(ang), a[1] + d * math.sin(ang)
            else:
                north = r * size + self.rng.uniform(_EVENT_MARGIN_M, size - _EVENT_MARGIN_M)
                east = c * size + self.rng.uniform(_EVENT_MARGIN_M, size - _EVENT_MARGIN_M)
            if self._ok(key, t_s, north, east):
                lst = self.recent.setdefault(key, [])
                lst.append((t_s, north, east))
                if len(lst) > 64:
                    cutoff = t_s - 2 * _SEPARATION_S
                    self.recent[key] = [x for x in lst if x[0] >= cutoff]
                return north, east
        return None


def _to_point(grid: GridSpec, north: float, east: float) -> GeoPoint:
    lat = grid.anchor.lat + north / METERS_PER_DEGREE
    lng = grid.anchor.lng + east / (METERS_PER_DEGREE * math.cos(math.radians(grid.anchor.lat)))
    return GeoPoint(lat, lng)


def _ts(t_s: int) -> datetime:
    return datetime.fromtimestamp(int(t_s), tz=timezone.utc)


def _street(rng):
    return _STREETS[int(rng.integers(len(_STREETS)))].capitalize()


def generate(s: SynthScenario) -> SynthCity:
    """Build a synthetic city in memory; see :func:`write_city` for the files."""
    root = RngStream(s.seed)
    r_poi, r_evt, r_dup, r_wx, r_vec, r_place = root.spawn(6)
    grid = s.grid
    size = s.cell_size
    n_regions = s.rows * s.cols
    placer = _Placer(r_place, grid)

    # --- POIs -------------------------------------------------------------
    n_junction = int(round(s.junction_fraction * n_regions))
    junction_cells = set(np.sort(r_poi.permutation(n_regions)[:n_junction]).tolist())
    pois: list[PoiRecord] = []
    anchors = {"junction": {}, "intersection": {}}
    inter_types = ("crossing", "stop", "traffic-signal")
    other_types = ("amenity", "bump", "give-way", "no-exit", "railway", "roundabout", "station",
                   "traffic-calming", "turning-loop")
    for k in range(n_regions):
        r, c = divmod(k, s.cols)

        def spot():
            return (r * size + r_poi.uniform(_POI_MARGIN_M, size - _POI_MARGIN_M),
                    c * size + r_poi.uniform(_POI_MARGIN_M, size - _POI_MARGIN_M))

        if k in junction_cells:
            for _ in range(1 + int(r_poi.integers(3))):
                pt = spot()
                anchors["junction"].setdefault(k, []).append(pt)
                pois.append(PoiRecord(_to_point(grid, *pt), "junction"))
        for _ in range(int(r_poi.poisson(s.pois_per_cell)) + 1):
            pt = spot()
            ptype = inter_types[int(r_poi.integers(len(inter_types)))]
            anchors["intersection"].setdefault(k, []).append(pt)
            pois.append(PoiRecord(_to_point(grid, *pt), ptype))
        for _ in range(int(r_poi.poisson(2))):
            pt = spot()
            pois.append(PoiRecord(_to_point(grid, *pt),
                                  other_types[int(r_poi.integers(len(other_types)))]))

    # --- traffic events and planted accident rule ---------------------------
    t0 = s.start_s
    T = s.n_intervals
    other = [t for t in EVENT_TYPES if t not in ("accident", "congestion")]
    events: list[EventRecord] = []
    congestion = np.zeros((n_regions, T), dtype=np.int64)
    rule = np.zeros((n_regions, T), dtype=bool)
    accident = np.zeros((n_regions, T), dtype=bool)
    serial = 0

    def emit(k, etype, t_s, pos, desc):
        nonlocal serial
        serial += 1
        events.append(EventRecord(
            id=f"M{serial:07d}", source=Source.MAPQUEST, etype=etype,
            location=_to_point(grid, *pos), start_time=_ts(t_s),
            end_time=_ts(t_s + 60 * int(15 + r_evt.integers(45))), description=desc,
            severity=int(1 + r_evt.integers(4))))

    for i in range(T):
        t_start = t0 + i * INTERVAL_S
        slot, weekday = _local_slot(t_start, s.utc_offset)
        for k in range(n_regions):
            cell = divmod(k, s.cols)
            n_cong = int(r_evt.poisson(s.congestion_rate))
            for _ in range(n_cong):
                t_s = t_start + int(r_evt.integers(INTERVAL_S))
                pos = placer.place(cell, "congestion", t_s)
                if pos is None:
                    continue
                congestion[k, i] += 1
                emit(k, "congestion", t_s, pos, _DESCRIPTIONS["congestion"].format(
                    s1=_street(r_evt), s2=_street(r_evt), s3=_street(r_evt)))
            for etype in other:
                for _ in range(int(r_evt.poisson(s.other_rate))):
                    t_s = t_start + int(r_evt.integers(INTERVAL_S))
                    pos = placer.place(cell, etype, t_s)
                    if pos is not None:
                        emit(k, etype, t_s, pos, _DESCRIPTIONS[etype].format(s1=_street(r_evt)))
            if i == 0:
                continue
            hit = congestion[k, i - 1] >= s.congestion_threshold
            if s.rule == "traffic+poi":
                hit = hit and k in junction_cells
            elif s.rule == "traffic+time":
                hit = hit and weekday and slot in s.rush_slots
            rule[k, i] = hit
            p = (1 - s.noise) if hit else s.noise
            if r_evt.random() >= p:
                continue
            t_s = t_start + int(r_evt.integers(INTERVAL_S))
            pos = None
            if r_evt.random() < s.near_poi_fraction:
                fam = "junction" if k in junction_cells else "intersection"
                radius = s.junction_radius if fam == "junction" else s.intersection_radius
                pos = placer.place(cell, "accident", t_s, anchors[fam].get(k, ()), 1.5 * radius)
            if pos is None:
                pos = placer.place(cell, "accident", t_s)
            if pos is None:
                continue
            accident[k, i] = True
            emit(k, "accident", t_s, pos, _accident_description(pos, k, anchors, s, r_evt))

    # --- planted duplicates ---------------------------------------------------
    n_dup = min(s.duplicates, len(events))
    picks = np.sort(r_dup.permutation(len(events))[:n_dup])
    dups = []
    for j, b in enumerate(picks.tolist()):
        base = events[b]
        ang = r_dup.uniform(0, 2 * math.pi)
        d = r_dup.uniform(0, s.duplicate_jitter_m)
        north = (base.location.lat - grid.anchor.lat) * METERS_PER_DEGREE + d * math.cos(ang)
        east = ((base.location.lng - grid.anchor.lng) * METERS_PER_DEGREE
                * math.cos(math.radians(grid.anchor.lat)) + d * math.sin(ang))
        shift = int(r_dup.integers(30, int(s.duplicate_jitter_min * 60)))
        dup = EventRecord(id=f"B{j:07d}", source=Source.BING, etype=base.etype,
                          location=_to_point(grid, north, east),
                          start_time=base.start_time + timedelta(seconds=shift),
                          end_time=base.end_time + timedelta(seconds=shift),
                          description=base.description, severity=base.severity)
        dups.append(dup)
    all_events = sorted(events + dups, key=lambda e: (e.start_time, e.id))

    # --- weather ----------------------------------------------------------------
    weather = []
    span_n = s.rows * size
    span_e = s.cols * size
    hours = s.weeks * 7 * 24 + 1
    for st in range(s.stations):
        loc = _to_point(grid, r_wx.uniform(0.2, 0.8) * span_n, r_wx.uniform(0.2, 0.8) * span_e)
        temp = 25.0
        for h in range(hours):
            temp = 0.95 * temp + 0.05 * 25.0 + r_wx.normal(0, 0.8)
            t_s = t0 - 3600 + h * 3600 + 53 * 60
            vals = {"temperature": round(temp, 1),
                    "humidity": float(np.clip(round(60 + r_wx.normal(0, 15)), 0, 100)),
                    "pressure": round(1013 + r_wx.normal(0, 5), 1),
                    "visibility": round(float(np.clip(10 + r_wx.normal(0, 2), 0, 16)), 1),
                    "wind_speed": round(abs(r_wx.normal(10, 5)), 1),
                    "precipitation": round(float(max(0.0, r_wx.normal(0, 0.5))), 2)}
            for key in list(vals):
                if r_wx.random() < s.weather_missing:
                    vals[key] = None
            flags = {"rain": bool(vals["precipitation"] and vals["precipitation"] > 0.3),
                     "snow": False, "fog": bool(r_wx.random() < 0.02),
                     "hail": bool(r_wx.random() < 0.002)}
            weather.append(WeatherRecord(f"K{st:03d}", loc, _ts(t_s), **vals, **flags))

    # --- word vectors ------------------------------------------------------------
    from .featurize import tokenize
    vocab = sorted({tok for e in all_events for tok in tokenize(e.description)})
    vocab += [f"filler{k}" for k in range(s.vocab_extra)]
    vectors = WordVectorTable(vocab, np.round(r_vec.normal(0, 0.5, (len(vocab), 100)), 5))

    # --- manifest ------------------------------------------------------------------
    windows_per_region = T - 8
    manifest = {
        "scenario": {**asdict(s), "rush_slots": list(s.rush_slots)},
        "regions": n_regions,
        "junction_regions": sorted(junction_cells),
        "intervals": T,
        "expected_windows": n_regions * windows_per_region,
        "windows_per_region": windows_per_region,
        "base_events": len(events),
        "planted_duplicates": [{"duplicate": d.id, "of": events[b].id}
                               for d, b in zip(dups, picks.tolist())],
        "expected_survivors": len(events),
        "planted_radii": {"intersection": s.intersection_radius, "junction": s.junction_radius},
        "rule": {"kind": s.rule, "congestion_threshold": s.congestion_threshold,
                 "noise": s.noise, "rush_slots": list(s.rush_slots)},
        "rule_positive_windows": int(rule[:, 8:].sum()),
        "accident_windows": int(accident[:, 8:].sum()),
        "analytic_accident_rate": analytic_rate(s),
    }
    return SynthCity(s, all_events, weather, pois, vectors, manifest, rule)


def _accident_description(pos, k, anchors, s, rng) -> str:
    def near(fam, radius):
        return any(math.hypot(pos[0] - a[0], pos[1] - a[1]) <= radius
                   for a in anchors[fam].get(k, ()))

    if near("junction", s.junction_radius):
        hw = _HIGHWAYS[int(rng.integers(len(_HIGHWAYS)))].upper()
        return f"Accident on {hw} at Exit {int(rng.integers(1, 300))}."
    if near("intersection", s.intersection_radius):
        return f"Accident on {_street(rng)} St at {_street(rng)} Ave."
    return f"Accident reported near {_street(rng)} St. Expect delays."


def analytic_rate(s: SynthScenario) -> float:
    """Expected accident probability per (region, interval) under the scenario's rule."""
    lam, k = s.congestion_rate, s.congestion_threshold
    p_cong = 1.0 - sum(math.exp(-lam) * lam ** j / math.factorial(j) for j in range(k))
    if s.rule == "traffic+poi":
        n_regions = s.rows * s.cols
        p_rule = p_cong * round(s.junction_fraction * n_regions) / n_regions
    elif s.rule == "traffic+time":
        # fraction of intervals that fall on weekday rush slots
        hours = {0: 4, 1: 5, 2: 4, 3: 3, 4: 8}
        p_rule = p_cong * (5 / 7) * sum(hours[k] for k in s.rush_slots) / 24
    else:
        p_rule = p_cong
    return p_rule * (1 - s.noise) + (1 - p_rule) * s.noise


def rule_predictions(city: SynthCity, region_cells, starts_s) -> np.ndarray:
    """The planted rule evaluated for the interval following each window."""
    s = city.scenario
    T = s.n_intervals
    k = (np.asarray(starts_s) - s.start_s) // INTERVAL_S + 8
    grid_idx = np.asarray(region_cells)
    out = np.zeros(len(k), dtype=np.int64)
    ok = (k >= 0) & (k < T)
    out[ok] = city.rule_grid[grid_idx[ok], k[ok]]
    return out


def write_city(city: SynthCity, out_dir) -> dict:
    """Write events.csv, weather.csv, poi.csv, vectors.txt and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_events(city.events, out / "events.csv")
    write_weather(city.weather, out / "weather.csv")
    write_poi(city.pois, out / "poi.csv")
    write_word_vectors(city.vectors, out / "vectors.txt")
    np.save(out / "rule_grid.npy", city.rule_grid, allow_pickle=False)
    manifest = dict(city.manifest)
    manifest["files"] = {name: hashlib.sha256((out / name).read_bytes()).hexdigest()
                         for name in ("events.csv", "weather.csv", "poi.csv", "vectors.txt")}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# small corpora for the integration and calibration checks


def dedup_corpus(seed: int, n_base: int = 200, n_dups: int = 40, dist: float = 250.0,
                 minutes: float = 10.0):
    """Events plus jittered copies; returns (events, expected survivor ids).

    Copies sit strictly inside ``dist`` metres and ``minutes`` of their base
    in either direction. Bases of a type are kept far enough apart (3x both
    thresholds) that clusters never touch.
    """
    rng = RngStream(seed)
    anchor = GeoPoint(40.0, -83.0)
    types = EVENT_TYPES[:3]
    t0 = 1_530_000_000
    span_s = int(6 * 3600)
    bases = []
    placed: list[tuple[str, int, float, float]] = []
    while len(bases) < n_base:
        etype = types[int(rng.integers(len(types)))]
        t_s = t0 + int(rng.integers(span_s))
        north, east = rng.uniform(0, 20000), rng.uniform(0, 20000)
        if any(e == etype and abs(t_s - t2) < 3 * minutes * 60
               and math.hypot(north - n2, east - e2) < 3 * dist for e, t2, n2, e2 in placed):
            continue
        placed.append((etype, t_s, north, east))
        src = (Source.MAPQUEST, Source.BING)[int(rng.integers(2))]
        bases.append(EventRecord(f"E{len(bases):05d}", src, etype,
                                 anchor.offset(north, east), _ts(t_s), _ts(t_s + 1800)))
    clusters = {b.id: [b] for b in bases}
    for j in range(n_dups):
        b_i = int(rng.integers(n_base))
        b = bases[b_i]
        _, t_s, north, east = placed[b_i]
        ang, d = rng.uniform(0, 2 * math.pi), rng.uniform(0, 0.95 * dist)
        shift = int(rng.integers(-int(0.95 * minutes * 60), int(0.95 * minutes * 60)))
        src = (Source.MAPQUEST, Source.BING, Source.SYNTHETIC)[int(rng.integers(3))]
        dup = EventRecord(f"D{j:05d}", src, b.etype,
                          anchor.offset(north + d * math.cos(ang), east + d * math.sin(ang)),
                          _ts(t_s + shift), _ts(t_s + shift + 1800))
        clusters[b.id].append(dup)
    events = [e for c in clusters.values() for e in c]
    survivors = sorted(min(c, key=lambda e: e.sort_key).id for c in clusters.values())
    order = rng.permutation(len(events))
    return [events[k] for k in order], survivors


def calibration_corpus(r_star: float, family: str = "intersection", seed: int = 0,
                       n: int = 100, candidates=None):
    """Accidents and POIs whose description labels agree with proximity exactly at ``r_star``.

    Matching accidents get a family POI at a distance inside some candidate
    interval no larger than ``r_star``; the rest get their closest family POI
    beyond ``r_star`` (or none at all). Accidents sit 2 km apart so POIs of
    different accidents never interfere.
    """
    from .augment import CANDIDATE_RADII, FAMILY_POI_TYPES

    cands = sorted(candidates or CANDIDATE_RADII)
    rng = RngStream(seed)
    anchor = GeoPoint(34.0, -84.0)
    below = [c for c in cands if c <= r_star]
    above = [c for c in cands if c > r_star]
    lo_edges = [0.0] + below[:-1]
    accidents, pois = [], []
    ptypes = FAMILY_POI_TYPES[family]
    side = int(math.ceil(math.sqrt(n)))
    n_match = n // 2
    for k in range(n):
        north, east = 2000.0 * (k // side), 2000.0 * (k % side)
        loc = anchor.offset(north, east)
        if k < n_match:
            j = k % len(below)
            d = rng.uniform(lo_edges[j] + 0.25 * (below[j] - lo_edges[j]), below[j] - 0.5)
            desc = ("Accident on I-75 at Exit 12." if family == "junction"
                    else "Accident on Main St at Oak Ave.")
        else:
            d = None
            if above and k % 4:
                j = k % len(above)
                lo = r_star if j == 0 else above[j - 1]
                d = rng.uniform(lo + 0.5, above[j] - 0.5)
            desc = "Accident reported. Expect delays."
        accidents.append(EventRecord(f"A{k:04d}", Source.MAPQUEST, "accident", loc,
                                     _ts(1_530_000_000 + 60 * k), _ts(1_530_000_000 + 60 * k + 900),
                                     desc))
        if d is not None:
            ang = rng.uniform(0, 2 * math.pi)
            pois.append(PoiRecord(loc.offset(d * math.cos(ang), d * math.sin(ang)),
                                  ptypes[k % len(ptypes)]))
    return accidents, pois
