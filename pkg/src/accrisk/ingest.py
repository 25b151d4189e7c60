"""Record types, file parsers/writers, and cross-source duplicate removal."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, RowError, SchemaError
from .geo import GeoPoint, haversine_array

log = logging.getLogger(__name__)

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MICROSECOND = timedelta(microseconds=1)


class Source(str, enum.Enum):
    MAPQUEST = "MapQuestLike"
    BING = "BingLike"
    SYNTHETIC = "Synthetic"

    @property
    def rank(self) -> int:
        return _SOURCE_RANK[self]


_SOURCE_RANK = {Source.MAPQUEST: 0, Source.BING: 1, Source.SYNTHETIC: 2}
_SOURCE_ALIASES = {"mapquest": Source.MAPQUEST, "bing": Source.BING, "synthetic": Source.SYNTHETIC}

# order fixes the layout of the 7-wide traffic count block
EVENT_TYPES = ("accident", "broken-vehicle", "congestion", "construction",
               "event", "lane-blocked", "flow-incident")

# order fixes the layout of the 13-wide POI block
POI_TYPES = ("amenity", "bump", "crossing", "give-way", "junction", "no-exit",
             "railway", "roundabout", "station", "stop", "traffic-calming",
             "traffic-signal", "turning-loop")

ADDRESS_FIELDS = ("number", "street", "side", "city", "county", "state", "zipcode", "country")

EVENT_COLUMNS = ("id", "source", "type", "lat", "lng", "start_time", "end_time",
                 "severity", "tmc", "description")
WEATHER_COLUMNS = ("station_id", "lat", "lng", "time", "temperature", "humidity",
                   "pressure", "visibility", "wind_speed", "precipitation",
                   "rain", "snow", "fog", "hail")
WEATHER_CONTINUOUS = ("temperature", "pressure", "humidity", "visibility",
                      "wind_speed", "precipitation")
WEATHER_FLAGS = ("rain", "snow", "fog", "hail")
POI_COLUMNS = ("lat", "lng", "type")


@dataclass(frozen=True)
class EventRecord:
    id: str
    source: Source
    etype: str
    location: GeoPoint
    start_time: datetime
    end_time: datetime
    description: str = ""
    severity: int | None = None
    tmc: str | None = None
    address: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.etype not in EVENT_TYPES:
            raise ValueError(f"unknown event type {self.etype!r}")
        if self.start_time > self.end_time:
            raise ValueError("start_time after end_time")
        if self.description is None:
            raise ValueError("description must be a string")

    @property
    def sort_key(self):
        return (self.start_time, self.source.rank, self.id)


@dataclass(frozen=True)
class WeatherRecord:
    station_id: str
    location: GeoPoint
    time: datetime
    temperature: float | None = None
    humidity: float | None = None
    pressure: float | None = None
    visibility: float | None = None
    wind_speed: float | None = None
    precipitation: float | None = None
    rain: bool = False
    snow: bool = False
    fog: bool = False
    hail: bool = False

    def __post_init__(self):
        if self.humidity is not None and not 0.0 <= self.humidity <= 100.0:
            raise ValueError(f"humidity {self.humidity} outside [0, 100]")
        if self.precipitation is not None and self.precipitation < 0:
            raise ValueError(f"negative precipitation {self.precipitation}")


@dataclass(frozen=True)
class PoiRecord:
    location: GeoPoint
    ptype: str

    def __post_init__(self):
        if self.ptype not in POI_TYPES:
            raise ValueError(f"unknown POI type {self.ptype!r}")


# ---------------------------------------------------------------------------
# scalar codecs


def parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    t = datetime.fromisoformat(text)
    if t.tzinfo is None:
        raise ValueError(f"timestamp {text!r} lacks a UTC offset")
    return t.astimezone(timezone.utc)


def format_time(t: datetime) -> str:
    return t.astimezone(timezone.utc).isoformat()


def _opt_float(text: str) -> float | None:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null", "none"):
        return None
    v = float(text)
    if not math.isfinite(v):
        return None
    return v


def _flag(text: str) -> bool:
    text = text.strip().lower()
    if text in ("", "0", "false", "no", "f"):
        return False
    if text in ("1", "true", "yes", "t"):
        return True
    raise ValueError(f"not a boolean flag: {text!r}")


def _fmt_float(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _source(text: str) -> Source:
    try:
        return Source(text.strip())
    except ValueError:
        try:
            return _SOURCE_ALIASES[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown source {text!r}") from None


# ---------------------------------------------------------------------------
# events


def _event_from_mapping(row: dict, line: int) -> EventRecord:
    etype = (row.get("type") or "").strip().lower()
    if etype not in EVENT_TYPES:
        raise SchemaError(line, f"unknown event type {row.get('type')!r}")
    try:
        address = tuple((k, str(row[k])) for k in ADDRESS_FIELDS if row.get(k) not in (None, ""))
        sev = row.get("severity")
        tmc = row.get("tmc")
        return EventRecord(
            id=str(row["id"]).strip(),
            source=_source(str(row["source"])),
            etype=etype,
            location=GeoPoint(float(row["lat"]), float(row["lng"])),
            start_time=parse_time(str(row["start_time"])),
            end_time=parse_time(str(row["end_time"])),
            description="" if row.get("description") is None else str(row["description"]),
            severity=None if sev in (None, "") else int(sev),
            tmc=None if tmc in (None, "") else str(tmc),
            address=address,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise RowError(line, str(exc)) from None


def _require_header(header, required, path):
    missing = [c for c in required if c not in (header or ())]
    if missing:
        raise RowError(1, f"{path}: header missing columns {missing}")


def parse_events(path, format: str = "csv") -> list[EventRecord]:
    """Read traffic events from CSV (header required) or JSON lines."""
    path = Path(path)
    out = []
    if format == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for line, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    row = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise RowError(line, f"bad JSON: {exc}") from None
                out.append(_event_from_mapping(row, line))
        return out
    if format != "csv":
        raise ValueError(f"unknown event file format {format!r}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_header(reader.fieldnames, ("id", "source", "type", "lat", "lng",
                                            "start_time", "end_time"), path)
        for row in reader:
            out.append(_event_from_mapping(row, reader.line_num))
    return out


def _event_row(e: EventRecord, addr_cols) -> list[str]:
    addr = dict(e.address)
    return [e.id, e.source.value, e.etype, repr(e.location.lat), repr(e.location.lng),
            format_time(e.start_time), format_time(e.end_time),
            "" if e.severity is None else str(e.severity), e.tmc or "",
            e.description] + [addr.get(k, "") for k in addr_cols]


def write_events(events: Sequence[EventRecord], path, format: str = "csv") -> None:
    path = Path(path)
    addr_cols = [k for k in ADDRESS_FIELDS if any(k in dict(e.address) for e in events)]
    if format == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for e in events:
                row = dict(zip(EVENT_COLUMNS + tuple(addr_cols), _event_row(e, addr_cols)))
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(EVENT_COLUMNS) + addr_cols)
        for e in events:
            w.writerow(_event_row(e, addr_cols))


# ---------------------------------------------------------------------------
# weather and POI


def parse_weather(path) -> list[WeatherRecord]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_header(reader.fieldnames, WEATHER_COLUMNS[:4], path)
        for row in reader:
            line = reader.line_num
            try:
                out.append(WeatherRecord(
                    station_id=row["station_id"].strip(),
                    location=GeoPoint(float(row["lat"]), float(row["lng"])),
                    time=parse_time(row["time"]),
                    **{k: _opt_float(row.get(k) or "") for k in WEATHER_CONTINUOUS},
                    **{k: _flag(row.get(k) or "") for k in WEATHER_FLAGS},
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise RowError(line, str(exc)) from None
    return out


def write_weather(records: Sequence[WeatherRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_COLUMNS)
        for r in records:
            w.writerow([r.station_id, repr(r.location.lat), repr(r.location.lng), format_time(r.time),
                        _fmt_float(r.temperature), _fmt_float(r.humidity), _fmt_float(r.pressure),
                        _fmt_float(r.visibility), _fmt_float(r.wind_speed),
                        _fmt_float(r.precipitation)]
                       + [str(int(getattr(r, k))) for k in WEATHER_FLAGS])


def parse_poi(path) -> list[PoiRecord]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_header(reader.fieldnames, POI_COLUMNS, path)
        for row in reader:
            line = reader.line_num
            ptype = (row.get("type") or "").strip().lower().replace("_", "-").replace(" ", "-")
            if ptype not in POI_TYPES:
                raise SchemaError(line, f"unknown POI type {row.get('type')!r}")
            try:
                out.append(PoiRecord(GeoPoint(float(row["lat"]), float(row["lng"])), ptype))
            except (KeyError, ValueError, TypeError) as exc:
                raise RowError(line, str(exc)) from None
    return out


def write_poi(pois: Sequence[PoiRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POI_COLUMNS)
        for p in pois:
            w.writerow([repr(p.location.lat), repr(p.location.lng), p.ptype])


# ---------------------------------------------------------------------------
# word vectors


class WordVectorTable:
    """Token to vector lookup backed by one dense matrix; keys are lowercase."""

    def __init__(self, tokens: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError("vectors must be (len(tokens), dim)")
        self.dimension = vectors.shape[1]
        self.vectors = vectors
        self.index = {t.lower(): i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.index)

    def __contains__(self, token):
        return token.lower() in self.index

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self.index[token.lower()]]

    def get(self, token, default=None):
        i = self.index.get(token.lower())
        return default if i is None else self.vectors[i]


def parse_word_vectors(path, dim: int = 100) -> WordVectorTable:
    """Load a GloVe-style text file: a token then ``dim`` reals per line."""
    rows: dict[str, int] = {}
    chunks: list[str] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            parts = text.rstrip("\n").rstrip().split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise DimensionError(line, f"expected {dim} values, found {len(parts) - 1}")
            token = parts[0].lower()
            if token in rows:
                log.warning("duplicate token %r on line %d; keeping the later vector", token, line)
            rows[token] = len(chunks)
            chunks.append(" ".join(parts[1:]))
    if not chunks:
        return WordVectorTable([], np.zeros((0, dim)))
    try:
        flat = np.array(" ".join(chunks).split(), dtype=float)
    except ValueError as exc:
        raise DimensionError(0, f"non-numeric vector component: {exc}") from None
    mat = flat.reshape(len(chunks), dim)
    tokens = sorted(rows, key=rows.get)
    return WordVectorTable(tokens, mat[[rows[t] for t in tokens]])


def write_word_vectors(table: WordVectorTable, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for tok, i in table.index.items():
            fh.write(tok + " " + " ".join(repr(float(v)) for v in table.vectors[i]) + "\n")


# ---------------------------------------------------------------------------
# duplicate removal


@dataclass(frozen=True)
class DedupReport:
    total_in: int
    clusters_merged: int
    duplicates_removed: int

    @property
    def total_out(self) -> int:
        return self.total_in - self.duplicates_removed

    @property
    def duplicate_fraction(self) -> float:
        return self.duplicates_removed / self.total_in if self.total_in else 0.0

    def to_dict(self) -> dict:
        return {"total_in": self.total_in, "clusters_merged": self.clusters_merged,
                "duplicates_removed": self.duplicates_removed,
                "duplicate_fraction": self.duplicate_fraction}


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def duplicate_clusters(events: Sequence[EventRecord], dist_threshold: float = 250.0,
                       time_threshold: float = 10.0) -> list[list[int]]:
    """Index clusters formed by linking same-type events closer than both thresholds."""
    n = len(events)
    ds = _DisjointSet(n)
    window_us = int(round(time_threshold * 60e6))
    by_type: dict[str, list[int]] = {}
    for i, e in enumerate(events):
        by_type.setdefault(e.etype, []).append(i)
    for idx in by_type.values():
        idx = np.asarray(idx, dtype=np.int64)
        t_us = np.array([(events[i].start_time - _EPOCH) // _MICROSECOND for i in idx],
                        dtype=np.int64)
        order = np.argsort(t_us, kind="stable")
        idx, t_us = idx[order], t_us[order]
        lat = np.array([events[i].location.lat for i in idx])
        lng = np.array([events[i].location.lng for i in idx])
        # partners of position a are a+1 .. end[a]-1 (start-time gap strictly below window)
        end = np.searchsorted(t_us, t_us + window_us, side="left")
        a = np.arange(len(idx))
        d = 1
        while True:
            a = a[a + d < end[a]]
            if a.size == 0:
                break
            b = a + d
            close = haversine_array(lat[a], lng[a], lat[b], lng[b]) < dist_threshold
            for u, v in zip(idx[a[close]].tolist(), idx[b[close]].tolist()):
                ds.union(u, v)
            d += 1
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(ds.find(i), []).append(i)
    return list(groups.values())


def deduplicate(events: Sequence[EventRecord], dist_threshold: float = 250.0,
                time_threshold: float = 10.0):
    """Collapse duplicate reports of the same event.

    Same-type events strictly closer than ``dist_threshold`` meters and
    ``time_threshold`` minutes (by start time) are linked, and linked events
    are clustered transitively. Each cluster keeps its earliest report
    (then source rank, then id). Survivors come back sorted by that key, so
    the output does not depend on input order.
    """
    if dist_threshold <= 0 or time_threshold <= 0:
        raise ValueError("dedup thresholds must be positive")
    clusters = duplicate_clusters(events, dist_threshold, time_threshold)
    survivors = [min((events[i] for i in c), key=lambda e: e.sort_key) for c in clusters]
    survivors.sort(key=lambda e: e.sort_key)
    report = DedupReport(len(events), sum(1 for c in clusters if len(c) > 1),
                         len(events) - len(survivors))
    return survivors, report
