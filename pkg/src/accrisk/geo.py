"""Great-circle distance, the metric city grid, and a bucketed spatial index."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import EmptyIndex, InvalidRadius, OutOfGrid

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEGREE = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True, order=True)
class GeoPoint:
    lat: float
    lng: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lng)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lng})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range")
        if not -180.0 <= self.lng <= 180.0:
            raise ValueError(f"longitude {self.lng} out of range")

    def offset(self, north_m: float = 0.0, east_m: float = 0.0) -> "GeoPoint":
        """Point displaced by metric offsets using the local equirectangular scale."""
        lat = self.lat + north_m / METERS_PER_DEGREE
        lng = self.lng + east_m / (METERS_PER_DEGREE * math.cos(math.radians(self.lat)))
        return GeoPoint(lat, lng)


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lng - a.lng)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def haversine_array(lat, lng, lats, lngs) -> np.ndarray:
    """Vectorised haversine from one point (or broadcastable arrays) to many."""
    phi1 = np.radians(lat)
    phi2 = np.radians(lats)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lngs) - lng)
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(1.0, h)))


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True, order=True)
class CellId:
    row: int
    col: int
    region_index: int


@dataclass(frozen=True)
class GridSpec:
    anchor: GeoPoint
    rows: int
    cols: int
    cell_size: float = 5000.0

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")

    @classmethod
    def covering(cls, points: Iterable[GeoPoint], cell_size: float = 5000.0) -> "GridSpec":
        """Smallest grid anchored at the points' south-west corner that holds them all."""
        pts = list(points)
        if not pts:
            raise ValueError("cannot build a grid over zero points")
        anchor = GeoPoint(min(p.lat for p in pts), min(p.lng for p in pts))
        north = max(p.lat for p in pts) - anchor.lat
        east = max(p.lng for p in pts) - anchor.lng
        scale = METERS_PER_DEGREE * math.cos(math.radians(anchor.lat))
        rows = int(north * METERS_PER_DEGREE // cell_size) + 1
        cols = int(east * scale // cell_size) + 1
        return cls(anchor, rows, cols, cell_size)

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def _meters(self, lat, lng):
        north = (np.asarray(lat, dtype=float) - self.anchor.lat) * METERS_PER_DEGREE
        east = ((np.asarray(lng, dtype=float) - self.anchor.lng) * METERS_PER_DEGREE
                * math.cos(math.radians(self.anchor.lat)))
        # micrometre rounding keeps points constructed exactly on an edge on that edge
        return np.round(north, 6), np.round(east, 6)

    def cell_indices(self, lat, lng):
        """Vectorised (row, col); entries outside the grid come back as -1."""
        north, east = self._meters(lat, lng)
        row = np.floor(north / self.cell_size).astype(np.int64)
        col = np.floor(east / self.cell_size).astype(np.int64)
        bad = (row < 0) | (row >= self.rows) | (col < 0) | (col >= self.cols)
        row = np.where(bad, -1, row)
        col = np.where(bad, -1, col)
        return row, col

    def center(self, row: int, col: int) -> GeoPoint:
        return self.anchor.offset((row + 0.5) * self.cell_size, (col + 0.5) * self.cell_size)


def cell_of(p: GeoPoint, g: GridSpec) -> CellId:
    """Cell holding ``p``; cells are half-open on their north and east edges."""
    row, col = g.cell_indices(p.lat, p.lng)
    row, col = int(row), int(col)
    if row < 0:
        raise OutOfGrid(f"{p} lies outside the {g.rows}x{g.cols} grid")
    return CellId(row, col, row * g.cols + col)


# ---------------------------------------------------------------------------
# spatial index


class SpatialIndex:
    """Immutable bucketed store of point-keyed items.

    Items are bucketed on a lat/lng lattice of roughly ``bucket_m`` meters.
    Radius queries scan only buckets overlapping the query's bounding box and
    then filter with exact haversine distances, so results match a full scan.
    Each item has an integer id (its insertion position) used for tie breaks.
    """

    def __init__(self, points: Sequence[GeoPoint], items: Sequence[Any] | None = None,
                 bucket_m: float = 1000.0):
        self.points = list(points)
        self.items = list(items) if items is not None else list(range(len(self.points)))
        if len(self.items) != len(self.points):
            raise ValueError("points and items differ in length")
        self.lats = np.array([p.lat for p in self.points], dtype=float)
        self.lngs = np.array([p.lng for p in self.points], dtype=float)
        self._dlat = bucket_m / METERS_PER_DEGREE
        self._buckets: dict[tuple[int, int], list[int]] = {}
        if len(self.points):
            max_abs_lat = float(np.max(np.abs(self.lats)))
            self._dlng = self._dlat / max(math.cos(math.radians(min(max_abs_lat, 89.0))), 1e-3)
            bi = np.floor(self.lats / self._dlat).astype(np.int64)
            bj = np.floor(self.lngs / self._dlng).astype(np.int64)
            for k, key in enumerate(zip(bi.tolist(), bj.tolist())):
                self._buckets.setdefault(key, []).append(k)
        else:
            self._dlng = self._dlat

    def __len__(self):
        return len(self.points)

    def _candidates(self, point: GeoPoint, r: float) -> np.ndarray:
        dlat = r / METERS_PER_DEGREE
        lat_lo, lat_hi = point.lat - dlat, point.lat + dlat
        if lat_lo <= -89.0 or lat_hi >= 89.0:
            return np.arange(len(self.points))
        coslat = min(math.cos(math.radians(lat_lo)), math.cos(math.radians(lat_hi)))
        dlng = dlat / coslat
        lng_lo, lng_hi = point.lng - dlng, point.lng + dlng
        if lng_lo < -180.0 or lng_hi > 180.0:
            return np.arange(len(self.points))
        i0, i1 = math.floor(lat_lo / self._dlat), math.floor(lat_hi / self._dlat)
        j0, j1 = math.floor(lng_lo / self._dlng), math.floor(lng_hi / self._dlng)
        if (i1 - i0 + 1) * (j1 - j0 + 1) > 4 * len(self._buckets) + 16:
            return np.arange(len(self.points))
        out: list[int] = []
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                out.extend(self._buckets.get((i, j), ()))
        return np.array(sorted(out), dtype=np.int64)

    def distances(self, point: GeoPoint, ids=None) -> np.ndarray:
        if ids is None:
            return haversine_array(point.lat, point.lng, self.lats, self.lngs)
        return haversine_array(point.lat, point.lng, self.lats[ids], self.lngs[ids])

    def within_radius_ids(self, point: GeoPoint, r: float):
        """(ids, distances) of items within ``r`` meters, ordered by distance then id."""
        if r < 0 or not math.isfinite(r):
            raise InvalidRadius(f"radius must be a non-negative finite number, got {r}")
        ids = self._candidates(point, r)
        if ids.size == 0:
            return ids, np.empty(0)
        d = self.distances(point, ids)
        keep = d <= r
        ids, d = ids[keep], d[keep]
        order = np.lexsort((ids, d))
        return ids[order], d[order]

    def nearest_id(self, point: GeoPoint):
        if not self.points:
            raise EmptyIndex("nearest() on an empty index")
        r = 4 * METERS_PER_DEGREE * self._dlat
        while r < 2.5e6:
            ids, d = self.within_radius_ids(point, r)
            if ids.size:
                return int(ids[0]), float(d[0])
            r *= 4
        d = self.distances(point)
        k = int(np.lexsort((np.arange(d.size), d))[0])
        return k, float(d[k])


def nearest(point: GeoPoint, idx: SpatialIndex):
    """Closest item and its distance in meters; ties go to the lowest item id."""
    k, d = idx.nearest_id(point)
    return idx.items[k], d


def within_radius(point: GeoPoint, idx: SpatialIndex, r: float) -> list:
    """Items no further than ``r`` meters away, sorted by distance then id."""
    ids, _ = idx.within_radius_ids(point, r)
    return [idx.items[k] for k in ids]
