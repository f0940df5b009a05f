"""Trajectory data model, CSV ingestion and geodesic helpers."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DataError, ParseError

EARTH_RADIUS_KM = 6371.0
DEFAULT_MAX_GAP = 1800

TRACK_HEADER = ("vessel_id", "ts", "lat", "lon")
STATION_HEADER = ("station_id", "lat", "lon")
LABEL_HEADER = ("vessel_id", "group")


class GeoPoint(NamedTuple):
    lat: float
    lon: float

    def validate(self) -> "GeoPoint":
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate {self}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        return self


class TrackSample(NamedTuple):
    t: int
    pos: GeoPoint


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VesselTrack:
    """Time-ordered samples of one vessel, stored column-wise."""

    node_id: str
    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t, np.int64))
        object.__setattr__(self, "lat", _frozen(self.lat, np.float64))
        object.__setattr__(self, "lon", _frozen(self.lon, np.float64))
        if len(self.t) == 0:
            raise DataError(f"track {self.node_id!r} has no samples")
        if not (len(self.t) == len(self.lat) == len(self.lon)):
            raise DataError(f"track {self.node_id!r} has ragged columns")
        if np.any(np.diff(self.t) <= 0):
            raise DataError(f"track {self.node_id!r} timestamps not strictly increasing")

    @classmethod
    def from_samples(cls, node_id: str, samples: Iterable[TrackSample]) -> "VesselTrack":
        samples = list(samples)
        return cls(
            node_id,
            [s.t for s in samples],
            [s.pos.lat for s in samples],
            [s.pos.lon for s in samples],
        )

    @property
    def samples(self) -> list[TrackSample]:
        return [
            TrackSample(int(t), GeoPoint(float(la), float(lo)))
            for t, la, lo in zip(self.t, self.lat, self.lon)
        ]

    @property
    def span(self) -> tuple[int, int]:
        return int(self.t[0]), int(self.t[-1])

    def __len__(self):
        return len(self.t)

    def __eq__(self, other):
        if not isinstance(other, VesselTrack):
            return NotImplemented
        return (
            self.node_id == other.node_id
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.lat, other.lat)
            and np.array_equal(self.lon, other.lon)
        )

    __hash__ = None


class Station(NamedTuple):
    node_id: str
    pos: GeoPoint


@dataclass(frozen=True)
class Fleet:
    vessels: tuple[VesselTrack, ...]
    stations: tuple[Station, ...] = ()

    def __post_init__(self):
        vessels = tuple(sorted(self.vessels, key=lambda v: v.node_id))
        stations = tuple(sorted(self.stations, key=lambda s: s.node_id))
        object.__setattr__(self, "vessels", vessels)
        object.__setattr__(self, "stations", stations)
        ids = [v.node_id for v in vessels] + [s.node_id for s in stations]
        if len(set(ids)) != len(ids):
            raise DataError("node ids must be unique across vessels and stations")

    @property
    def vessel_ids(self) -> list[str]:
        return [v.node_id for v in self.vessels]

    @property
    def station_ids(self) -> list[str]:
        return [s.node_id for s in self.stations]

    def with_stations(self, stations: Iterable[Station]) -> "Fleet":
        return Fleet(self.vessels, tuple(stations))

    def subset(self, vessel_ids: Iterable[str]) -> "Fleet":
        keep = set(vessel_ids)
        return Fleet(tuple(v for v in self.vessels if v.node_id in keep), self.stations)

    def time_span(self) -> tuple[int, int] | None:
        if not self.vessels:
            return None
        return (min(v.span[0] for v in self.vessels), max(v.span[1] for v in self.vessels))


# -- geodesy ---------------------------------------------------------------

def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


def haversine_np(lat1, lon1, lat2, lon2):
    """Vectorised great-circle distance in km. Used by every bulk range test."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(1.0, h)))


def km_to_deg_lat(km: float) -> float:
    return math.degrees(km / EARTH_RADIUS_KM)


def offset_point(p: GeoPoint, north_km: float, east_km: float) -> GeoPoint:
    """Flat-earth offset, fine for the tens of km used by the generator."""
    lat = p.lat + km_to_deg_lat(north_km)
    lon = p.lon + km_to_deg_lat(east_km) / max(math.cos(math.radians(p.lat)), 1e-6)
    return GeoPoint(lat, lon)


# -- interpolation ---------------------------------------------------------

def interpolate_track(track: VesselTrack, times, max_gap: float = DEFAULT_MAX_GAP):
    """Positions of ``track`` at ``times``; NaN where the vessel is not sailing.

    Returns ``(lat, lon)`` float arrays shaped like ``times``.
    """
    times = np.asarray(times, dtype=np.int64)
    ts = track.t
    n = len(ts)
    idx = np.searchsorted(ts, times, side="right") - 1
    lat = np.full(times.shape, np.nan)
    lon = np.full(times.shape, np.nan)

    valid = idx >= 0
    i0 = np.where(valid, idx, 0)
    exact = valid & (ts[i0] == times)
    lat[exact] = track.lat[i0[exact]]
    lon[exact] = track.lon[i0[exact]]

    i1 = np.minimum(i0 + 1, n - 1)
    gap = ts[i1] - ts[i0]
    inside = valid & ~exact & (i0 + 1 < n) & (gap <= max_gap)
    if inside.any():
        a, b = i0[inside], i1[inside]
        frac = (times[inside] - ts[a]) / gap[inside]
        lat[inside] = track.lat[a] + (track.lat[b] - track.lat[a]) * frac
        lon[inside] = track.lon[a] + (track.lon[b] - track.lon[a]) * frac
    return lat, lon


def position_at(track: VesselTrack, t: int, max_gap: float = DEFAULT_MAX_GAP) -> GeoPoint | None:
    if max_gap <= 0:
        raise ValueError("max_gap must be positive")
    lat, lon = interpolate_track(track, np.array([t]), max_gap)
    if np.isnan(lat[0]):
        return None
    return GeoPoint(float(lat[0]), float(lon[0]))


# -- CSV I/O -----------------------------------------------------------------

def _text(content) -> str:
    if isinstance(content, (bytes, bytearray)):
        return content.decode("utf-8")
    return content


def _rows(content, header, what) -> Iterator[tuple[int, list[str]]]:
    reader = csv.reader(io.StringIO(_text(content)))
    first = next(reader, None)
    if first is None:
        raise DataError(f"empty {what} file")
    if tuple(c.strip() for c in first) != header:
        raise ParseError(f"expected header {','.join(header)}, got {','.join(first)}", line=1)
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=reader.line_num)
        yield reader.line_num, [c.strip() for c in row]


def _parse_point(lat_s, lon_s, line) -> GeoPoint:
    try:
        p = GeoPoint(float(lat_s), float(lon_s))
    except ValueError:
        raise ParseError(f"bad coordinate {lat_s!r},{lon_s!r}", line=line) from None
    try:
        return p.validate()
    except ValueError as exc:
        raise ParseError(str(exc), line=line) from None


def parse_tracks(content) -> tuple[VesselTrack, ...]:
    """Parse trajectory CSV content (bytes or str) into tracks sorted by id."""
    by_id: dict[str, dict[int, GeoPoint]] = {}
    for line, (vid, ts_s, lat_s, lon_s) in _rows(content, TRACK_HEADER, "trajectory"):
        if not vid:
            raise ParseError("empty vessel_id", line=line)
        try:
            ts = int(ts_s)
        except ValueError:
            raise ParseError(f"timestamp {ts_s!r} is not an integer", line=line) from None
        if ts < 0:
            raise ParseError(f"negative timestamp {ts}", line=line)
        p = _parse_point(lat_s, lon_s, line)
        samples = by_id.setdefault(vid, {})
        prev = samples.get(ts)
        if prev is not None and prev != p:
            raise DataError(f"line {line}: conflicting positions for {vid!r} at t={ts}")
        samples[ts] = p
    tracks = []
    for vid in sorted(by_id):
        items = sorted(by_id[vid].items())
        tracks.append(
            VesselTrack(vid, [t for t, _ in items], [p.lat for _, p in items], [p.lon for _, p in items])
        )
    return tuple(tracks)


def parse_stations(content) -> tuple[Station, ...]:
    stations = {}
    for line, (sid, lat_s, lon_s) in _rows(content, STATION_HEADER, "station"):
        if not sid:
            raise ParseError("empty station_id", line=line)
        if sid in stations:
            raise DataError(f"line {line}: duplicate station {sid!r}")
        stations[sid] = Station(sid, _parse_point(lat_s, lon_s, line))
    return tuple(stations[s] for s in sorted(stations))


def parse_labels(content) -> dict[str, str]:
    return {vid: group for _, (vid, group) in _rows(content, LABEL_HEADER, "labels")}


def format_tracks(tracks: Iterable[VesselTrack]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACK_HEADER)
    for tr in sorted(tracks, key=lambda v: v.node_id):
        for t, la, lo in zip(tr.t.tolist(), tr.lat.tolist(), tr.lon.tolist()):
            w.writerow((tr.node_id, t, repr(la), repr(lo)))
    return out.getvalue()


def format_stations(stations: Iterable[Station]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(STATION_HEADER)
    for s in sorted(stations):
        w.writerow((s.node_id, repr(float(s.pos.lat)), repr(float(s.pos.lon))))
    return out.getvalue()


def format_labels(labels: dict[str, object]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LABEL_HEADER)
    for vid in sorted(labels):
        w.writerow((vid, labels[vid]))
    return out.getvalue()


def read_fleet(tracks_path, stations_path=None) -> Fleet:
    vessels = parse_tracks(Path(tracks_path).read_bytes())
    stations = parse_stations(Path(stations_path).read_bytes()) if stations_path else ()
    return Fleet(vessels, stations)
