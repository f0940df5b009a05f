"""Contact (encounter) extraction and per-pair encounter statistics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .geo import DEFAULT_MAX_GAP, EARTH_RADIUS_KM, Fleet, haversine_np, interpolate_track

DEFAULT_RANGE_KM = 30.0
DEFAULT_TICK = 60
CONTACT_HEADER = ("a", "b", "start", "end")


class ContactEvent(NamedTuple):
    a: str
    b: str
    start: int
    end: int


@dataclass(frozen=True)
class EncounterStats:
    pair: tuple[str, str]
    M: int
    intervals: tuple[int, ...]
    sigma: float
    mean_interval: float


def canonical(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


def tick_times(window, tick) -> np.ndarray:
    """Tick instants of the half-open window ``[t0, t1)``."""
    t0, t1 = window
    if tick <= 0:
        raise ValueError("tick must be positive")
    if not t0 < t1:
        raise ValueError("window must satisfy t0 < t1")
    return np.arange(t0, t1, tick, dtype=np.int64)


class NodeIndex:
    """Fleet nodes ordered by id, so index order is canonical pair order."""

    def __init__(self, fleet: Fleet):
        vessels = {v.node_id: v for v in fleet.vessels}
        stations = {s.node_id: s for s in fleet.stations}
        self.ids = sorted(list(vessels) + list(stations))
        self.pos = {nid: i for i, nid in enumerate(self.ids)}
        self.tracks = [vessels.get(nid) for nid in self.ids]
        self.station_pos = [stations[nid].pos if nid in stations else None for nid in self.ids]
        self.is_station = np.array([p is not None for p in self.station_pos], dtype=bool)

    def __len__(self):
        return len(self.ids)

    def positions(self, times, max_gap=DEFAULT_MAX_GAP):
        """``(lat, lon)`` arrays shaped ``(len(times), n_nodes)``; NaN = absent."""
        times = np.asarray(times, dtype=np.int64)
        lat = np.full((len(times), len(self.ids)), np.nan)
        lon = np.full_like(lat, np.nan)
        for j, (tr, sp) in enumerate(zip(self.tracks, self.station_pos)):
            if sp is not None:
                lat[:, j] = sp.lat
                lon[:, j] = sp.lon
            elif tr.t[0] <= times[-1] and tr.t[-1] >= times[0]:
                lat[:, j], lon[:, j] = interpolate_track(tr, times, max_gap)
        return lat, lon


def _expand(lo, hi):
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    src = np.repeat(np.arange(len(lo)), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return src, lo[src] + offs


def grid_pairs(lat, lon, bucket, range_km):
    """In-range pairs among points sharing a bucket, via a lat/lon grid.

    Cells are sized so that any two points within ``range_km`` land in the
    same or adjacent cells. Returns index arrays ``(i, j)`` with ``i < j``
    into the input arrays and the pair distances.
    """
    n = len(lat)
    empty = np.empty(0, dtype=np.int64)
    if n < 2:
        return empty, empty, np.empty(0)
    theta = range_km / EARTH_RADIUS_KM
    dlat = math.degrees(theta) * (1 + 1e-9)
    lat_min, lon_min = float(lat.min()), float(lon.min())
    max_abs = float(np.abs(lat).max())
    s = math.sin(theta / 2) / max(math.cos(math.radians(max_abs)), 1e-300)
    if s >= 1 or float(lon.max()) - lon_min > 180:
        iy = np.zeros(n, dtype=np.int64)
    else:
        dlon = math.degrees(2 * math.asin(s)) * (1 + 1e-9)
        iy = np.floor((lon - lon_min) / dlon).astype(np.int64)
    ix = np.floor((lat - lat_min) / dlat).astype(np.int64)
    nx = int(ix.max()) + 2
    ny = int(iy.max()) + 3
    key = (np.asarray(bucket, dtype=np.int64) * nx + ix) * ny + (iy + 1)

    order = np.argsort(key, kind="stable")
    skey = key[order]
    pos = np.arange(n)
    srcs, dsts = [], []
    hi = np.searchsorted(skey, skey, side="right")
    s_, d_ = _expand(pos + 1, hi)
    srcs.append(s_)
    dsts.append(d_)
    for dx, dy in ((0, 1), (1, -1), (1, 0), (1, 1)):
        target = skey + dx * ny + dy
        lo = np.searchsorted(skey, target, side="left")
        hi = np.searchsorted(skey, target, side="right")
        s_, d_ = _expand(lo, hi)
        srcs.append(s_)
        dsts.append(d_)
    i = order[np.concatenate(srcs)]
    j = order[np.concatenate(dsts)]
    i, j = np.minimum(i, j), np.maximum(i, j)
    d = haversine_np(lat[i], lon[i], lat[j], lon[j])
    keep = d <= range_km
    return i[keep], j[keep], d[keep]


def _runs(pair_key, tick_idx):
    """Collapse (pair, tick) observations into maximal runs of consecutive ticks."""
    if len(pair_key) == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e, e
    order = np.lexsort((tick_idx, pair_key))
    pk, tk = pair_key[order], tick_idx[order]
    brk = np.ones(len(pk), dtype=bool)
    brk[1:] = (pk[1:] != pk[:-1]) | (tk[1:] != tk[:-1] + 1)
    starts = np.flatnonzero(brk)
    ends = np.append(starts[1:], len(pk)) - 1
    return pk[starts], tk[starts], tk[ends]


def in_range_by_tick(index: NodeIndex, times, range_km, max_gap=DEFAULT_MAX_GAP):
    """All in-range node pairs for every tick: arrays ``(tick_idx, a, b)``."""
    lat, lon = index.positions(times, max_gap)
    rows, cols = np.nonzero(~np.isnan(lat))
    i, j, _ = grid_pairs(lat[rows, cols], lon[rows, cols], rows, range_km)
    a, b, tk = cols[i], cols[j], rows[i]
    keep = ~(index.is_station[a] & index.is_station[b])
    return tk[keep], a[keep], b[keep]


def extract_contacts(
    fleet: Fleet,
    range_km: float = DEFAULT_RANGE_KM,
    tick: int = DEFAULT_TICK,
    window=None,
    max_gap: float = DEFAULT_MAX_GAP,
    chunk_ticks: int = 720,
) -> list[ContactEvent]:
    """Maximal in-range intervals for vessel-vessel and vessel-station pairs.

    The window is half-open, ``[t0, t1)``, sampled every ``tick`` seconds; it
    defaults to the fleet's time span. Events are sorted by (start, a, b).
    """
    if window is None:
        span = fleet.time_span()
        if span is None:
            return []
        window = (span[0], span[1] + 1)
    times = tick_times(window, tick)
    index = NodeIndex(fleet)
    n = len(index)
    if not fleet.vessels or n < 2:
        return []

    keys, st, en = [], [], []
    for c0 in range(0, len(times), chunk_ticks):
        tk, a, b = in_range_by_tick(index, times[c0:c0 + chunk_ticks], range_km, max_gap)
        k, s, e = _runs(a.astype(np.int64) * n + b, tk.astype(np.int64) + c0)
        keys.append(k)
        st.append(s)
        en.append(e)
    k, s, e = np.concatenate(keys), np.concatenate(st), np.concatenate(en)

    # stitch runs that abut across chunk boundaries
    order = np.lexsort((s, k))
    k, s, e = k[order], s[order], e[order]
    if len(k):
        brk = np.ones(len(k), dtype=bool)
        brk[1:] = (k[1:] != k[:-1]) | (s[1:] != e[:-1] + 1)
        first = np.flatnonzero(brk)
        last = np.append(first[1:], len(k)) - 1
        k, s, e = k[first], s[first], e[last]

    order = np.lexsort((k, s))
    ids = index.ids
    t0 = int(times[0])
    return [
        ContactEvent(ids[kk // n], ids[kk % n], t0 + ss * tick, t0 + ee * tick)
        for kk, ss, ee in zip(k[order].tolist(), s[order].tolist(), e[order].tolist())
    ]


def aggregate_encounters(events: Iterable[ContactEvent], sigma_floor: float = DEFAULT_TICK) -> dict:
    """Per-pair encounter count, start-to-start intervals and their spread."""
    if sigma_floor <= 0:
        raise ValueError("sigma_floor must be positive")
    starts: dict[tuple[str, str], list[int]] = {}
    for ev in events:
        starts.setdefault(canonical(ev.a, ev.b), []).append(ev.start)
    stats = {}
    for pair in sorted(starts):
        s = sorted(starts[pair])
        intervals = tuple(int(b - a) for a, b in zip(s, s[1:]))
        if intervals:
            arr = np.asarray(intervals, dtype=float)
            sigma = max(float(arr.std()), float(sigma_floor))
            mean = float(arr.mean())
        else:
            sigma, mean = float(sigma_floor), math.inf
        stats[pair] = EncounterStats(pair, len(s), intervals, sigma, mean)
    return stats


def format_contacts(events: Iterable[ContactEvent]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CONTACT_HEADER)
    for ev in events:
        w.writerow(ev)
    return out.getvalue()


def parse_contacts(content) -> list[ContactEvent]:
    if isinstance(content, (bytes, bytearray)):
        content = content.decode("utf-8")
    reader = csv.reader(io.StringIO(content))
    header = next(reader, None)
    if header is None or tuple(header) != CONTACT_HEADER:
        raise ValueError("expected header a,b,start,end")
    return [ContactEvent(a, b, int(s), int(e)) for a, b, s, e in reader if a]
