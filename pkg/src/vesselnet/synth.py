"""Synthetic fishing fleets with planted group structure.

Each group owns a territory holding one home anchorage and 2-4 fishing
grounds. Vessels alternate between resting at home (no position reports, so
they drop out of the network) and trips home -> ground -> home, loitering on
the ground while fishing. Territories sit in separate cells of a grid laid
over the region, so groups only meet when a trip strays to a foreign ground.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .geo import EARTH_RADIUS_KM, Fleet, GeoPoint, VesselTrack, offset_point

HOUR = 3600


@dataclass(frozen=True)
class SyntheticFleetParams:
    n_vessels: int = 600
    n_groups: int = 12
    # lat_min, lat_max, lon_min, lon_max
    region: tuple[float, float, float, float] = (26.0, 34.0, 121.0, 128.0)
    speed_mean: float = 15.0  # km/h
    trip_noise: float = 2.0  # km
    p_mix: float = 0.05
    duration: int = 14 * 86400
    sample_interval: int = 180
    seed: int = 0
    start_time: int = 1_420_070_400
    territory_km: float = 80.0
    fishing_radius_km: float = 8.0
    fishing_speed: float = 4.0  # km/h
    fishing_hours: tuple[float, float] = (6.0, 30.0)
    rest_hours: tuple[float, float] = (4.0, 16.0)

    def validate(self) -> "SyntheticFleetParams":
        lat0, lat1, lon0, lon1 = self.region
        if not (lat1 > lat0 and lon1 > lon0):
            raise ParameterError(f"region {self.region} has zero area")
        if not (-90 <= lat0 and lat1 <= 90 and -180 <= lon0 and lon1 <= 180):
            raise ParameterError(f"region {self.region} outside valid coordinates")
        if self.n_groups < 1:
            raise ParameterError("n_groups must be >= 1")
        if self.n_vessels < self.n_groups:
            raise ParameterError("n_vessels must be >= n_groups")
        if not 0.0 <= self.p_mix <= 1.0:
            raise ParameterError("p_mix must lie in [0, 1]")
        if self.speed_mean <= 0 or self.fishing_speed <= 0:
            raise ParameterError("speeds must be positive")
        if self.duration <= 0 or self.sample_interval <= 0:
            raise ParameterError("duration and sample_interval must be positive")
        if self.trip_noise < 0 or self.territory_km <= 0 or self.fishing_radius_km < 0:
            raise ParameterError("distances must be non-negative")
        if min(self.rest_hours) * HOUR <= 2 * self.sample_interval:
            raise ParameterError("rest periods must exceed two sample intervals")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticFleetParams":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k in ("region", "fishing_hours", "rest_hours"):
            if k in known:
                known[k] = tuple(known[k])
        try:
            return cls(**known).validate()
        except TypeError as exc:
            raise ParameterError(str(exc)) from None


@dataclass(frozen=True)
class SyntheticFleet:
    vessels: tuple[VesselTrack, ...]
    labels: dict[str, int]
    homes: tuple[GeoPoint, ...]
    grounds: tuple[tuple[GeoPoint, ...], ...]
    params: SyntheticFleetParams = field(repr=False)

    @property
    def fleet(self) -> Fleet:
        return Fleet(self.vessels)


def _grid_shape(n, height_km, width_km):
    best = None
    for cols in range(1, n + 1):
        rows = math.ceil(n / cols)
        aspect = (height_km / rows) / (width_km / cols)
        score = (abs(math.log(aspect)), rows * cols)
        if best is None or score < best[0]:
            best = (score, rows, cols)
    return best[1], best[2]


def _layout(p: SyntheticFleetParams, rng):
    lat0, lat1, lon0, lon1 = p.region
    mid_lat = math.radians((lat0 + lat1) / 2)
    deg_km = math.pi * EARTH_RADIUS_KM / 180
    height_km = (lat1 - lat0) * deg_km
    width_km = (lon1 - lon0) * deg_km * math.cos(mid_lat)
    rows, cols = _grid_shape(p.n_groups, height_km, width_km)
    radius = min(p.territory_km, 0.3 * min(height_km / rows, width_km / cols))

    homes, grounds = [], []
    for g in range(p.n_groups):
        r, c = divmod(g, cols)
        center = GeoPoint(lat0 + (r + 0.5) * (lat1 - lat0) / rows, lon0 + (c + 0.5) * (lon1 - lon0) / cols)

        def draw():
            rr = radius * math.sqrt(rng.random())
            th = 2 * math.pi * rng.random()
            return offset_point(center, rr * math.sin(th), rr * math.cos(th))

        homes.append(draw())
        grounds.append(tuple(draw() for _ in range(int(rng.integers(2, 5)))))
    return tuple(homes), tuple(grounds)


def _noisy(pt, sd, rng):
    if sd == 0:
        return pt
    dn, de = rng.normal(0.0, sd, size=2)
    return offset_point(pt, dn, de)


def _km(a: GeoPoint, b: GeoPoint) -> float:
    # flat approximation consistent with offset_point; only used for travel times
    dn = (b.lat - a.lat) * math.pi * EARTH_RADIUS_KM / 180
    de = (b.lon - a.lon) * math.pi * EARTH_RADIUS_KM / 180 * math.cos(math.radians((a.lat + b.lat) / 2))
    return math.hypot(dn, de)


def _vessel_track(vid, group, p, homes, grounds, rng) -> VesselTrack:
    t_end = p.start_time + p.duration
    si = p.sample_interval
    fish_mean = rng.uniform(*p.fishing_hours) * HOUR
    rest_mean = rng.uniform(*p.rest_hours) * HOUR
    home = homes[group]

    times, lats, lons = [], [], []
    t = p.start_time + rng.uniform(0, fish_mean + rest_mean)
    while t < t_end:
        # departures sit on the sample grid so the first report is at home
        t = p.start_time + math.ceil((t - p.start_time) / si) * si
        wp_t, wp = [t], [home]

        def go(target, speed):
            d = _km(wp[-1], target)
            wp_t.append(wp_t[-1] + d / speed * HOUR)
            wp.append(target)

        if p.n_groups > 1 and rng.random() < p.p_mix:
            other = int(rng.integers(0, p.n_groups - 1))
            other += other >= group
            ground_set = grounds[other]
        else:
            ground_set = grounds[group]
        ground = ground_set[int(rng.integers(0, len(ground_set)))]
        speed = max(0.25 * p.speed_mean, rng.normal(p.speed_mean, 0.2 * p.speed_mean))
        spot = _noisy(ground, p.trip_noise, rng)
        go(spot, speed)

        fish_until = wp_t[-1] + rng.uniform(0.5, 1.5) * fish_mean
        while wp_t[-1] < fish_until:
            rr = p.fishing_radius_km * math.sqrt(rng.random())
            th = 2 * math.pi * rng.random()
            go(offset_point(spot, rr * math.sin(th), rr * math.cos(th)), p.fishing_speed)

        speed = max(0.25 * p.speed_mean, rng.normal(p.speed_mean, 0.2 * p.speed_mean))
        go(_noisy(home, p.trip_noise, rng), speed)
        go(home, p.fishing_speed)

        arrive = wp_t[-1]
        grid = np.arange(wp_t[0], min(arrive, t_end - 1) + 1e-9, si)
        if len(grid):
            wlat = np.array([w.lat for w in wp])
            wlon = np.array([w.lon for w in wp])
            times.append(grid)
            lats.append(np.interp(grid, wp_t, wlat))
            lons.append(np.interp(grid, wp_t, wlon))
        t = arrive + rng.uniform(0.5, 1.5) * rest_mean

    if not times:
        return VesselTrack(vid, [p.start_time], [round(home.lat, 6)], [round(home.lon, 6)])
    tt = np.concatenate(times).round().astype(np.int64)
    return VesselTrack(vid, tt, np.round(np.concatenate(lats), 6), np.round(np.concatenate(lons), 6))


def generate_fleet(params: SyntheticFleetParams) -> SyntheticFleet:
    """Generate a deterministic synthetic fleet and its planted group labels."""
    p = params.validate()
    homes, grounds = _layout(p, np.random.default_rng([p.seed, 0]))
    width = max(5, len(str(p.n_vessels - 1)))
    vessels, labels = [], {}
    for i in range(p.n_vessels):
        vid = f"V{i:0{width}d}"
        group = i % p.n_groups
        rng = np.random.default_rng([p.seed, 1, i])
        vessels.append(_vessel_track(vid, group, p, homes, grounds, rng))
        labels[vid] = group
    return SyntheticFleet(tuple(vessels), labels, homes, grounds, p)
