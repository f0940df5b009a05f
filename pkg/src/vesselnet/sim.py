"""Tick-synchronous store-carry-forward simulation over vessel contacts."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .contacts import DEFAULT_RANGE_KM, DEFAULT_TICK, ContactEvent, NodeIndex, extract_contacts, tick_times
from .errors import ParameterError
from .geo import DEFAULT_MAX_GAP, Fleet, GeoPoint, Station, haversine_km, haversine_np
from .model import SocialModel, clip_events
from .routing import PROTOCOLS, EncounterContext, Packet, make_router
from .social import SocialParams


@dataclass(frozen=True)
class SourceArea:
    area_id: str
    center: GeoPoint
    radius_km: float = 20.0
    period: int = 600
    # defaults to the station nearest the area centre
    dest_station: str | None = None


@dataclass(frozen=True)
class SimConfig:
    tick: int = DEFAULT_TICK
    range_km: float = DEFAULT_RANGE_KM
    ttl: int = 7200
    social: SocialParams = SocialParams()
    sources: tuple[SourceArea, ...] = ()
    stations: tuple[Station, ...] = ()
    train_span: tuple[int, int] | None = None
    eval_span: tuple[int, int] | None = None
    train_fraction: float = 0.7
    protocol: str = "cbr"
    rw_probability: float = 0.6
    seed: int = 0
    max_gap: int = DEFAULT_MAX_GAP

    def validate(self) -> "SimConfig":
        if self.tick <= 0 or self.ttl <= 0 or self.range_km <= 0:
            raise ParameterError("tick, ttl and range_km must be positive")
        if self.protocol not in PROTOCOLS:
            raise ParameterError(f"unknown protocol {self.protocol!r}")
        if not 0.0 <= self.rw_probability <= 1.0:
            raise ParameterError("rw_probability must lie in [0, 1]")
        if not 0.0 < self.train_fraction < 1.0:
            raise ParameterError("train_fraction must lie in (0, 1)")
        for s in self.sources:
            if s.radius_km <= 0 or s.period < self.tick:
                raise ParameterError(f"source {s.area_id}: radius must be > 0 and period >= tick")
        if self.train_span and self.eval_span and self.train_span[1] > self.eval_span[0]:
            raise ParameterError("train_span must precede eval_span")
        self.social.validate()
        return self

    def spans(self, fleet: Fleet) -> tuple[tuple[int, int], tuple[int, int]]:
        """Training and evaluation spans, splitting the trace when unset."""
        if self.train_span and self.eval_span:
            return tuple(self.train_span), tuple(self.eval_span)
        span = fleet.time_span()
        if span is None:
            raise ParameterError("spans must be given explicitly for an empty fleet")
        t0, t1 = span[0], span[1] + 1
        n_ticks = (t1 - t0) // self.tick
        cut = t0 + int(n_ticks * self.train_fraction) * self.tick
        train = tuple(self.train_span) if self.train_span else (t0, cut)
        ev = tuple(self.eval_span) if self.eval_span else (cut, t1)
        return train, ev

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sources"] = [
            {**asdict(s), "center": [s.center.lat, s.center.lon]} for s in self.sources
        ]
        d["stations"] = [{"station_id": s.node_id, "lat": s.pos.lat, "lon": s.pos.lon} for s in self.stations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        kw = {}
        try:
            if "social" in d:
                kw["social"] = SocialParams(**d.pop("social"))
            if "sources" in d:
                kw["sources"] = tuple(
                    SourceArea(**{**s, "center": GeoPoint(*s["center"])}) for s in d.pop("sources")
                )
            if "stations" in d:
                kw["stations"] = tuple(
                    Station(s["station_id"], GeoPoint(s["lat"], s["lon"])) for s in d.pop("stations")
                )
            for k in ("train_span", "eval_span"):
                if d.get(k) is not None:
                    kw[k] = tuple(d.pop(k))
            kw.update({k: v for k, v in d.items() if k in cls.__dataclass_fields__})
            return cls(**kw).validate()
        except (TypeError, KeyError) as exc:
            raise ParameterError(f"bad simulation config: {exc}") from None


@dataclass
class Metrics:
    protocol: str
    n_vessels: int
    generated: int = 0
    delivered: int = 0
    copies_per_delivered: list[int] = field(default_factory=list)
    delays: list[int] = field(default_factory=list)
    delivered_ids: list[str] = field(default_factory=list)

    @property
    def delivery_ratio(self) -> float:
        return self.delivered / self.generated if self.generated else 0.0

    @property
    def cost_cdf(self) -> list[tuple[int, float]]:
        n = len(self.copies_per_delivered)
        if not n:
            return []
        values, counts = np.unique(np.asarray(self.copies_per_delivered), return_counts=True)
        cum = np.cumsum(counts)
        return [(int(v), float(c) / n) for v, c in zip(values, cum)]

    def cost_quantile(self, q: float) -> float:
        if not self.copies_per_delivered:
            return math.nan
        return float(np.percentile(self.copies_per_delivered, q * 100))

    def to_json(self) -> dict:
        def quant(xs, qs):
            if not xs:
                return {str(q): None for q in qs}
            return {str(q): float(np.percentile(xs, q * 100)) for q in qs}

        return {
            "protocol": self.protocol,
            "n_vessels": self.n_vessels,
            "generated": self.generated,
            "delivered": self.delivered,
            "delivery_ratio": self.delivery_ratio,
            "cost_quantiles": quant(self.copies_per_delivered, (0.5, 0.9)),
            "delay_quantiles": quant(self.delays, (0.1, 0.5, 0.9)),
            "copies_per_delivered": list(self.copies_per_delivered),
            "delays": list(self.delays),
            "delivered_ids": list(self.delivered_ids),
        }


@dataclass
class Prepared:
    """Contacts for the training and evaluation spans, reusable across runs."""

    train_span: tuple[int, int]
    eval_span: tuple[int, int]
    train_contacts: list[ContactEvent]
    eval_contacts: list[ContactEvent]

    def restrict(self, keep: set[str]) -> "Prepared":
        def ok(e):
            return e.a in keep and e.b in keep

        return Prepared(
            self.train_span,
            self.eval_span,
            [e for e in self.train_contacts if ok(e)],
            [e for e in self.eval_contacts if ok(e)],
        )


def _fleet_with_stations(fleet: Fleet, config: SimConfig) -> Fleet:
    return fleet.with_stations(config.stations) if config.stations else fleet


def prepare(fleet: Fleet, config: SimConfig) -> Prepared:
    fleet = _fleet_with_stations(fleet, config)
    train, ev = config.spans(fleet)
    kw = dict(range_km=config.range_km, tick=config.tick, max_gap=config.max_gap)
    return Prepared(
        train,
        ev,
        extract_contacts(fleet, window=train, **kw) if fleet.vessels else [],
        extract_contacts(fleet, window=ev, **kw) if fleet.vessels else [],
    )


def _resolve_dest(src: SourceArea, stations) -> str:
    if src.dest_station is not None:
        if src.dest_station not in {s.node_id for s in stations}:
            raise ParameterError(f"source {src.area_id}: unknown station {src.dest_station!r}")
        return src.dest_station
    if not stations:
        raise ParameterError("no stations to deliver to")
    return min(stations, key=lambda s: (haversine_km(src.center, s.pos), s.node_id)).node_id


class _Positions:
    """Vessel positions over the evaluation ticks, computed a chunk at a time."""

    def __init__(self, fleet: Fleet, times, max_gap, chunk=720):
        self.index = NodeIndex(Fleet(fleet.vessels))
        self.times = times
        self.max_gap = max_gap
        self.chunk = chunk
        self._c = None

    def at(self, k):
        c = k // self.chunk
        if self._c is None or self._c[0] != c:
            lat, lon = self.index.positions(self.times[c * self.chunk:(c + 1) * self.chunk], self.max_gap)
            self._c = (c, lat, lon)
        r = k - c * self.chunk
        return self._c[1][r], self._c[2][r]


def run(fleet: Fleet, config: SimConfig, *, prepared: Prepared | None = None, model: SocialModel | None = None) -> Metrics:
    """Simulate one protocol over the evaluation span.

    Per tick: purge expired packets, generate and upload new ones, offer each
    held packet across fresh opportunities (a new contact, or a packet
    acquired on the previous tick meeting every current peer), then deliver
    copies in range of their destination station. Copies made on a tick are
    forwarded from the next tick on.
    """
    config.validate()
    fleet = _fleet_with_stations(fleet, config)
    prepared = prepared or prepare(fleet, config)
    train_span, eval_span = prepared.train_span, prepared.eval_span
    tick = config.tick
    metrics = Metrics(config.protocol, len(fleet.vessels))

    if model is None and config.protocol in ("cbr", "fbr"):
        model = SocialModel.from_params(
            config.social, range_km=config.range_km, tick=tick, max_gap=config.max_gap, seed=config.seed
        ).fit(prepared.train_contacts, window=train_span)
    router = make_router(
        config.protocol,
        graph=model.graph_ if model else None,
        stats=model.stats_ if model else None,
        communities=model.community_map_ if model else None,
        rw_probability=config.rw_probability,
        rng=np.random.default_rng([config.seed, 7]),
    )
    stations = fleet.stations
    station_ids = {s.node_id for s in stations}
    dests = {s.area_id: _resolve_dest(s, stations) for s in config.sources}

    times = tick_times(eval_span, tick)
    order = {nid: i for i, nid in enumerate(sorted(fleet.vessel_ids))}
    vessel_ids = fleet.vessel_ids
    positions = _Positions(fleet, times, config.max_gap) if fleet.vessels else None

    starts = defaultdict(list)
    ends = defaultdict(list)
    for e in clip_events(prepared.eval_contacts, eval_span, tick):
        starts[e.start].append(e)
        ends[e.end].append(e)

    peers: dict[str, set] = defaultdict(set)  # vessel -> vessels in range
    at_station: dict[str, set] = defaultdict(set)  # station -> vessels in range
    holders: dict[str, dict[str, Packet]] = {}  # packet -> carrier -> header
    held: dict[str, set] = defaultdict(set)  # vessel -> packet ids
    forwards: dict[str, int] = {}
    pending: list[Packet] = []
    live: dict[str, Packet] = {}
    seq = {}
    acquired_prev: dict[str, set] = {}

    def drop(pid):
        for v in holders.pop(pid, {}):
            held[v].discard(pid)
        live.pop(pid, None)
        forwards.pop(pid, None)

    for k, t in enumerate(times.tolist()):
        acquired_now: dict[str, set] = defaultdict(set)
        fresh = []
        for e in starts.get(t, ()):
            if e.a in station_ids or e.b in station_ids:
                st, v = (e.a, e.b) if e.a in station_ids else (e.b, e.a)
                at_station[st].add(v)
            else:
                peers[e.a].add(e.b)
                peers[e.b].add(e.a)
                fresh.append((e.a, e.b))

        for pid in [p for p, pkt in live.items() if not pkt.alive(t)]:
            drop(pid)
        pending = [p for p in pending if p.alive(t)]

        for src in config.sources:
            # only packets whose whole lifetime fits in the span are generated
            if (t - eval_span[0]) % src.period == 0 and t + config.ttl <= eval_span[1]:
                pid = f"{src.area_id}:{(t - eval_span[0]) // src.period}"
                pkt = Packet(pid, src.area_id, dests[src.area_id], t, config.ttl)
                seq[pid] = len(seq)
                pending.append(pkt)
                metrics.generated += 1

        if pending and positions is not None:
            lat, lon = positions.at(k)
            present = ~np.isnan(lat)
            still = []
            for pkt in pending:
                src = next(s for s in config.sources if s.area_id == pkt.source_area_id)
                carrier = None
                if present.any():
                    d = np.full(len(lat), np.inf)
                    d[present] = haversine_np(src.center.lat, src.center.lon, lat[present], lon[present])
                    j = int(np.argmin(d))
                    if d[j] <= src.radius_km:
                        carrier = vessel_ids[j]
                if carrier is None:
                    still.append(pkt)
                    continue
                holders[pkt.packet_id] = {carrier: pkt}
                held[carrier].add(pkt.packet_id)
                live[pkt.packet_id] = pkt
                forwards[pkt.packet_id] = 0
                acquired_now[carrier].add(pkt.packet_id)
            pending = still

        offers: dict[tuple[str, str], set] = defaultdict(set)
        for a, b in fresh:
            for u, v in ((a, b), (b, a)):
                for pid in held[u]:
                    if pid not in acquired_now[u]:
                        offers[(u, pid)].add(v)
        for u, pids in acquired_prev.items():
            for pid in pids:
                if pid in holders and u in holders[pid] and peers[u]:
                    offers[(u, pid)].update(peers[u])

        for (u, pid) in sorted(offers, key=lambda x: (order[x[0]], seq[x[1]])):
            copies = holders.get(pid)
            if copies is None or u not in copies:
                continue
            ctx = EncounterContext(
                u,
                tuple(sorted(offers[(u, pid)])),
                t,
                model.graph_ if model else None,
                model.community_map_ if model else None,
                frozenset(copies),
            )
            decision = router.decide(copies[u], ctx)
            if not decision.copies:
                continue
            copies[u] = decision.packet
            for v in decision.copies:
                copies[v] = decision.packet
                held[v].add(pid)
                acquired_now[v].add(pid)
            forwards[pid] += len(decision.copies)

        for pid in sorted(live, key=seq.__getitem__):
            here = at_station.get(live[pid].dest_station)
            if here and not here.isdisjoint(holders[pid]):
                pkt = live[pid]
                metrics.delivered += 1
                metrics.delivered_ids.append(pid)
                metrics.copies_per_delivered.append(forwards[pid])
                metrics.delays.append(t - pkt.created_at)
                drop(pid)

        for e in ends.get(t, ()):
            if e.a in station_ids or e.b in station_ids:
                st, v = (e.a, e.b) if e.a in station_ids else (e.b, e.a)
                at_station[st].discard(v)
            else:
                peers[e.a].discard(e.b)
                peers[e.b].discard(e.a)
        acquired_prev = dict(acquired_now)

    return metrics


def subset_order(fleet: Fleet, seed) -> list[str]:
    """Seeded vessel ordering; every prefix is a nested subset."""
    ids = sorted(fleet.vessel_ids)
    perm = np.random.default_rng([seed, 11]).permutation(len(ids))
    return [ids[i] for i in perm]


def sweep_fleet_size(fleet: Fleet, config: SimConfig, sizes, prepared: Prepared | None = None) -> dict[int, Metrics]:
    """Run the simulation on nested, seeded vessel subsets of each size."""
    fleet = _fleet_with_stations(fleet, config)
    if any(n > len(fleet.vessels) or n < 0 for n in sizes):
        raise ParameterError("sizes must lie between 0 and the fleet size")
    config.validate()
    train, ev = config.spans(fleet)
    config = replace(config, train_span=train, eval_span=ev)
    prepared = prepared or prepare(fleet, config)
    ranked = subset_order(fleet, config.seed)
    out = {}
    for n in sizes:
        keep = set(ranked[:n])
        sub = fleet.subset(keep)
        out[n] = run(sub, config, prepared=prepared.restrict(keep | set(sub.station_ids)))
    return out
