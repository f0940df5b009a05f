"""Per-encounter forwarding rules: CBR, FBR, flooding and random walk.

Forwarding always replicates: the carrier keeps its copy and selected peers
receive one each. Header state (best delay for CBR, best familiarity for
FBR) travels with the packet and is written to every copy involved in a
forward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .contacts import EncounterStats
from .social import CommunityMap, FamiliarityGraph

PROTOCOLS = ("cbr", "fbr", "flooding", "randomwalk")
INF = math.inf


@dataclass(frozen=True)
class Packet:
    packet_id: str
    source_area_id: str
    dest_station: str
    created_at: int
    ttl: int
    best_delay: float = INF
    best_familiarity: float = 0.0

    def alive(self, t: int) -> bool:
        return t - self.created_at < self.ttl


@dataclass(frozen=True)
class EncounterContext:
    carrier: str
    peers: tuple[str, ...]
    t: int
    graph: FamiliarityGraph | None = None
    communities: CommunityMap | None = None
    # nodes already holding this packet
    holders: frozenset = frozenset()

    def __post_init__(self):
        if self.carrier in self.peers:
            raise ValueError("carrier cannot be its own peer")


@dataclass(frozen=True)
class ForwardDecision:
    copies: tuple[str, ...]
    packet: Packet


def _eligible(pkt, ctx):
    return [p for p in sorted(ctx.peers) if p not in ctx.holders and p != ctx.carrier]


# -- delay estimation ---------------------------------------------------------

class DelayEstimator:
    """Expected delivery delay from training encounter statistics.

    Direct: half the mean inter-encounter interval with the destination.
    Otherwise the best two-hop route through a member of the destination's
    community. Pairs need two or more encounters to have an interval.
    """

    def __init__(self, stats: Mapping[tuple[str, str], EncounterStats], communities: CommunityMap | None):
        self.communities = communities
        self._half: dict[str, dict[str, float]] = {}
        for (a, b), st in stats.items():
            if st.M >= 2:
                h = st.mean_interval / 2
                self._half.setdefault(a, {})[b] = h
                self._half.setdefault(b, {})[a] = h
        self._cache: dict[tuple[str, str], float] = {}

    def __call__(self, v: str, dest: str) -> float:
        key = (v, dest)
        if key not in self._cache:
            self._cache[key] = self._estimate(v, dest)
        return self._cache[key]

    def _estimate(self, v, dest):
        mine = self._half.get(v)
        if not mine:
            return INF
        if dest in mine:
            return mine[dest]
        if self.communities is None:
            return INF
        cd = self.communities.community_of(dest)
        if cd is None:
            return INF
        to_dest = self._half.get(dest, {})
        best = INF
        for m in self.communities.members.get(cd, ()):
            if m in mine and m in to_dest:
                best = min(best, mine[m] + to_dest[m])
        return best


def estimate_delay(v, dest, stats, communities) -> float:
    return DelayEstimator(stats, communities)(v, dest)


# -- deciders -----------------------------------------------------------------

def cbr_decide(pkt: Packet, ctx: EncounterContext, stats) -> ForwardDecision:
    """Community check, delay minimisation, then forward only on a global gain."""
    if not pkt.alive(ctx.t):
        return ForwardDecision((), pkt)
    delay = stats if callable(stats) else DelayEstimator(stats, ctx.communities)
    comm = ctx.communities
    cd = comm.community_of(pkt.dest_station) if comm else None
    c0 = comm.community_of(ctx.carrier) if comm else None
    base = comm.closeness(c0, cd) if comm else 0

    best_peer, best = None, INF
    for p in _eligible(pkt, ctx):
        if comm is None:
            continue
        ci = comm.community_of(p)
        if ci is None:
            continue
        if not ((cd is not None and ci == cd) or comm.closeness(ci, cd) > base):
            continue
        d = delay(p, pkt.dest_station)
        if d < best:
            best_peer, best = p, d
    if best_peer is None or not best < pkt.best_delay:
        return ForwardDecision((), pkt)
    return ForwardDecision((best_peer,), replace(pkt, best_delay=best))


def fbr_decide(pkt: Packet, ctx: EncounterContext, graph: FamiliarityGraph) -> ForwardDecision:
    if not pkt.alive(ctx.t):
        return ForwardDecision((), pkt)
    chosen, top = [], pkt.best_familiarity
    for p in _eligible(pkt, ctx):
        f = graph.weight(p, pkt.dest_station)
        if f > pkt.best_familiarity:
            chosen.append(p)
            top = max(top, f)
    if not chosen:
        return ForwardDecision((), pkt)
    return ForwardDecision(tuple(chosen), replace(pkt, best_familiarity=top))


def flooding_decide(pkt: Packet, ctx: EncounterContext) -> ForwardDecision:
    if not pkt.alive(ctx.t):
        return ForwardDecision((), pkt)
    return ForwardDecision(tuple(_eligible(pkt, ctx)), pkt)


def random_walk_decide(pkt: Packet, ctx: EncounterContext, p: float, rng: np.random.Generator) -> ForwardDecision:
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    if not pkt.alive(ctx.t):
        return ForwardDecision((), pkt)
    chosen = tuple(peer for peer in _eligible(pkt, ctx) if rng.random() < p)
    return ForwardDecision(chosen, pkt)


# -- protocol objects used by the simulator -----------------------------------

@dataclass
class Router:
    name: str
    decide: Callable[[Packet, EncounterContext], ForwardDecision]


def make_router(
    name: str,
    graph: FamiliarityGraph | None = None,
    stats=None,
    communities: CommunityMap | None = None,
    rw_probability: float = 0.6,
    rng: np.random.Generator | None = None,
) -> Router:
    """Build the decider for protocol token ``name``."""
    if name == "cbr":
        est = DelayEstimator(stats or {}, communities)
        return Router(name, lambda pkt, ctx: cbr_decide(pkt, ctx, est))
    if name == "fbr":
        g = graph if graph is not None else FamiliarityGraph((), {})
        return Router(name, lambda pkt, ctx: fbr_decide(pkt, ctx, g))
    if name == "flooding":
        return Router(name, flooding_decide)
    if name == "randomwalk":
        if not 0.0 <= rw_probability <= 1.0:
            raise ValueError("rw_probability must lie in [0, 1]")
        rng = rng if rng is not None else np.random.default_rng(0)
        return Router(name, lambda pkt, ctx: random_walk_decide(pkt, ctx, rw_probability, rng))
    raise ValueError(f"unknown protocol {name!r}; expected one of {', '.join(PROTOCOLS)}")
