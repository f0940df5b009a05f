import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vesselnet.contacts import ContactEvent, aggregate_encounters
from vesselnet.routing import (
    DelayEstimator,
    EncounterContext,
    Packet,
    cbr_decide,
    estimate_delay,
    fbr_decide,
    flooding_decide,
    make_router,
    random_walk_decide,
)
from vesselnet.social import CommunityMap, FamiliarityGraph


def meetings(pair, interval, n=3, offset=0):
    return [ContactEvent(*sorted(pair), offset + k * interval, offset + k * interval) for k in range(n)]


def stats_from(*groups):
    events = [e for g in groups for e in g]
    return aggregate_encounters(events, sigma_floor=60)


def community_map(members, latest):
    """Map built straight from member sets; closeness follows from overlaps."""
    members = {k: frozenset(v) for k, v in members.items()}
    return CommunityMap([], [], members, dict(latest), dict(latest))


def pkt(**kw):
    base = dict(packet_id="S:0", source_area_id="S", dest_station="D", created_at=0, ttl=7200)
    base.update(kw)
    return Packet(**base)


# communities: 0 holds the destination, 1 overlaps 0 by two vessels, 2 by one
CM = community_map(
    {0: {"D", "x", "y", "m1", "m2"}, 1: {"c0", "z", "m1", "m2"}, 2: {"w", "m1"}},
    {"D": 0, "x": 0, "y": 0, "c0": 1, "z": 1, "w": 2, "m1": 0, "m2": 0},
)


class TestEstimateDelay:
    def test_direct(self):
        stats = stats_from(meetings(("v", "D"), 3600))
        assert estimate_delay("v", "D", stats, None) == 1800

    def test_two_hop_through_destination_community(self):
        stats = stats_from(meetings(("v", "m1"), 2000), meetings(("m1", "D"), 1000))
        assert estimate_delay("v", "D", stats, CM) == 1500

    def test_two_hop_takes_best_relay(self):
        stats = stats_from(
            meetings(("v", "m1"), 2000),
            meetings(("m1", "D"), 1000),
            meetings(("v", "x"), 400),
            meetings(("x", "D"), 600),
        )
        assert estimate_delay("v", "D", stats, CM) == 500

    def test_relay_outside_destination_community_ignored(self):
        stats = stats_from(meetings(("v", "z"), 100), meetings(("z", "D"), 100))
        assert estimate_delay("v", "D", stats, CM) == math.inf

    def test_single_meeting_has_no_interval(self):
        stats = stats_from(meetings(("v", "D"), 3600, n=1))
        assert estimate_delay("v", "D", stats, CM) == math.inf

    def test_unknown(self):
        assert estimate_delay("ghost", "D", {}, CM) == math.inf
        assert estimate_delay("v", "D", stats_from(meetings(("v", "q"), 50)), CM) == math.inf

    def test_estimator_cache_consistent(self):
        stats = stats_from(meetings(("v", "D"), 3600))
        est = DelayEstimator(stats, CM)
        assert est("v", "D") == est("v", "D") == 1800


class TestCBR:
    def ctx(self, peers, carrier="c0", holders=(), t=100):
        return EncounterContext(carrier, tuple(peers), t, communities=CM, holders=frozenset(holders))

    def test_forward_to_destination_community(self):
        stats = stats_from(meetings(("x", "D"), 1800))
        d = cbr_decide(pkt(), self.ctx(["x"]), stats)
        assert d.copies == ("x",)
        assert d.packet.best_delay == 900

    def test_no_closer_community(self):
        # carrier in 1 (closeness 2 to the destination's), peer in 2 (closeness 1)
        stats = stats_from(meetings(("w", "D"), 60))
        d = cbr_decide(pkt(), self.ctx(["w"]), stats)
        assert d.copies == ()
        assert d.packet.best_delay == math.inf

    def test_no_global_gain(self):
        stats = stats_from(meetings(("x", "D"), 2400))
        d = cbr_decide(pkt(best_delay=900), self.ctx(["x"]), stats)
        assert d.copies == ()
        assert d.packet.best_delay == 900

    def test_strict_gain(self):
        stats = stats_from(meetings(("x", "D"), 1800))
        assert cbr_decide(pkt(best_delay=900), self.ctx(["x"]), stats).copies == ()

    def test_picks_minimum_delay_single_copy(self):
        stats = stats_from(meetings(("x", "D"), 1800), meetings(("y", "D"), 600))
        d = cbr_decide(pkt(), self.ctx(["x", "y"]), stats)
        assert d.copies == ("y",)
        assert d.packet.best_delay == 300

    def test_carrier_in_destination_community_needs_same_community(self):
        stats = stats_from(meetings(("z", "D"), 60), meetings(("x", "D"), 6000))
        d = cbr_decide(pkt(), self.ctx(["z", "x"], carrier="y"), stats)
        assert d.copies == ("x",)

    def test_holders_excluded(self):
        stats = stats_from(meetings(("x", "D"), 1800))
        assert cbr_decide(pkt(), self.ctx(["x"], holders={"x"}), stats).copies == ()

    def test_expired(self):
        stats = stats_from(meetings(("x", "D"), 1800))
        assert cbr_decide(pkt(), self.ctx(["x"], t=7200), stats).copies == ()

    def test_without_communities(self):
        stats = stats_from(meetings(("x", "D"), 1800))
        ctx = EncounterContext("c0", ("x",), 0)
        assert cbr_decide(pkt(), ctx, stats).copies == ()


class TestFBR:
    g = FamiliarityGraph((), {("a", "D"): 5.0, ("b", "D"): 3.0, ("c", "D"): 4.0, ("e", "D"): 6.0})

    def ctx(self, peers, holders=()):
        return EncounterContext("v0", tuple(peers), 0, holders=frozenset(holders))

    def test_more_familiar_peer(self):
        d = fbr_decide(pkt(best_familiarity=3.0), self.ctx(["a"]), self.g)
        assert d.copies == ("a",) and d.packet.best_familiarity == 5.0

    def test_tie_not_forwarded(self):
        d = fbr_decide(pkt(best_familiarity=3.0), self.ctx(["b"]), self.g)
        assert d.copies == () and d.packet.best_familiarity == 3.0

    def test_all_qualifying_peers(self):
        d = fbr_decide(pkt(best_familiarity=3.0), self.ctx(["c", "e", "b"]), self.g)
        assert set(d.copies) == {"c", "e"}
        assert d.packet.best_familiarity == 6.0

    def test_missing_edge_is_zero(self):
        assert fbr_decide(pkt(), self.ctx(["nobody"]), self.g).copies == ()

    def test_fresh_packet_accepts_any_familiar_peer(self):
        assert fbr_decide(pkt(), self.ctx(["b"]), self.g).copies == ("b",)

    def test_holders_and_expiry(self):
        assert fbr_decide(pkt(), self.ctx(["a"], holders={"a"}), self.g).copies == ()
        ctx = EncounterContext("v0", ("a",), 10_000)
        assert fbr_decide(pkt(), ctx, self.g).copies == ()


class TestFlooding:
    def test_all_peers(self):
        d = flooding_decide(pkt(), EncounterContext("v", ("a", "b", "c"), 0))
        assert d.copies == ("a", "b", "c")

    def test_duplicate_suppression(self):
        d = flooding_decide(pkt(), EncounterContext("v", ("a", "b"), 0, holders=frozenset({"a"})))
        assert d.copies == ("b",)

    def test_no_peers(self):
        assert flooding_decide(pkt(), EncounterContext("v", (), 0)).copies == ()

    def test_carrier_cannot_be_peer(self):
        with pytest.raises(ValueError):
            EncounterContext("v", ("v",), 0)


class TestRandomWalk:
    def test_zero_probability(self):
        rng = np.random.default_rng(0)
        ctx = EncounterContext("v", tuple("abcdefgh"), 0)
        assert all(random_walk_decide(pkt(), ctx, 0.0, rng).copies == () for _ in range(50))

    def test_bernoulli_rate(self):
        rng = np.random.default_rng(2024)
        ctx = EncounterContext("v", ("a",), 0)
        hits = sum(len(random_walk_decide(pkt(), ctx, 0.6, rng).copies) for _ in range(10_000))
        assert abs(hits / 10_000 - 0.6) <= 0.02

    def test_seeded(self):
        ctx = EncounterContext("v", tuple("abcdefghij"), 0)
        a = [random_walk_decide(pkt(), ctx, 0.5, np.random.default_rng(3)).copies for _ in range(3)]
        assert a[0] == a[1] == a[2]

    def test_bad_probability(self):
        with pytest.raises(ValueError):
            random_walk_decide(pkt(), EncounterContext("v", (), 0), 1.5, np.random.default_rng(0))


peer_names = st.lists(st.sampled_from(list("abcdefghijklmnop")), unique=True, max_size=10)


@given(peer_names, peer_names, st.integers(0, 10_000), st.integers(0, 2**32 - 1))
def test_random_walk_certain_equals_flooding(peers, holders, t, seed):
    ctx = EncounterContext("v", tuple(peers), t, holders=frozenset(holders))
    p = pkt()
    rw = random_walk_decide(p, ctx, 1.0, np.random.default_rng(seed))
    assert rw == flooding_decide(p, ctx)


@given(peer_names, peer_names, st.integers(0, 10_000), st.floats(0, 10))
def test_deciders_respect_peers_holders_expiry(peers, holders, t, best):
    ctx = EncounterContext("v", tuple(peers), t, communities=CM, holders=frozenset(holders))
    g = FamiliarityGraph((), {(x, "D"): float(i + 1) for i, x in enumerate("abcdefghijklmnop")})
    stats = stats_from(*[meetings((x, "D"), 600 * (i + 1)) for i, x in enumerate("abcdefghijklmnop")])
    p = pkt(best_familiarity=best, best_delay=best * 600)
    decisions = [
        cbr_decide(p, ctx, stats),
        fbr_decide(p, ctx, g),
        flooding_decide(p, ctx),
        random_walk_decide(p, ctx, 0.6, np.random.default_rng(1)),
    ]
    for d in decisions:
        assert set(d.copies) <= set(peers) - set(holders)
        assert "v" not in d.copies
        if t >= p.ttl:
            assert d.copies == ()
    cbr, fbr = decisions[0], decisions[1]
    assert len(cbr.copies) <= 1
    assert cbr.packet.best_delay <= p.best_delay
    assert fbr.packet.best_familiarity >= p.best_familiarity
    assert set(fbr.copies) <= set(flooding_decide(p, ctx).copies)


def test_make_router():
    r = make_router("flooding")
    assert r.decide(pkt(), EncounterContext("v", ("a",), 0)).copies == ("a",)
    with pytest.raises(ValueError):
        make_router("teleport")
    with pytest.raises(ValueError):
        make_router("randomwalk", rw_probability=-0.1)
