import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vesselnet.errors import DataError, ParameterError, ParseError
from vesselnet.geo import (
    EARTH_RADIUS_KM,
    Fleet,
    GeoPoint,
    Station,
    VesselTrack,
    format_labels,
    format_stations,
    format_tracks,
    haversine_km,
    haversine_np,
    interpolate_track,
    parse_labels,
    parse_stations,
    parse_tracks,
    position_at,
)
from vesselnet.synth import SyntheticFleetParams, generate_fleet


def arc_km(deg):
    # length of an arc of `deg` degrees on the mean-radius sphere
    return EARTH_RADIUS_KM * deg * math.pi / 180


class TestHaversine:
    def test_identity(self):
        p = GeoPoint(30.5, 122.25)
        assert haversine_km(p, p) == 0.0

    def test_meridian_degree(self):
        d = haversine_km(GeoPoint(30, 121), GeoPoint(31, 121))
        assert d == pytest.approx(arc_km(1), abs=1e-9)
        assert d == pytest.approx(111.195, abs=1e-3)

    def test_equator_degree(self):
        d = haversine_km(GeoPoint(0, 0), GeoPoint(0, 1))
        assert d == pytest.approx(111.195, abs=1e-3)

    def test_antipodes(self):
        d = haversine_km(GeoPoint(0, 0), GeoPoint(0, 180))
        assert d == pytest.approx(math.pi * EARTH_RADIUS_KM)

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(5)
        lat = rng.uniform(-80, 80, (2, 50))
        lon = rng.uniform(-180, 180, (2, 50))
        got = haversine_np(lat[0], lon[0], lat[1], lon[1])
        want = [haversine_km(GeoPoint(lat[0, k], lon[0, k]), GeoPoint(lat[1, k], lon[1, k])) for k in range(50)]
        np.testing.assert_allclose(got, want, rtol=1e-12)


points = st.builds(
    GeoPoint,
    st.floats(-90, 90, allow_nan=False),
    st.floats(-180, 180, allow_nan=False),
)


@given(points, points)
def test_haversine_symmetric_nonnegative(a, b):
    d = haversine_km(a, b)
    assert d >= 0
    assert d == pytest.approx(haversine_km(b, a), abs=1e-9)


@settings(max_examples=300)
@given(points, points, points)
def test_haversine_triangle(a, b, c):
    assert haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9


def track(vid="v", t=(0, 180, 360), lat=(30.0, 30.1, 30.2), lon=(122.0, 122.0, 122.0)):
    return VesselTrack(vid, list(t), list(lat), list(lon))


class TestPositionAt:
    def test_sample_time_exact(self):
        tr = track()
        assert position_at(tr, 180) == GeoPoint(30.1, 122.0)

    def test_midpoint(self):
        tr = track(t=(0, 180), lat=(30.0, 30.2), lon=(122.0, 122.4))
        p = position_at(tr, 90)
        assert p.lat == pytest.approx(30.1, abs=1e-12)
        assert p.lon == pytest.approx(122.2, abs=1e-12)

    def test_inside_long_gap_absent(self):
        tr = track(t=(0, 7200), lat=(30, 31), lon=(122, 122))
        assert position_at(tr, 3600, max_gap=1800) is None
        assert position_at(tr, 3600, max_gap=7200) is not None

    def test_outside_span_absent(self):
        tr = track()
        assert position_at(tr, -1) is None
        assert position_at(tr, 361) is None

    def test_bad_max_gap(self):
        with pytest.raises(ValueError):
            position_at(track(), 0, max_gap=0)

    def test_single_sample_track(self):
        tr = track(t=(100,), lat=(30,), lon=(122,))
        assert position_at(tr, 100) == GeoPoint(30, 122)
        assert position_at(tr, 101) is None


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=30, unique=True), st.integers(0, 2**32 - 1))
def test_interpolation_reproduces_samples(ts, seed):
    ts = sorted(ts)
    rng = np.random.default_rng(seed)
    tr = VesselTrack("v", ts, rng.uniform(-60, 60, len(ts)), rng.uniform(-170, 170, len(ts)))
    lat, lon = interpolate_track(tr, tr.t, max_gap=1)
    np.testing.assert_array_equal(lat, tr.lat)
    np.testing.assert_array_equal(lon, tr.lon)


class TestTrack:
    def test_rejects_unsorted(self):
        with pytest.raises(DataError):
            track(t=(0, 360, 180))

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            VesselTrack("v", [], [], [])

    def test_columns_read_only(self):
        tr = track()
        with pytest.raises(ValueError):
            tr.lat[0] = 1.0

    def test_fleet_ids_unique(self):
        with pytest.raises(DataError):
            Fleet((track("a"),), (Station("a", GeoPoint(0, 0)),))


class TestParseTracks:
    def test_out_of_order_rows(self):
        text = "vessel_id,ts,lat,lon\nv1,360,30.2,122\nv1,0,30.0,122\nv1,180,30.1,122\n"
        (tr,) = parse_tracks(text)
        assert tr.t.tolist() == [0, 180, 360]
        assert tr.lat.tolist() == [30.0, 30.1, 30.2]

    def test_latitude_out_of_range_names_line(self):
        text = "vessel_id,ts,lat,lon\nv1,0,30,122\nv1,60,95,122\n"
        with pytest.raises(ParseError, match="line 3"):
            parse_tracks(text)

    def test_non_integer_timestamp(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_tracks("vessel_id,ts,lat,lon\nv1,1.5,30,122\n")

    def test_duplicates(self):
        dup = "vessel_id,ts,lat,lon\nv1,0,30,122\nv1,0,30,122\n"
        (tr,) = parse_tracks(dup)
        assert len(tr) == 1
        with pytest.raises(DataError):
            parse_tracks("vessel_id,ts,lat,lon\nv1,0,30,122\nv1,0,30.5,122\n")

    def test_bad_header(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_tracks("id,ts,lat,lon\nv1,0,30,122\n")

    def test_empty_file(self):
        with pytest.raises(DataError):
            parse_tracks(b"")

    def test_header_only(self):
        assert parse_tracks("vessel_id,ts,lat,lon\n") == ()

    def test_groups_by_vessel(self):
        text = "vessel_id,ts,lat,lon\nb,0,1,1\na,0,2,2\nb,60,1.1,1\n"
        tracks = parse_tracks(text.encode())
        assert [t.node_id for t in tracks] == ["a", "b"]
        assert len(tracks[1]) == 2


def test_stations_and_labels_round_trip():
    stations = (Station("P1", GeoPoint(29.9, 122.1)), Station("P0", GeoPoint(30.6, 121.5)))
    parsed = parse_stations(format_stations(stations))
    assert parsed == tuple(sorted(stations))
    labels = {"V1": 0, "V0": 3}
    assert parse_labels(format_labels(labels)) == {"V0": "3", "V1": "0"}
    with pytest.raises(DataError):
        parse_stations("station_id,lat,lon\nP,0,0\nP,1,1\n")


def test_generated_export_round_trip():
    synth = generate_fleet(SyntheticFleetParams(seed=2, duration=2 * 86400))
    parsed = parse_tracks(format_tracks(synth.vessels))
    assert len(parsed) == 600
    assert Fleet(parsed) == synth.fleet


class TestGenerator:
    def test_deterministic(self):
        p = SyntheticFleetParams(n_vessels=40, n_groups=4, duration=86400, seed=9)
        a = format_tracks(generate_fleet(p).vessels)
        b = format_tracks(generate_fleet(p).vessels)
        assert a == b
        c = format_tracks(generate_fleet(SyntheticFleetParams(n_vessels=40, n_groups=4, duration=86400, seed=10)).vessels)
        assert a != c

    def test_labels_and_ids(self):
        synth = generate_fleet(SyntheticFleetParams(n_vessels=36, n_groups=12, duration=86400))
        assert len(synth.vessels) == 36
        assert sorted(set(synth.labels.values())) == list(range(12))
        assert all(len(g) in (2, 3, 4) for g in synth.grounds)

    def test_inside_region(self):
        p = SyntheticFleetParams(n_vessels=60, duration=3 * 86400, seed=4)
        lat0, lat1, lon0, lon1 = p.region
        for tr in generate_fleet(p).vessels:
            assert np.all(np.diff(tr.t) > 0)
            assert lat0 <= tr.lat.min() and tr.lat.max() <= lat1
            assert lon0 <= tr.lon.min() and tr.lon.max() <= lon1

    def test_no_mixing_keeps_groups_apart(self):
        synth = generate_fleet(SyntheticFleetParams(n_vessels=40, n_groups=2, p_mix=0.0, duration=4 * 86400, seed=1))
        for tr in synth.vessels:
            other = 1 - synth.labels[tr.node_id]
            for g in synth.grounds[other]:
                d = haversine_np(tr.lat, tr.lon, g.lat, g.lon)
                assert d.min() > 100

    def test_vessels_rest_between_trips(self):
        synth = generate_fleet(SyntheticFleetParams(n_vessels=12, duration=5 * 86400, seed=3))
        gaps = np.concatenate([np.diff(tr.t) for tr in synth.vessels])
        assert (gaps > 1800).any()

    @pytest.mark.parametrize(
        "kw",
        [
            {"region": (30.0, 30.0, 121.0, 128.0)},
            {"region": (26.0, 34.0, 125.0, 121.0)},
            {"n_groups": 0},
            {"n_vessels": 5, "n_groups": 6},
            {"p_mix": 1.5},
        ],
    )
    def test_invalid_params(self, kw):
        with pytest.raises(ParameterError):
            generate_fleet(SyntheticFleetParams(**kw))

    def test_from_dict(self):
        p = SyntheticFleetParams.from_dict({"n_vessels": 24, "region": [26, 34, 121, 128], "unused": 1})
        assert p.n_vessels == 24 and p.region == (26, 34, 121, 128)
        with pytest.raises(ParameterError):
            SyntheticFleetParams.from_dict({"region": [1, 1, 2, 3]})
