import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgmevents import cluster, core
from cgmevents.cluster import NOISE, DbscanParams
from oracles import blobs, dbscan_bruteforce, point_in_polygon


def test_dbscan_two_blobs_match_oracle(backend):
    rng = np.random.default_rng(0)
    lat, lon = blobs(rng, 1, 50, 10, 0)
    lat2, lon2 = lat + 1000 / 111195.0, lon
    lat, lon = np.concatenate([lat, lat2]), np.concatenate([lon, lon2])
    p = DbscanParams(50, 10)
    got = cluster.dbscan((lat, lon), p, backend=backend)
    assert len(set(got[got >= 0])) == 2
    assert np.array_equal(got, dbscan_bruteforce(lat, lon, 50, 10)[0])


def test_dbscan_random_instances_match_oracle(backend):
    rng = np.random.default_rng(1)
    for _ in range(100):
        n_blobs = int(rng.integers(0, 5))
        lat, lon = blobs(rng, n_blobs, int(rng.integers(5, 40)), float(rng.uniform(5, 25)),
                         int(rng.integers(0, 40)))
        lat, lon = lat[:200], lon[:200]
        eps, mp = float(rng.uniform(10, 60)), int(rng.integers(2, 12))
        labels, core_ = cluster.dbscan_core((lat, lon), DbscanParams(eps, mp), backend=backend)
        ol, oc = dbscan_bruteforce(lat, lon, eps, mp)
        assert np.array_equal(labels, ol)
        assert np.array_equal(core_, oc)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(5, 80), st.integers(1, 8))
def test_dbscan_property_oracle(seed, eps, mp):
    rng = np.random.default_rng(seed)
    lat, lon = blobs(rng, 2, 20, 15, 20)
    assert np.array_equal(cluster.dbscan((lat, lon), DbscanParams(eps, mp)), dbscan_bruteforce(lat, lon, eps, mp)[0])


def test_indexed_equals_naive(backend):
    rng = np.random.default_rng(2)
    lat, lon = blobs(rng, 4, 60, 12, 100)
    p = DbscanParams(30, 8)
    assert np.array_equal(cluster.dbscan((lat, lon), p, backend=backend),
                          cluster.dbscan((lat, lon), p, naive=True, backend=backend))


def test_core_points_permutation_invariant():
    rng = np.random.default_rng(3)
    lat, lon = blobs(rng, 3, 30, 10, 30)
    p = DbscanParams(25, 6)
    _, core_a = cluster.dbscan_core((lat, lon), p)
    perm = rng.permutation(lat.size)
    _, core_b = cluster.dbscan_core((lat[perm], lon[perm]), p)
    assert np.array_equal(core_a[perm], core_b)


def test_raising_eps_never_adds_noise():
    rng = np.random.default_rng(4)
    lat, lon = blobs(rng, 3, 30, 15, 40)
    noise = [int(np.sum(cluster.dbscan((lat, lon), DbscanParams(e, 6)) == NOISE)) for e in (5, 10, 20, 40, 80)]
    assert noise == sorted(noise, reverse=True)


def test_dbscan_trivial_noise_cases():
    lat = 40 + np.arange(5) * 0.01
    lon = np.full(5, -83.0)
    assert (cluster.dbscan((lat, lon), DbscanParams(30, 2)) == NOISE).all()
    assert (cluster.dbscan((lat[:3] * 0 + 40, lon[:3]), DbscanParams(30, 4)) == NOISE).all()
    assert cluster.dbscan((np.zeros(0), np.zeros(0)), DbscanParams()).size == 0


def test_dbscan_near_pole_and_antimeridian():
    lat = np.array([89.9999, 89.9999, 89.9999])
    lon = np.array([0.0, 120.0, -120.0])
    assert (cluster.dbscan((lat, lon), DbscanParams(30, 3)) == 0).all()
    lat = np.array([10.0, 10.0, 10.0])
    lon = np.array([179.99995, -179.99995, 180.0])
    assert np.array_equal(cluster.dbscan((lat, lon), DbscanParams(30, 3)), dbscan_bruteforce(lat, lon, 30, 3)[0])


def test_hull_square_and_triangle():
    lon = np.array([0, 1, 1, 0, 0.5])
    lat = np.array([0, 0, 1, 1, 0.5])
    h = cluster.convex_hull(lon, lat)
    assert len(h.vertices) == 4 and not h.degenerate
    assert cluster.polygon_area(h.vertices) == pytest.approx(1.0)  # positive means CCW
    h = cluster.convex_hull([0, 1, 0], [0, 0, 1])
    assert len(h.vertices) == 3 and h.kind == "polygon"


def test_hull_degenerate_flags():
    assert cluster.convex_hull([1, 1], [2, 2]).kind == "point"
    h = cluster.convex_hull([0, 1, 2, 3], [0, 1, 2, 3])
    assert h.degenerate and h.kind == "segment"
    assert cluster.hull_contains(h, [1.5], [1.5]).all()


def test_hull_random_disk_against_ray_casting():
    rng = np.random.default_rng(5)
    r = np.sqrt(rng.random(100))
    a = rng.uniform(0, 2 * np.pi, 100)
    lon, lat = r * np.cos(a), r * np.sin(a)
    h = cluster.convex_hull(lon, lat)
    assert cluster.polygon_area(h.vertices) <= np.pi
    assert cluster.hull_contains(h, lon, lat).all()
    q = rng.uniform(-1.2, 1.2, (500, 2))
    fast = cluster.hull_contains(h, q[:, 0], q[:, 1], tol=0.0)
    slow = [point_in_polygon(x, y, h.vertices) for x, y in q]
    assert np.array_equal(fast, slow)


def test_hotspot_hull_contains_members():
    rng = np.random.default_rng(6)
    lat, lon = blobs(rng, 3, 40, 10, 10)
    fx = core.Fixes(np.arange(lat.size), lat, lon, np.zeros(lat.size))
    labels = cluster.dbscan(fx, DbscanParams(25, 5))
    for h in cluster.build_hotspots(fx, labels):
        assert len(h.members) >= 5
        assert cluster.hull_contains(h.hull, h.lon, h.lat).all()
        assert h.radius_m > 0


def test_filter_stationary_thresholds():
    proba = np.zeros((4, 7))
    proba[:, core.STATIONARY] = [1.0, 0.9, 0.5, np.nan]
    fx = core.Fixes([0, 15, 30, 45, 60], np.zeros(5), np.zeros(5), np.zeros(5))
    assert cluster.filter_stationary(fx, proba, 0, 15, 0.0).tolist() == [0, 1, 2]
    assert cluster.filter_stationary(fx, proba, 0, 15, 0.8).tolist() == [0, 1]
    noisy = proba.copy()
    noisy[:, core.STATIONARY] = [0.99, 0.9, 0.5, np.nan]
    assert cluster.filter_stationary(fx, noisy, 0, 15, 1.0).size == 0


def _hotspots_at(points_m, lat0=40.0, lon0=-83.0):
    out = []
    for i, (n, e) in enumerate(points_m):
        dlat, dlon = core.meters_to_degrees(n + np.array([0, 5, -5]), e + np.array([0, 5, 5]), lat0)
        lat, lon = lat0 + dlat, lon0 + dlon
        out.append(cluster.Hotspot(i, np.arange(3), lat, lon, cluster.convex_hull(lon, lat)))
    return out


def test_five_hotspots_single_superfence():
    hs = _hotspots_at([(0, 0), (300, 0), (0, 300), (300, 300), (150, 150)])
    plan = cluster.plan_geofences(hs, 20)
    assert len(plan.superfences) == 1
    assert len(plan.active_set(0)) == 6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60), st.integers(2, 12))
def test_geofence_cap_and_partition(seed, n, cap):
    rng = np.random.default_rng(seed)
    hs = _hotspots_at(rng.uniform(-8000, 8000, (n, 2)))
    plan = cluster.plan_geofences(hs, cap)
    children = sorted(c for s in plan.superfences for c in s.children)
    assert children == list(range(n))
    for s in plan.superfences:
        assert len(plan.active_set(s.id)) <= cap
    for lat, lon in zip(rng.uniform(39.9, 40.1, 20), rng.uniform(-83.1, -82.9, 20)):
        assert len(plan.active_set(None, lat, lon)) <= cap


def test_superfence_contains_child_fences():
    rng = np.random.default_rng(7)
    hs = _hotspots_at(rng.uniform(-3000, 3000, (30, 2)))
    plan = cluster.plan_geofences(hs, 8)
    for s in plan.superfences:
        for c in s.children:
            f = plan.fences[c]
            d = core.haversine_m(s.circle.lat, s.circle.lon, f.lat, f.lon)
            assert d + f.radius_m <= s.circle.radius_m + 1e-6


def test_replay_arms_every_visited_fence():
    rng = np.random.default_rng(8)
    pts = rng.uniform(-5000, 5000, (40, 2))
    hs = _hotspots_at(pts)
    plan = cluster.plan_geofences(hs, 10)
    # walk in straight lines between random hotspots, one fix every 20 m
    path_n, path_e = [], []
    order = rng.permutation(40)
    for a, b in zip(order, order[1:]):
        k = int(np.hypot(*(pts[b] - pts[a])) // 20) + 1
        s = np.linspace(0, 1, k)
        path_n.append(pts[a, 0] + s * (pts[b, 0] - pts[a, 0]))
        path_e.append(pts[a, 1] + s * (pts[b, 1] - pts[a, 1]))
    dlat, dlon = core.meters_to_degrees(np.concatenate(path_n), np.concatenate(path_e), 40.0)
    fx = core.Fixes(np.arange(dlat.size), 40.0 + dlat, -83.0 + dlon, np.zeros(dlat.size))
    res = cluster.replay(plan, fx)
    assert res.max_active_size <= 10
    assert len(res.entries) >= 39
    assert res.missed == []


def test_geojson_shapes():
    hs = _hotspots_at([(0, 0)])
    hs.append(cluster.Hotspot(1, np.arange(2), np.array([40.0, 40.0]), np.array([-83.0, -83.0]),
                              cluster.convex_hull([-83.0, -83.0], [40.0, 40.0])))
    gj = cluster.hotspots_geojson(hs, {0: 3})
    f0, f1 = gj["features"]
    assert f0["geometry"]["type"] == "Polygon"
    ring = f0["geometry"]["coordinates"][0]
    assert ring[0] == ring[-1]
    assert f0["properties"] == {"id": 0, "tag": "untagged", "n_members": 3, "n_visits": 3}
    assert f1["geometry"]["type"] == "Point"


def test_tags():
    hs = _hotspots_at([(0, 0), (1000, 0)])
    cluster.apply_tags(hs, {0: "food"})
    assert [h.tag for h in hs] == ["food", "untagged"]
    with pytest.raises(ValueError):
        cluster.apply_tags(hs, {0: "snack"})
    truth = [{"id": 5, "lat": hs[1].centroid[0], "lon": hs[1].centroid[1], "food": False}]
    assert cluster.tags_from_truth(hs, truth) == {1: "other"}
