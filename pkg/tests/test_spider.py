import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import arc
from cstrd.edges import EdgeChain
from cstrd.errors import BadRayCount
from cstrd.spider import (
    INWARD,
    OUTWARD,
    Node,
    RayIndex,
    SpiderWeb,
    build_spider_web,
    chains_intersect,
    interpolate_gap,
    polygon_radii,
    sample_chain,
    visible_neighbors,
)


def test_web_angles():
    assert np.allclose(build_spider_web((0, 0), 4).ray_angles, [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    a = build_spider_web((5, 5), 360).ray_angles
    assert len(a) == 360 and np.allclose(np.diff(a), np.radians(1))
    with pytest.raises(BadRayCount):
        build_spider_web((0, 0), 2)


def _circle_edge(c, r, n=500, closed=True):
    t = np.linspace(0, 2 * np.pi, n, endpoint=not closed)
    xy = np.column_stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)])
    return EdgeChain(xy, np.column_stack([np.cos(t), np.sin(t)]), closed)


def test_sample_circle_is_one_closed_chain():
    web = SpiderWeb((100.0, 100.0), 360)
    chains = sample_chain(_circle_edge(web.center, 40.0, 3600), web)
    assert len(chains) == 1
    ch = chains[0]
    assert ch.is_closed
    # chords of a 3600-gon sag by r(1-cos(pi/3600)) ~ 1.5e-5
    assert np.abs(ch.radii - 40.0).max() <= 1e-3


def test_segment_across_ray_zero():
    web = SpiderWeb((0.0, 0.0), 360)
    r, eps = 25.0, 0.05
    ec = EdgeChain(np.array([[r, eps], [r, -eps]]), np.array([[1.0, 0], [1.0, 0]]))
    chains = sample_chain(ec, web)
    assert len(chains) == 1 and len(chains[0]) == 1
    assert chains[0].start == 0
    assert chains[0].radii[0] == pytest.approx(r, abs=1e-12)


def test_short_polyline_between_rays():
    web = SpiderWeb((0.0, 0.0), 360)
    a0, a1 = np.radians(10.2), np.radians(10.8)
    xy = 30 * np.array([[np.cos(a0), np.sin(a0)], [np.cos(a1), np.sin(a1)]])
    assert sample_chain(EdgeChain(xy, np.ones((2, 2))), web) == []


def test_folded_edge_is_split():
    web = SpiderWeb((0.0, 0.0), 360)
    t = np.radians(np.r_[np.linspace(0.5, 20.5, 50), np.linspace(20.5, 5.5, 40)])
    r = np.r_[np.full(50, 30.0), np.full(40, 34.0)]
    xy = np.column_stack([r * np.cos(t), r * np.sin(t)])
    chains = sample_chain(EdgeChain(xy, np.ones_like(xy)), web)
    assert len(chains) == 2
    for ch in chains:
        assert len(set(ch.rays.tolist())) == len(ch)


def test_chains_intersect():
    web = SpiderWeb((0.0, 0.0), 360)
    assert chains_intersect(arc(web, 0, 11, 10), arc(web, 5, 11, 20))
    assert not chains_intersect(arc(web, 0, 11, 10), arc(web, 11, 10, 20))
    assert chains_intersect(arc(web, 0, 360, 10), arc(web, 200, 3, 20))
    # wraparound
    assert chains_intersect(arc(web, 350, 20, 10), arc(web, 5, 3, 20))


def test_visible_neighbors_concentric():
    web = SpiderWeb((0.0, 0.0), 360)
    a10, a20, a30 = arc(web, 0, 30, 10), arc(web, 0, 30, 20), arc(web, 0, 30, 30)
    allc = [a10, a20, a30]
    assert visible_neighbors(a20, "A", INWARD, allc) is a10
    assert visible_neighbors(a20, "A", OUTWARD, allc) is a30
    assert visible_neighbors(a10, "B", INWARD, allc) is None


def test_visible_neighbors_only_on_the_endpoint_ray():
    # a chain closer in radius elsewhere is invisible if it misses the endpoint ray
    web = SpiderWeb((0.0, 0.0), 360)
    black = arc(web, 100, 40, 50)
    orange = arc(web, 120, 60, 70)    # covers black's A ray (139)
    yellow = arc(web, 130, 40, 30)
    near_but_off = arc(web, 100, 30, 52)   # rays 100..129, misses 139
    allc = [black, orange, yellow, near_but_off]
    assert visible_neighbors(black, "A", OUTWARD, allc) is orange
    assert visible_neighbors(black, "A", INWARD, allc) is yellow


def test_interpolate_gap():
    web = SpiderWeb((0.0, 0.0), 360)
    out = interpolate_gap(Node(0, 10.0, 10, 0), Node(4, 10.0, 0, 0), web)
    assert [n.ray_index for n in out] == [1, 2, 3]
    assert all(n.radius == pytest.approx(10) for n in out)
    out = interpolate_gap(Node(0, 10.0, 0, 0), Node(2, 14.0, 0, 0), web)
    assert [(n.ray_index, n.radius) for n in out] == [(1, 12.0)]
    out = interpolate_gap(Node(358, 10.0, 0, 0), Node(2, 10.0, 0, 0), web)
    assert [n.ray_index for n in out] == [359, 0, 1]
    # node positions agree with their ray and radius
    n = out[1]
    assert (n.x, n.y) == pytest.approx((10.0, 0.0))


@settings(max_examples=80, deadline=None)
@given(st.integers(3, 400), st.integers(0, 10_000), st.integers(1, 10_000),
       st.floats(1, 100), st.floats(1, 100))
def test_interpolate_gap_length(nr, a, d, r0, r1):
    web = SpiderWeb((0.0, 0.0), nr)
    a %= nr
    b = (a + d) % nr
    if a == b:
        return
    fwd = (b - a) % nr
    gap = min(fwd, nr - fwd)
    out = interpolate_gap(Node(a, r0, 0, 0), Node(b, r1, 0, 0), web)
    assert len(out) == gap - 1
    assert a not in [n.ray_index for n in out] and b not in [n.ray_index for n in out]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([36, 90, 360]))
def test_sampled_chains_one_node_per_ray(seed, nr):
    rng = np.random.default_rng(seed)
    web = SpiderWeb((0.0, 0.0), nr)
    n = int(rng.integers(2, 200))
    # random walk, sometimes spiralling past a full turn
    t = np.cumsum(rng.normal(0.03, 0.08, n))
    r = 50 + np.cumsum(rng.normal(0, 0.5, n))
    r = np.clip(r, 1, None)
    xy = np.column_stack([r * np.cos(t), r * np.sin(t)])
    chains = sample_chain(EdgeChain(xy, rng.normal(size=(n, 2)), bool(rng.integers(0, 2))), web)
    for ch in chains:
        assert len(ch) <= nr
        assert len(set(ch.rays.tolist())) == len(ch)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(5, 100), min_size=2, max_size=6, unique=True), st.integers(0, 359))
def test_visibility_antisymmetric(radii, ray):
    web = SpiderWeb((0.0, 0.0), 360)
    chains = [arc(web, 0, 360, r) for r in radii]
    idx = RayIndex(chains)
    for ch in chains:
        out_id = idx.neighbor(ray, ch.radius_at(ray), ch.id, OUTWARD)
        if out_id is not None:
            other = idx.chains[out_id]
            assert idx.neighbor(ray, other.radius_at(ray), other.id, INWARD) == ch.id


def test_polygon_radii_square_and_circle():
    web = SpiderWeb((0.0, 0.0), 8)
    a = 3.0
    sq = np.array([[a, a], [-a, a], [-a, -a], [a, -a]])
    got = polygon_radii(sq, web)
    want = np.where(np.arange(8) % 2 == 0, a, a * np.sqrt(2))
    assert np.allclose(got, want)
    web = SpiderWeb((5.0, 7.0), 360)
    t = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    circ = np.column_stack([5 + 12 * np.cos(t), 7 + 12 * np.sin(t)])
    assert np.abs(polygon_radii(circ, web) - 12).max() < 1e-3


def test_remove_from_index():
    web = SpiderWeb((0.0, 0.0), 36)
    a, b = arc(web, 0, 10, 5), arc(web, 0, 10, 9)
    idx = RayIndex([a, b])
    idx.remove(b)
    assert idx.on_ray(3) == [(5.0, a.id)]
