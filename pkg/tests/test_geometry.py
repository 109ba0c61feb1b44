import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyxport import (ConvexGrain, PeriodicBox, SceneError, gap,
                       inside_indicator, itinerary, make_scene,
                       ray_grain_intersect)
from polyxport.lattice import PoissonMedium
from polyxport import presets

E1 = np.array([1.0, 0.0])


@pytest.fixture(scope="module")
def unit_square():
    return ConvexGrain.box(1, (0, 0), (1, 1))


@pytest.fixture(scope="module")
def two_unit_squares():
    g1 = ConvexGrain.box(1, (0, 0), (1, 1))
    g2 = ConvexGrain.box(2, (1, 0), (2, 1))
    return make_scene(2, (g1, g2), (PoissonMedium(), PoissonMedium()))


def test_intersect_through(unit_square):
    assert ray_grain_intersect(unit_square, [-1, 0.5], E1) == (1.0, 2.0)


def test_intersect_interior_start(unit_square):
    assert ray_grain_intersect(unit_square, [0.5, 0.5], E1) == (0.0, 0.5)


def test_intersect_miss(unit_square):
    assert ray_grain_intersect(unit_square, [-1, 2.0], E1) is None


def test_intersect_tangent_is_miss(unit_square):
    assert ray_grain_intersect(unit_square, [-1.0, 1.0], E1) is None
    assert ray_grain_intersect(unit_square, [-1.0, 0.0], E1) is None


def test_itinerary_two_squares(two_unit_squares):
    segs = itinerary(two_unit_squares, [-0.5, 0.5], E1, 3.0)
    assert [(s.grain_id, s.entry, s.exit) for s in segs] \
        == [(1, 0.5, 1.5), (2, 1.5, 2.5)]
    segs = itinerary(two_unit_squares, [0.2, 0.5], E1, 3.0)
    assert [(s.grain_id, s.entry, s.exit) for s in segs] \
        == [(1, 0.0, 0.8), (2, 0.8, 1.8)]


def test_itinerary_horizon_filters(two_unit_squares):
    segs = itinerary(two_unit_squares, [-0.5, 0.5], E1, 1.0)
    assert [s.grain_id for s in segs] == [1]


def test_itinerary_chains_without_gaps(two_unit_squares):
    rng = np.random.default_rng(5)
    for _ in range(50):
        th = rng.uniform(-0.6, 0.6)
        v = np.array([np.cos(th), np.sin(th)])
        segs = itinerary(two_unit_squares, [-0.3, rng.uniform(0.1, 0.9)], v, 4.0)
        for a, b in zip(segs, segs[1:]):
            assert b.entry >= a.exit


def test_itinerary_shift_covariance(two_unit_squares):
    x = np.array([0.2, 0.5])
    segs = itinerary(two_unit_squares, x, E1, 3.0)
    s = 0.3
    shifted = itinerary(two_unit_squares, x + s * E1, E1, 3.0)
    assert shifted[0].entry == 0.0
    assert shifted[0].exit == pytest.approx(segs[0].exit - s, abs=1e-12)
    assert shifted[1].entry == pytest.approx(segs[1].entry - s, abs=1e-12)
    assert shifted[1].exit == pytest.approx(segs[1].exit - s, abs=1e-12)


def test_periodic_itinerary_matches_unrolled():
    side = 0.35
    g = ConvexGrain.box(1, (0, 0), (side, side))
    scene = make_scene(2, (g,), (PoissonMedium(),),
                       periodic_box=PeriodicBox((0, 0), (side, side)))
    # unrolled copies of the same grain
    copies = [ConvexGrain.box(10 * i + j + 1,
                              (i * side, j * side),
                              ((i + 1) * side, (j + 1) * side))
              for i in range(-8, 9) for j in range(-8, 9)]
    unrolled = make_scene(2, tuple(copies),
                          tuple(PoissonMedium() for _ in copies),
                          validate=False)
    rng = np.random.default_rng(0)
    for _ in range(25):
        x = rng.uniform(0.05, 0.3, 2)
        th = rng.uniform(0, 2 * np.pi)
        v = np.array([np.cos(th), np.sin(th)])
        a = itinerary(scene, x, v, 2.0)
        b = itinerary(unrolled, x, v, 2.0)
        assert len(a) == len(b)
        for sa, sb in zip(a, b):
            assert sa.entry == pytest.approx(sb.entry, abs=1e-9)
            assert sa.exit == pytest.approx(sb.exit, abs=1e-9)


def test_gap_values(two_unit_squares):
    # fully covered stretch
    assert gap(two_unit_squares, [0.2, 0.5], E1, 1.5) == pytest.approx(0.0)
    g1 = ConvexGrain.box(1, (0, 0), (1, 1))
    g2 = ConvexGrain.box(2, (1.3, 0), (2.3, 1))
    scene = make_scene(2, (g1, g2), (PoissonMedium(), PoissonMedium()))
    assert gap(scene, [0.5, 0.5], E1, 1.5) == pytest.approx(0.3)


@given(st.floats(0.0, 1.5), st.floats(0.0, 1.5))
@settings(max_examples=60, deadline=None)
def test_gap_cocycle(s, xi):
    scene = presets.poisson_gap_squares_2d()
    x = np.array([0.11, 0.17])
    v = np.array([np.cos(0.3), np.sin(0.3)])
    lhs = gap(scene, x + s * v, v, xi)
    rhs = gap(scene, x, v, xi + s) - gap(scene, x, v, s)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_gap_monotone_lipschitz():
    scene = presets.poisson_gap_squares_2d()
    x = np.array([-0.2, 0.21])
    v = np.array([np.cos(0.15), np.sin(0.15)])
    grid = np.linspace(0, 2.5, 400)
    vals = [gap(scene, x, v, t) for t in grid]
    d = np.diff(vals)
    assert np.all(d >= -1e-12)
    assert np.all(d <= np.diff(grid) + 1e-12)


def test_inside_indicator_cases(unit_square, two_unit_squares):
    scene = make_scene(2, (unit_square,), (PoissonMedium(),))
    assert inside_indicator(scene, [0.5, 0.5], E1)
    assert not inside_indicator(scene, [0.0, 0.5], -E1)      # outwards
    assert not inside_indicator(scene, [0.0, 0.5], [0, 1.0])  # tangent
    assert inside_indicator(scene, [0.0, 0.5], E1)            # inwards
    # shared face of adjacent grains, tangent: outside both
    assert not inside_indicator(two_unit_squares, [1.0, 0.5], [0, 1.0])


def test_inside_indicator_probe_oracle():
    scene = presets.poisson_gap_squares_2d()
    rng = np.random.default_rng(2)
    eps = 1e-9
    for _ in range(300):
        x = rng.uniform([-0.1, -0.1], [1.6, 0.5])
        th = rng.uniform(0, 2 * np.pi)
        v = np.array([np.cos(th), np.sin(th)])
        probe = any(g.contains(x + eps * v) for g in scene.grains)
        assert inside_indicator(scene, x, v) == probe


def test_itinerary_union_plus_gap_decomposes(two_unit_squares):
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform([-0.5, 0.0], [2.5, 1.0])
        th = rng.uniform(0, 2 * np.pi)
        v = np.array([np.cos(th), np.sin(th)])
        xi = rng.uniform(0.1, 3.0)
        segs = itinerary(two_unit_squares, x, v, xi)
        covered = sum(min(s.exit, xi) - s.entry for s in segs)
        assert covered + gap(two_unit_squares, x, v, xi) == pytest.approx(xi)


def test_overlapping_grains_rejected():
    g1 = ConvexGrain.box(1, (0, 0), (1, 1))
    g2 = ConvexGrain.box(2, (0.5, 0), (1.5, 1))
    with pytest.raises(SceneError):
        make_scene(2, (g1, g2), (PoissonMedium(), PoissonMedium()))


def test_crystal_diameter_validation():
    from polyxport.lattice import CrystalMedium
    from polyxport.presets import identity_lattice
    g = ConvexGrain.box(1, (0, 0), (1, 1))
    with pytest.raises(SceneError):
        make_scene(2, (g,), (CrystalMedium(identity_lattice(2)),))


def test_vertices_roundtrip():
    pts = np.array([[0.0, 0.0], [0.3, 0.0], [0.3, 0.2], [0.0, 0.2]])
    g = ConvexGrain.from_vertices(7, pts)
    assert g.diameter_bound == pytest.approx(np.hypot(0.3, 0.2))
    assert g.contains([0.15, 0.1])
    assert not g.contains([0.31, 0.1])
    assert g.volume() == pytest.approx(0.06)
