import math

import numpy as np
import pytest
import shapely
from hypothesis import given
from hypothesis import strategies as st

from capillary_abp.geometry import cap_surface_measure, cap_volume, unit_ball_volume
from capillary_abp.maingeo import lipschitz_profile_check
from capillary_abp.measures import (
    Z99,
    Budget,
    MeasureEstimate,
    clip_polygon,
    clipped_region_area,
    per_cell_volumes,
    polygon_disk_area,
    pool,
    region_volume,
    restricted_profile,
    sample_ball,
    sphere_region_measure,
)
from capillary_abp.subdiff import SubdifferentialPartition

from test_subdiff import random_function


def disk_oracle(radius):
    return shapely.Point(0, 0).buffer(radius, quad_segs=4096)


def random_cell(rng, n=5):
    """Halfplanes of a random 2D subdifferential cell."""
    X = rng.normal(size=(n, 2))
    v = rng.normal(size=n) * 0.5
    part = SubdifferentialPartition().fit(X, v)
    # the cell of a random point of the unit disk is nonempty there
    i = int(part.predict(rng.uniform(-0.7, 0.7, (1, 2)))[0])
    D, b, _ = part.constraints(i)
    return D, b


def test_scalar_examples():
    e2 = np.array([0.0, 1.0])
    assert region_volume(None, 0.3, e2).value == pytest.approx(cap_volume(0.3), abs=1e-12)
    cell = (np.array([[1.0, 0.0]]), np.array([0.0]))
    assert region_volume(cell, 0.0, e2, dim=2).value == pytest.approx(math.pi / 4, abs=1e-12)
    X = sample_ball(3, 1000, np.random.default_rng(0), radius=2.0)
    assert np.all(np.linalg.norm(X, axis=1) <= 2.0)


@given(st.integers(0, 10_000), st.floats(0.2, 3.0))
def test_polygon_disk_area_against_shapely(seed, radius):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(7, 2)) * radius
    hull = shapely.convex_hull(shapely.MultiPoint(P))
    poly = np.asarray(hull.exterior.coords)[:-1]
    ref = hull.intersection(disk_oracle(radius)).area
    assert polygon_disk_area(poly, radius) == pytest.approx(ref, abs=1e-6 * radius**2)
    assert polygon_disk_area(poly[::-1], radius) == pytest.approx(ref, abs=1e-6 * radius**2)


@given(st.integers(0, 10_000))
def test_clipping_against_shapely(seed):
    rng = np.random.default_rng(seed)
    D, b = random_cell(rng)
    R = 2.0
    box = shapely.box(-R, -R, R, R)
    for d, o in zip(D, b):
        # halfplane d . x <= o as a large polygon
        u = d / np.linalg.norm(d)
        t = np.array([-u[1], u[0]])
        p0 = u * o / np.linalg.norm(d)
        big = 100.0 + abs(o) / np.linalg.norm(d)
        hp = shapely.Polygon([p0 + big * t, p0 - big * t, p0 - big * t - big * u, p0 + big * t - big * u])
        box = box.intersection(hp)
    ref = box.intersection(disk_oracle(1.0)).area
    assert clipped_region_area(list(zip(D, b)), 1.0) == pytest.approx(ref, abs=1e-6)


def test_clip_polygon_halves_square():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    half = clip_polygon(sq, np.array([1.0, 0.0]), 0.5)
    assert shapely.Polygon(half).area == pytest.approx(0.5)


def test_mc_within_ci_of_exact_100_trials():
    rng = np.random.default_rng(7)
    inside = 0
    for t in range(100):
        D, b = random_cell(rng)
        nu = rng.normal(size=2)
        nu /= np.linalg.norm(nu)
        lam = rng.uniform(-0.8, 0.8)
        ex = region_volume((D, b), lam, nu, method="exact2d").value
        mc = region_volume((D, b), lam, nu, budget=Budget(20_000, seed=t), method="montecarlo", dim=2)
        inside += abs(mc.value - ex) <= mc.half_width + 1e-12
    # 99% intervals: the count of misses is Binomial(100, 0.01)
    assert inside >= 95


def test_exact_vs_shared_high_resolution_mc_200_cells():
    rng = np.random.default_rng(3)
    n = 1_000_000
    X = sample_ball(2, n, np.random.default_rng(99))
    misses = 0
    for _ in range(200):
        D, b = random_cell(rng)
        ex = clipped_region_area(list(zip(D, b)), 1.0)
        p = np.mean(np.all(X @ D.T <= b, axis=1))
        hw = Z99 * math.sqrt(p * (1 - p) / n) * math.pi
        misses += abs(p * math.pi - ex) > hw + 1e-12
    assert misses <= 6


def test_mc_unbiased_over_seeds():
    D, b = np.array([[1.0, 0.3]]), np.array([0.2])
    nu = np.array([0.0, 1.0])
    ex = region_volume((D, b), -0.2, nu, method="exact2d").value
    ests = [region_volume((D, b), -0.2, nu, budget=Budget(20_000, seed=s), method="montecarlo", dim=2) for s in range(50)]
    mean = np.mean([e.value for e in ests])
    pooled = pool(ests)
    assert abs(mean - ex) <= pooled.half_width / 50


@pytest.mark.parametrize("N", [2, 3, 4])
def test_additivity_over_partition(N):
    f = random_function("polytope", N, 6, 20 + N)
    part = SubdifferentialPartition().fit(f)
    ref = unit_ball_volume(N) * 1.5**N
    if N == 2:
        vols = [region_volume(c, None, None, 1.5, method="exact2d", dim=2) for c in part.cells()]
        assert sum(v.value for v in vols) == pytest.approx(ref, abs=1e-12)
    vols = [
        region_volume(c, None, None, 1.5, budget=Budget(50_000, seed=i), method="montecarlo", dim=N)
        for i, c in enumerate(part.cells())
    ]
    tot = pool(vols)
    assert abs(tot.value - ref) <= tot.half_width
    # shared stream: every sample lands in exactly one cell
    whole = [w for w, _ in per_cell_volumes(part, 0.0, 1.5, Budget(20_000), "montecarlo")]
    assert sum(w.value for w in whole) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("N", [2, 3])
def test_sphere_complement(N):
    f = random_function("ball", N, 6, 30 + N)
    part = SubdifferentialPartition().fit(f)
    total = N * unit_ball_volume(N) * 0.7 ** (N - 1)
    method = "exact2d" if N == 2 else "montecarlo"
    lo = sphere_region_measure(part, 0.2, "<", 0.7, Budget(100_000), method)
    hi = sphere_region_measure(part, 0.2, ">", 0.7, Budget(100_000), method)
    if N == 2:
        assert lo.value + hi.value == pytest.approx(total, abs=1e-12)
    else:
        assert abs(lo.value + hi.value - total) <= lo.half_width + hi.half_width + 1e-12


@pytest.mark.parametrize("lam", [-0.5, 0.0, 0.4])
def test_single_site_and_flat_sphere_measures(lam):
    e2 = np.array([[0.0, 1.0]])
    one = SubdifferentialPartition().fit([[0.0, 0.0]], [0.0], normals=e2)
    two = SubdifferentialPartition().fit([[0.0, 0.0], [1.0, 0.0]], [0.0, 0.3], normals=np.vstack([e2, e2]))
    ref = cap_surface_measure(lam, 2, "below")
    for part in (one, two):
        assert sphere_region_measure(part, lam, "<", method="exact2d").value == pytest.approx(ref, abs=1e-12)
        mc = sphere_region_measure(part, lam, "<", budget=Budget(100_000), method="montecarlo")
        assert abs(mc.value - ref) <= mc.half_width


@given(st.integers(0, 10_000))
def test_half_sphere_bound_at_zero(seed):
    f = random_function("polytope", 2, 5, seed)
    part = SubdifferentialPartition().fit(f)
    below = sphere_region_measure(part, 0.0, "<", method="exact2d").value
    assert below <= math.pi + 1e-12


@pytest.mark.parametrize("method", ["exact2d", "montecarlo"])
def test_profile_single_site_and_monotone(method):
    e = np.array([[0.0, 1.0]])
    one = SubdifferentialPartition().fit([[0.0, 0.0]], [0.0], normals=e)
    lams = np.linspace(-0.9, 0.9, 13)
    prof = restricted_profile(one, lams, budget=Budget(100_000), method=method)
    for lam, est in zip(lams, prof):
        assert abs(est.value - cap_volume(lam)) <= est.half_width + 1e-12
    f = random_function("polytope", 2, 6, 4)
    part = SubdifferentialPartition().fit(f)
    vals = [e.value for e in restricted_profile(part, lams, budget=Budget(50_000), method=method)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("N,lam", [(2, -0.5), (2, 0.3), (3, 0.0), (4, -0.3)])
def test_lipschitz_profile(N, lam):
    f = random_function("polytope", N, 6, 40 + N)
    chk = lipschitz_profile_check(f, lam, budget=Budget(100_000))
    assert chk.monotone and chk.passed


def test_estimate_serialization_and_pool():
    e = MeasureEstimate(1.0, 0.1, "montecarlo", 10, 3)
    assert MeasureEstimate.from_dict(e.to_dict()) == e
    p = pool([e, MeasureEstimate(2.0, 0.2, "montecarlo", 10, 3)])
    assert p.value == 3.0 and p.half_width == pytest.approx(math.sqrt(0.05))
    with pytest.raises(ValueError):
        MeasureEstimate(1.0, method="bogus")


def test_mc_is_deterministic_in_seed():
    f = random_function("ball", 3, 5, 1)
    part = SubdifferentialPartition().fit(f)
    a = restricted_profile(part, [0.1], budget=Budget(30_000, seed=5))[0]
    b = restricted_profile(part, [0.1], budget=Budget(30_000, seed=5))[0]
    c = restricted_profile(part, [0.1], budget=Budget(30_000, seed=6))[0]
    assert a == b and a.value != c.value
