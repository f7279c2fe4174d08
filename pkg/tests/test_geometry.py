import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capillary_abp.geometry import (
    AmbiguityError,
    ConvexBody,
    SphericalCap,
    cap_band_measure,
    cap_surface_measure,
    cap_volume,
    kuratowski_distance,
    sphere_area,
    unit_ball_volume,
)
from capillary_abp._validation import DomainError

from conftest import bodies

lams = st.floats(-0.99, 0.99)


def test_unit_ball_volume_values():
    assert unit_ball_volume(1) == pytest.approx(2.0, abs=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi, abs=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3, abs=1e-14)
    assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2, abs=1e-14)


@pytest.mark.parametrize("N", range(3, 9))
def test_unit_ball_volume_recursion(N):
    assert unit_ball_volume(N) == pytest.approx(unit_ball_volume(N - 2) * 2 * math.pi / N, rel=1e-14)


def test_unit_ball_volume_monte_carlo():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (400_000, 4))
    p = np.mean(np.sum(X * X, axis=1) < 1)
    hw = 2.576 * math.sqrt(p * (1 - p) / len(X)) * 16
    assert abs(16 * p - unit_ball_volume(4)) < hw


def test_cap_volume_examples():
    assert cap_volume(0.0) == pytest.approx(math.pi / 2, abs=1e-12)
    assert cap_volume(0.5) == pytest.approx(math.acos(0.5) - 0.5 * math.sqrt(0.75), abs=1e-12)
    assert cap_volume(0.5) == pytest.approx(0.61418, abs=1e-5)
    assert cap_volume(0.0, N=3) == pytest.approx(2 * math.pi / 3, abs=1e-12)


@given(lams)
def test_cap_volume_closed_forms(lam):
    # segment area in 2D and the spherical cap formula in 3D
    assert cap_volume(lam) == pytest.approx(math.acos(lam) - lam * math.sqrt(1 - lam * lam), abs=1e-11)
    assert cap_volume(lam, N=3) == pytest.approx(math.pi * (1 - lam) ** 2 * (2 + lam) / 3, abs=1e-11)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_cap_volume_monotone_and_limit(N):
    grid = np.linspace(-0.99, 0.99, 100)
    v = np.array([cap_volume(x, N=N) for x in grid])
    assert np.all(np.diff(v) < -1e-12)
    assert cap_volume(-1 + 1e-9, N=N) == pytest.approx(unit_ball_volume(N), abs=1e-8)


@given(lams, st.floats(0.1, 5.0), st.integers(2, 4))
def test_cap_volume_scaling(lam, r, N):
    assert cap_volume(lam, r, N) == pytest.approx(r**N * cap_volume(lam, 1.0, N), rel=1e-10)
    assert SphericalCap(lam, r, N).volume == pytest.approx(cap_volume(lam, r, N), rel=1e-14)


def test_cap_surface_examples():
    assert cap_surface_measure(0.0, 2, "below") == pytest.approx(math.pi, abs=1e-12)
    assert cap_surface_measure(-1.0, 3, "below") == pytest.approx(0.0, abs=1e-15)
    assert cap_surface_measure(0.3, 3, "below") == pytest.approx(2 * math.pi * 1.3, abs=1e-10)
    assert cap_surface_measure(0.3, 3, "below") == pytest.approx(8.168, abs=1e-3)


@given(st.floats(-1, 1), st.integers(2, 5))
def test_cap_surface_complement(lam, N):
    total = cap_surface_measure(lam, N, "below") + cap_surface_measure(lam, N, "above")
    assert total == pytest.approx(N * unit_ball_volume(N), abs=1e-9)
    assert sphere_area(N) == pytest.approx(N * unit_ball_volume(N), rel=1e-14)


@given(lams, lams, st.integers(2, 4))
def test_band_is_difference_of_caps(a, b, N):
    lo, hi = min(a, b), max(a, b)
    diff = cap_surface_measure(hi, N) - cap_surface_measure(lo, N)
    assert cap_band_measure(lo, hi, N) == pytest.approx(diff, abs=1e-10)


def test_outward_normal_examples():
    ball = ConvexBody.ball([0, 0, 0], 1.0)
    np.testing.assert_allclose(ball.outward_normal([1, 0, 0]), [1, 0, 0])
    hs = ConvexBody.halfspace([0, 0, 1], 0.0)
    np.testing.assert_allclose(hs.outward_normal([3.0, -2.0, 0.0]), [0, 0, 1])
    a = math.radians(80)
    w = ConvexBody.wedge(math.radians(160), 2)
    n1 = np.array([math.cos(a), math.sin(a)])
    x = 2.0 * np.array([n1[1], -n1[0]])  # on face 1, away from the ridge
    np.testing.assert_allclose(w.outward_normal(x), n1, atol=1e-15)


def test_outward_normal_errors():
    w = ConvexBody.wedge(math.pi / 2, 2)
    with pytest.raises(AmbiguityError):
        w.outward_normal([0.0, 0.0])
    with pytest.raises(DomainError):
        w.outward_normal([0.0, -1.0])
    with pytest.raises(DomainError):
        ConvexBody.wedge(math.pi, 2)


@pytest.mark.parametrize("N", [2, 3])
def test_support_inequality(N, rng):
    for body in bodies(N, rng):
        Y = body.sample_interior(1000, rng)
        for _ in range(5):
            x = body.project(rng.normal(size=N) * 4)[0]
            if not body.on_boundary(x):
                continue
            faces = body.active_faces(x) or [None]
            nu = body.outward_normal(x, face=faces[0])
            assert body.support_margin(x, nu, Y) <= 1e-12


def test_kuratowski_examples():
    b1 = ConvexBody.ball([0, 0], 1.0)
    b2 = ConvexBody.ball([0, 0], 1.1)
    window = ([-2, -2], [2, 2])
    assert kuratowski_distance(b1, b1, window) == 0.0
    assert kuratowski_distance(b1, b2, window) == pytest.approx(0.1, abs=1e-12)
    h0 = ConvexBody.halfspace([0, 1], 0.0)
    h1 = ConvexBody.halfspace([0, 1], 0.05)
    assert kuratowski_distance(h0, h1, ([-1, -1], [1, 1])) == pytest.approx(0.05, abs=1e-12)


@given(st.integers(0, 10_000))
def test_kuratowski_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    B = [ConvexBody.ball(rng.normal(size=2) * 0.3, rng.uniform(0.3, 1.2)) for _ in range(2)]
    B.append(ConvexBody.halfspace(rng.normal(size=2), rng.normal()))
    w = ([-2, -2], [2, 2])
    d = lambda p, q: kuratowski_distance(p, q, w, 24)
    assert d(B[0], B[2]) <= d(B[0], B[1]) + d(B[1], B[2]) + 1e-12


def test_polytope_roundtrip(rng):
    from capillary_abp.scenarios import random_polytope

    P = random_polytope(3, rng)
    Q = ConvexBody.from_dict(P.to_dict())
    X = rng.normal(size=(200, 3))
    np.testing.assert_allclose(P.signed_distance(X), Q.signed_distance(X), atol=1e-12)


def test_projection_matches_distance(rng):
    from capillary_abp.scenarios import random_polytope

    P = random_polytope(2, rng)
    X = rng.normal(size=(50, 2)) * 3
    Y = P.project(X)
    assert np.all(P.contains(Y, tol=1e-9))
    # an oracle for the distance to a polygon
    import shapely

    poly = shapely.Polygon(P.vertices[np.argsort(np.arctan2(*(P.vertices - P.vertices.mean(0)).T[::-1]))])
    ref = shapely.distance(poly, shapely.points(X))
    np.testing.assert_allclose(P.distance(X), ref, atol=1e-8)
