"""Convex bodies, spherical caps and the distance utilities built on them.

Everything here is dimension generic (N >= 2) unless stated otherwise.  Convex
bodies come in four kinds: ``halfspace``, ``wedge`` (two halfspaces), general
``polytope`` (an H-representation, optionally with facet triangulation when
built from vertices) and ``ball``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from ._validation import (
    DomainError,
    check_dimension,
    check_lambda,
    check_points,
    check_vector,
)

KINDS = ("polytope", "ball", "halfspace", "wedge")

QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-12
BOUNDARY_TOL = 1e-9


class AmbiguityError(ValueError):
    """A boundary point sits on several faces and no face was selected."""


# -- reference measures -------------------------------------------------------


def unit_ball_volume(N):
    """Lebesgue volume of the N-dimensional unit ball."""
    N = check_dimension(N, minimum=1)
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def sphere_area(N, radius=1.0):
    """(N-1)-dimensional measure of the sphere of given radius in R^N."""
    return N * unit_ball_volume(N) * radius ** (N - 1)


def cap_waist_radius(lam):
    """Radius sqrt(1 - lam^2) of the circle where the cap meets its base."""
    lam = check_lambda(lam, closed=True)
    return math.sqrt(max(0.0, 1.0 - lam * lam))


def _sin_power_integral(a, b, p):
    if b <= a:
        return 0.0
    val, _ = integrate.quad(
        lambda t: math.sin(t) ** p, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200
    )
    return val


@dataclass(frozen=True)
class SphericalCap:
    """Solid cap {x in B_radius : x . e_N > lam * radius}."""

    lam: float
    radius: float = 1.0
    dim: int = 2

    def __post_init__(self):
        check_lambda(self.lam)
        check_dimension(self.dim)
        if not self.radius > 0:
            raise DomainError("cap radius must be positive")

    @property
    def volume(self):
        return cap_volume(self.lam, self.radius, self.dim)

    @property
    def waist_radius(self):
        return self.radius * cap_waist_radius(self.lam)


def cap_volume(lam, radius=1.0, N=2):
    """Volume of the solid spherical cap at height ``lam * radius``.

    Accepts a :class:`SphericalCap` as first argument as well.  The integral
    over heights is evaluated in the polar angle, where the integrand
    ``omega_{N-1} sin^N`` is smooth.
    """
    if isinstance(lam, SphericalCap):
        lam, radius, N = lam.lam, lam.radius, lam.dim
    lam = check_lambda(lam)
    N = check_dimension(N)
    base = unit_ball_volume(N - 1) * _sin_power_integral(0.0, math.acos(lam), N)
    return base * radius**N


def cap_surface_measure(lam, N=2, side="below", radius=1.0):
    """Measure of {xi on the sphere : xi_N < lam} (or > lam for ``side='above'``).

    ``lam`` is the height on the unit sphere; the result is scaled to the sphere
    of the given radius.
    """
    lam = check_lambda(lam, closed=True)
    N = check_dimension(N)
    if side not in ("below", "above"):
        raise ValueError("side must be 'below' or 'above'")
    theta = math.acos(lam)
    ring = (N - 1) * unit_ball_volume(N - 1)
    if side == "below":
        val = ring * _sin_power_integral(theta, math.pi, N - 2)
    else:
        val = ring * _sin_power_integral(0.0, theta, N - 2)
    return val * radius ** (N - 1)


def cap_band_measure(lo, hi, N=2):
    """Measure of the zone {lo <= xi_N < hi} on the unit sphere.

    Computed directly as one integral, which avoids cancellation when the two
    heights nearly agree.
    """
    lo = check_lambda(lo, closed=True)
    hi = check_lambda(hi, closed=True)
    if hi <= lo:
        return 0.0
    ring = (N - 1) * unit_ball_volume(N - 1)
    return ring * _sin_power_integral(math.acos(hi), math.acos(lo), N - 2)


# -- convex bodies ------------------------------------------------------------


@dataclass
class ConvexBody:
    """Closed convex set with nonempty interior.

    For the polyhedral kinds the set is ``{x : normals @ x <= offsets}``.
    """

    kind: str
    normals: np.ndarray = None
    offsets: np.ndarray = None
    center: np.ndarray = None
    radius: float = None
    interior_point: np.ndarray = None
    vertices: np.ndarray = field(default=None, repr=False)
    facet_simplices: np.ndarray = field(default=None, repr=False)
    facet_ids: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown body kind {self.kind!r}")
        if self.kind == "ball":
            self.center = check_vector(self.center, name="center")
            self.radius = float(self.radius)
            if not self.radius > 0:
                raise DomainError("ball radius must be positive")
            self.interior_point = self.center.copy()
            return
        A = check_points(self.normals, name="normals")
        b = np.asarray(self.offsets, dtype=float).reshape(-1)
        if len(b) != len(A):
            raise DomainError("normals and offsets differ in length")
        norms = np.linalg.norm(A, axis=1)
        self.normals = A / norms[:, None]
        self.offsets = b / norms
        if self.kind == "halfspace" and len(b) != 1:
            raise DomainError("a halfspace has exactly one constraint")
        if self.kind == "wedge" and len(b) != 2:
            raise DomainError("a wedge has exactly two constraints")
        if self.interior_point is None:
            self.interior_point = self._chebyshev_center()
        else:
            self.interior_point = check_vector(self.interior_point)
        if not np.all(self.normals @ self.interior_point < self.offsets):
            raise DomainError("body has empty interior")

    # constructors

    @classmethod
    def halfspace(cls, normal, offset=0.0):
        """The set {x : normal . x <= offset}."""
        return cls("halfspace", normals=[normal], offsets=[offset])

    @classmethod
    def ball(cls, center, radius=1.0):
        return cls("ball", center=center, radius=radius)

    @classmethod
    def wedge(cls, opening_angle, dim=2, apex=None):
        """Solid wedge with ridge through ``apex`` and interior angle ``opening_angle``.

        The wedge is symmetric about the -e_N axis, so its ridge points up and
        its two faces have outward normals (+-cos(a/2), ..., sin(a/2)).
        """
        if not 0.0 < opening_angle < math.pi:
            raise DomainError("wedge opening angle must lie in (0, pi)")
        dim = check_dimension(dim)
        half = opening_angle / 2
        n1 = np.zeros(dim)
        n2 = np.zeros(dim)
        n1[0], n1[-1] = math.cos(half), math.sin(half)
        n2[0], n2[-1] = -math.cos(half), math.sin(half)
        apex = np.zeros(dim) if apex is None else check_vector(apex, dim)
        return cls("wedge", normals=[n1, n2], offsets=[n1 @ apex, n2 @ apex])

    @classmethod
    def polytope(cls, normals, offsets):
        return cls("polytope", normals=normals, offsets=offsets)

    @classmethod
    def from_vertices(cls, points):
        """Convex hull of a point cloud, keeping the facet triangulation."""
        points = check_points(points, name="points")
        hull = ConvexHull(points)
        eq = hull.equations
        # merge coplanar simplices into one face id per distinct hyperplane
        keys = np.round(eq, 9)
        _, face_of_simplex = np.unique(keys, axis=0, return_inverse=True)
        face_of_simplex = face_of_simplex.reshape(-1)
        n_faces = face_of_simplex.max() + 1
        normals = np.zeros((n_faces, points.shape[1]))
        offsets = np.zeros(n_faces)
        for k in range(n_faces):
            row = eq[np.flatnonzero(face_of_simplex == k)[0]]
            normals[k], offsets[k] = row[:-1], -row[-1]
        body = cls("polytope", normals=normals, offsets=offsets)
        body.vertices = points[hull.vertices]
        body.facet_simplices = points[hull.simplices]
        body.facet_ids = face_of_simplex
        return body

    # basic queries

    @property
    def dim(self):
        return len(self.interior_point)

    @property
    def n_faces(self):
        return 0 if self.kind == "ball" else len(self.offsets)

    def _chebyshev_center(self, box=1e3):
        A, b = self.normals, self.offsets
        N = A.shape[1]
        c = np.zeros(N + 1)
        c[-1] = -1.0
        A_ub = np.hstack([A, np.ones((len(b), 1))])
        bounds = [(-box, box)] * N + [(0, 1.0)]
        res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
        if res.status != 0 or res.x[-1] <= 1e-12:
            raise DomainError("body has empty interior")
        # among points with half that inscribed radius, take the one closest
        # to the origin in l1, so unbounded bodies get a well-placed point
        rho = 0.5 * res.x[-1]
        c2 = np.concatenate([np.zeros(N), np.ones(N)])
        I = np.eye(N)
        A2 = np.vstack([np.hstack([A, np.zeros_like(A)]), np.hstack([I, -I]), np.hstack([-I, -I])])
        b2 = np.concatenate([b - rho, np.zeros(2 * N)])
        res2 = linprog(c2, A_ub=A2, b_ub=b2, bounds=[(-box, box)] * N + [(0, None)] * N, method="highs")
        return res2.x[:N] if res2.status == 0 else res.x[:N]

    def signed_distance(self, X):
        """Signed distance to the boundary, negative inside.

        Inside a polyhedral body the distance is min_k (b_k - n_k . x) exactly.
        Outside it is computed by projection (closed form for one constraint,
        Dykstra iterations otherwise).
        """
        X = check_points(X, dim=self.dim)
        if self.kind == "ball":
            return np.linalg.norm(X - self.center, axis=1) - self.radius
        viol = X @ self.normals.T - self.offsets
        inner = viol.max(axis=1)
        if self.kind == "halfspace":
            return inner
        out = inner > 0
        dist = inner.copy()
        if np.any(out):
            P = self.project(X[out])
            dist[out] = np.linalg.norm(X[out] - P, axis=1)
        return dist

    def distance(self, X):
        return np.maximum(self.signed_distance(X), 0.0)

    def contains(self, X, tol=1e-12):
        return self.signed_distance(X) <= tol

    def project(self, X, tol=1e-14, max_iter=20000):
        """Euclidean projection of points onto the body."""
        X = check_points(X, dim=self.dim)
        if self.kind == "ball":
            d = X - self.center
            r = np.linalg.norm(d, axis=1, keepdims=True)
            scale = np.where(r > self.radius, self.radius / np.maximum(r, 1e-300), 1.0)
            return self.center + d * scale
        A, b = self.normals, self.offsets
        if len(b) == 1:
            viol = np.maximum(X @ A[0] - b[0], 0.0)
            return X - viol[:, None] * A[0]
        # Dykstra's alternating projections onto the halfspaces
        Y = X.copy()
        incr = np.zeros((len(b),) + X.shape)
        for _ in range(max_iter):
            prev = Y.copy()
            for k in range(len(b)):
                Z = Y + incr[k]
                viol = np.maximum(Z @ A[k] - b[k], 0.0)
                Ynew = Z - viol[:, None] * A[k]
                incr[k] = Z - Ynew
                Y = Ynew
            if np.max(np.abs(Y - prev)) < tol:
                break
        return Y

    def active_faces(self, x, tol=BOUNDARY_TOL):
        x = check_vector(x, dim=self.dim)
        if self.kind == "ball":
            return []
        viol = self.normals @ x - self.offsets
        return [int(k) for k in np.flatnonzero(np.abs(viol) <= tol)]

    def on_boundary(self, x, tol=BOUNDARY_TOL):
        return abs(self.signed_distance(x)[0]) <= tol

    def outward_normal(self, x, face=None, tol=BOUNDARY_TOL):
        """Outer unit normal at boundary point ``x``.

        On a ridge of a polyhedral body the caller must select one of the
        active faces; any of them is a valid supporting normal.
        """
        x = check_vector(x, dim=self.dim)
        if not self.on_boundary(x, tol):
            raise DomainError("point is not on the boundary of the body")
        if self.kind == "ball":
            return (x - self.center) / np.linalg.norm(x - self.center)
        active = self.active_faces(x, tol)
        if face is None:
            if len(active) != 1:
                raise AmbiguityError(f"point lies on faces {active}; pass face=")
            face = active[0]
        elif face not in active:
            raise DomainError(f"face {face} is not active at the point")
        return self.normals[face].copy()

    def support_margin(self, x, normal, Y):
        """max over y in Y of normal . (y - x); convexity requires <= 0."""
        Y = check_points(Y, dim=self.dim)
        return float(np.max((Y - x) @ normal))

    def sample_interior(self, n, rng, window=3.0):
        """Points of the body inside a box of half-width ``window`` around its
        interior point (rejection sampling)."""
        N = self.dim
        if self.kind == "ball":
            d = rng.standard_normal((n, N))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            r = self.radius * rng.random(n) ** (1.0 / N)
            return self.center + d * r[:, None]
        out = []
        count = 0
        while count < n:
            Y = self.interior_point + rng.uniform(-window, window, size=(4 * n, N))
            Y = Y[np.all(Y @ self.normals.T <= self.offsets, axis=1)]
            out.append(Y)
            count += len(Y)
        return np.vstack(out)[:n]

    # facet geometry for polytopes

    def facets(self):
        """Triangulated facets as (simplices, face ids); bounded polytopes only."""
        if self.facet_simplices is not None:
            return self.facet_simplices, self.facet_ids
        if self.kind != "polytope":
            raise DomainError("facet triangulation exists only for bounded polytopes")
        hs = np.hstack([self.normals, -self.offsets[:, None]])
        verts = HalfspaceIntersection(hs, self.interior_point).intersections
        rebuilt = ConvexBody.from_vertices(verts)
        simplices = rebuilt.facet_simplices
        ids = np.array([self._face_of(s) for s in simplices])
        self.facet_simplices, self.facet_ids, self.vertices = simplices, ids, rebuilt.vertices
        return simplices, ids

    def _face_of(self, simplex):
        viol = np.abs(simplex @ self.normals.T - self.offsets).max(axis=0)
        return int(np.argmin(viol))

    # serialization

    def to_dict(self):
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        d = {
            "kind": self.kind,
            "halfspaces": [
                {"normal": n.tolist(), "offset": float(o)}
                for n, o in zip(self.normals, self.offsets)
            ],
        }
        if self.vertices is not None and self.kind == "polytope":
            d["vertices"] = self.vertices.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind not in KINDS:
            raise DomainError(f"unknown body kind {kind!r}")
        if kind == "ball":
            return cls.ball(d["center"], d.get("radius", 1.0))
        if kind == "polytope" and "vertices" in d:
            return cls.from_vertices(d["vertices"])
        hs = d["halfspaces"]
        return cls(
            kind,
            normals=[h["normal"] for h in hs],
            offsets=[h.get("offset", 0.0) for h in hs],
        )


def _grid(window, points_per_axis):
    lo, hi = (np.asarray(w, dtype=float) for w in window)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise DomainError("window must have positive volume")
    axes = [np.linspace(a, b, points_per_axis) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def kuratowski_distance(C1, C2, window, points_per_axis=64):
    """sup over a grid of ``window`` of |dist(x, C1) - dist(x, C2)|.

    ``window`` is a pair (lower corner, upper corner).
    """
    X = _grid(window, points_per_axis)
    return float(np.max(np.abs(C1.distance(X) - C2.distance(X))))
