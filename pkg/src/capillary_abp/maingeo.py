"""Restricted subdifferential measures and the maps used to bound them.

For a boundary function ``f`` on sites of a convex body the restricted set is

    B^lam_v = union_i {xi in cell_i : |xi| < 1, xi . nu_i > lam},

and the inequality under test is ``|B^lam_v| >= |B^lam|`` where ``B^lam`` is
the solid cap of the unit ball above height ``lam``.  The sphere-level form,
the Psi maps that compare sphere subsets at radius one and radius
``r = sqrt(1 - lam^2)``, the layer-cake identity that calibrates them and an
adversarial search over boundary functions live here too.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from ._validation import DomainError, check_dimension, check_lambda, check_points
from .geometry import (
    QUAD_EPSABS,
    ConvexBody,
    cap_band_measure,
    cap_surface_measure,
    cap_volume,
    cap_waist_radius,
    sphere_area,
    unit_ball_volume,
)
from .measures import (
    Budget,
    MeasureEstimate,
    _resolve_method,
    per_cell_volumes,
    restricted_profile,
    sample_sphere,
    _block_rng,
    sphere_region_measure,
)
from .subdiff import (
    DiscreteBoundaryFunction,
    SubdifferentialPartition,
    verify_half_line,
)

K_SIGMA = 3.0
EXACT_TOL = 1e-9


def fingerprint(payload):
    """sha256 of the canonical JSON encoding of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if hasattr(x, "to_dict"):
        return x.to_dict()
    raise TypeError(f"cannot encode {type(x).__name__}")


@dataclass
class InequalityReport:
    """Outcome of comparing a measured quantity against its reference value.

    ``direction='ge'`` asserts ``lhs >= rhs``, ``'le'`` the reverse.  The
    margin is signed so that a nonnegative margin always means the inequality
    holds; ``passed`` allows ``k`` half-widths of statistical slack (plus a
    rounding floor for exact measures) and requires every named sub-check in
    ``subchecks`` to pass.
    """

    lhs: MeasureEstimate
    rhs: float
    lam: float
    direction: str = "ge"
    quantity: str = "volume"
    scenario: str = ""
    k: float = K_SIGMA
    subchecks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def margin(self):
        d = self.lhs.value - self.rhs
        return d if self.direction == "ge" else -d

    @property
    def slack(self):
        return self.k * self.lhs.half_width + EXACT_TOL

    @property
    def passed(self):
        return self.margin >= -self.slack and all(self.subchecks.values())

    def to_dict(self):
        return {
            "quantity": self.quantity,
            "direction": self.direction,
            "lambda": self.lam,
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "subchecks": dict(self.subchecks),
            "details": self.details,
            "scenario": self.scenario,
        }


def _partition(f):
    if isinstance(f, SubdifferentialPartition):
        if f.normals_ is None:
            raise DomainError("a partition needs one normal per cell")
        return f
    return SubdifferentialPartition().fit(f)


def _scenario_payload(f, lam, budget, method):
    part = _partition(f)
    return {
        "sites": part.sites_,
        "values": part.values_,
        "normals": part.normals_,
        "lambda": float(lam),
        "budget": (budget or Budget()).to_dict(),
        "method": method,
    }


def restricted_subdiff_measure(f, lam, budget=None, method="auto", radius=1.0):
    """|B^lam_v| for a boundary function or a fitted partition with normals."""
    lam = check_lambda(lam)
    return restricted_profile(_partition(f), [lam], radius, budget, method)[0]


def reflection_check(f, budget=None, method="auto"):
    """Per-cell comparison |cell+ cap B_1| >= 1/2 |cell cap B_1|.

    ``cell+`` is the part of the cell on the positive side of its normal.
    Returns a list of dicts with both measures, the margin and a tolerance
    (``EXACT_TOL`` for exact measures, three combined half-widths otherwise).
    """
    out = []
    for i, (whole, plus) in enumerate(per_cell_volumes(_partition(f), 0.0, 1.0, budget, method)):
        tol = K_SIGMA * (plus.half_width + 0.5 * whole.half_width) + EXACT_TOL
        margin = plus.value - 0.5 * whole.value
        out.append(
            {
                "cell": i,
                "whole": whole.value,
                "positive": plus.value,
                "margin": margin,
                "tol": tol,
                "pass": bool(margin >= -tol),
            }
        )
    return out


def verify_main_inequality(f, lam, budget=None, method="auto"):
    """Check |B^lam_v| >= |B^lam|.

    The half-line certificate is a precondition: without it the partition
    does not come from a convex body and the inequality need not hold, so a
    failing certificate raises :class:`HalfLineViolation`.  At ``lam = 0``
    the cellwise reflection bound is checked as well.
    """
    return verify_main_inequality_grid(f, [lam], budget, method)[0]


def verify_main_inequality_grid(f, lams, budget=None, method="auto"):
    """One report per lambda from a single (common random number) profile.

    Each report equals the one :func:`verify_main_inequality` gives for
    that lambda alone.
    """
    lams = [check_lambda(x) for x in lams]
    part = _partition(f)
    verify_half_line(part).raise_if_failed()
    N = part.n_features_in_
    method = _resolve_method(method, N)
    profile = restricted_profile(part, lams, 1.0, budget, method)
    reports = []
    for lam, lhs in zip(lams, profile):
        report = InequalityReport(
            lhs,
            cap_volume(lam, N=N),
            lam,
            scenario=fingerprint(_scenario_payload(part, lam, budget, method)),
        )
        if lam == 0.0:
            cells = reflection_check(part, budget, method)
            report.details["reflection"] = cells
            report.subchecks["reflection"] = all(c["pass"] for c in cells)
        reports.append(report)
    return reports


@dataclass
class ScaleReduction:
    f: DiscreteBoundaryFunction
    lam: float
    rho: float
    trivial: bool


def scale_reduce(f, lam, rho):
    """Rescale the sphere-level inequality at radius ``rho`` to radius one.

    Cells scale linearly with the values, so the sphere of radius ``rho``
    with threshold ``lam`` corresponds to the unit sphere for ``v / rho``
    with threshold ``lam / rho``.  When ``|lam / rho| >= 1`` one side of the
    inequality is empty or full and it holds trivially.  Any ``rho > 0`` is
    accepted so that reductions can be inverted.
    """
    rho = float(rho)
    if not rho > 0:
        raise DomainError("rho must be positive")
    lam_p = float(lam) / rho
    return ScaleReduction(f.scaled(1.0 / rho), lam_p, rho, abs(lam_p) >= 1.0)


@dataclass
class ProfileCheck:
    """Decrements of t -> |B^(lam+t)_v| against the Lipschitz bound C t."""

    lam: float
    lams: list
    values: list
    half_widths: list
    constant: float
    monotone: bool

    @property
    def excess(self):
        """max over the grid of decrement - C dlam - 2 CI (<= 0 when it holds)."""
        v0, h0 = self.values[0], self.half_widths[0]
        return max(
            (v0 - v) - self.constant * (l - self.lam) - (h0 + h)
            for l, v, h in zip(self.lams[1:], self.values[1:], self.half_widths[1:])
        )

    @property
    def passed(self):
        return self.monotone and self.excess <= EXACT_TOL

    def to_dict(self):
        return {
            "lambda": self.lam,
            "lams": list(self.lams),
            "values": list(self.values),
            "half_widths": list(self.half_widths),
            "constant": self.constant,
            "monotone": self.monotone,
            "excess": self.excess,
            "pass": self.passed,
        }


def lipschitz_constant(lam, N):
    """C = 2^(N+2) omega_N / (1 - lam), valid for increments below (1 - lam) / 4."""
    return 2.0 ** (N + 2) * unit_ball_volume(N) / (1.0 - check_lambda(lam))


def lipschitz_profile_check(f, lam, n_steps=8, budget=None, method="auto"):
    """Profile on lam + k delta / n_steps, k = 0..n_steps, delta = (1 - lam) / 4.

    Monotonicity is exact under common random numbers (and up to 1e-12 for
    the exact planar areas); the decrement bound allows both confidence
    half-widths.
    """
    lam = check_lambda(lam)
    part = _partition(f)
    N = part.n_features_in_
    delta = (1.0 - lam) / 4.0
    lams = [lam + delta * k / n_steps for k in range(n_steps)] + [lam + delta * (1 - 1e-9)]
    est = restricted_profile(part, lams, 1.0, budget, method)
    vals = [e.value for e in est]
    monotone = all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    return ProfileCheck(lam, lams, vals, [e.half_width for e in est], lipschitz_constant(lam, N), monotone)


def ell(t, lam):
    """l(t) = t lam / sqrt(t^2 + lam^2 - 1), the level matching Jacobian t.

    l(1) = sign(lam) and l(t) -> lam as t -> infinity, monotonically.
    """
    lam = check_lambda(lam)
    if lam == 0.0:
        raise DomainError("l(t) degenerates at lambda = 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 1.0):
        raise DomainError("l(t) is defined for t >= 1")
    out = t * lam / np.sqrt(t * t + lam * lam - 1.0)
    return float(out) if out.ndim == 0 else out


# -- Psi maps -----------------------------------------------------------------


def psi_batch(Xi, normals, lam, variant):
    """Psi (``'minus'``) or Psi+ (``'plus'``) applied row-wise.

    Returns the images on the sphere of radius r(lam) and the closed-form
    Jacobians r|s| / sqrt(s^2 - lam^2), s = xi . nu.
    """
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    normals = np.atleast_2d(normals)
    s = np.einsum("ij,ij->i", Xi, normals)
    rad = s * s - lam * lam
    if np.any(rad <= 0):
        raise DomainError("radicand r^2 - 1 + (xi . nu)^2 must be positive")
    root = np.sqrt(rad)
    coef = (-root - s) if variant == "minus" else (root - s)
    out = Xi + coef[:, None] * normals
    jac = cap_waist_radius(lam) * np.abs(s) / root
    return out, jac


@dataclass
class PsiEvaluation:
    input: np.ndarray
    output: np.ndarray
    jacobian: float
    cell_in: int
    cell_out: int
    variant: str
    on_boundary: bool = False

    def to_dict(self):
        return {
            "input": self.input.tolist(),
            "output": self.output.tolist(),
            "jacobian": self.jacobian,
            "cell_in": self.cell_in,
            "cell_out": self.cell_out,
            "variant": self.variant,
        }


def _check_admissible(s, lam, variant):
    if variant == "minus":
        if not (s < lam < 0):
            raise DomainError("Psi needs xi . nu(xi) < lambda < 0")
    elif variant == "plus":
        if not (s > lam > 0):
            raise DomainError("Psi+ needs xi . nu(xi) > lambda > 0")
    else:
        raise ValueError("variant must be 'minus' or 'plus'")


def psi_map(xi, partition, lam, variant=None):
    """Evaluate Psi or Psi+ at a point of the unit sphere.

    ``variant`` defaults to ``'minus'`` for negative and ``'plus'`` for
    positive ``lam``.
    """
    lam = check_lambda(lam)
    part = _partition(partition)
    xi = check_points(xi, dim=part.n_features_in_, name="xi")[0]
    if abs(np.linalg.norm(xi) - 1.0) > 1e-9:
        raise DomainError("xi must lie on the unit sphere")
    variant = variant or ("minus" if lam < 0 else "plus")
    i, flag = part.locate(xi)
    nu = part.normals_[i]
    _check_admissible(float(xi @ nu), lam, variant)
    out, jac = psi_batch(xi, nu, lam, variant)
    j, _ = part.locate(out[0])
    return PsiEvaluation(xi, out[0], float(jac[0]), i, j, variant, flag)


def _tangent_basis(x):
    """Orthonormal basis (rows) of the complement of x."""
    N = len(x)
    q, _ = np.linalg.qr(np.column_stack([x, np.eye(N)]))
    return q[:, 1:N].T


def psi_jacobian_fd(xi, nu, lam, variant, h=None):
    """Jacobian of the sphere-to-sphere map by finite differences.

    The sphere is charted by xi(theta) = (xi + theta @ T) / |.| with T an
    orthonormal tangent frame, whose differential at theta = 0 is an
    isometry; the Jacobian is then the Gram determinant sqrt(det(D^T D)) of
    the five-point central-difference derivative D of Psi o chart, with the
    normal held fixed.
    """
    xi = np.asarray(xi, dtype=float)
    nu = np.asarray(nu, dtype=float)
    T = _tangent_basis(xi)
    s = xi @ nu
    if h is None:
        h = 1e-3 * min(1.0, (s * s - lam * lam) / max(abs(s), 1e-300))
    cols = []
    steps = np.array([-2.0, -1.0, 1.0, 2.0]) * h
    weights = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    for t in T:
        P = xi[None, :] + steps[:, None] * t[None, :]
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        Y, _ = psi_batch(P, np.tile(nu, (4, 1)), lam, variant)
        cols.append(weights @ Y)
    D = np.array(cols).T
    return float(math.sqrt(max(np.linalg.det(D.T @ D), 0.0)))


def sample_admissible(partition, lam, n, seed=0, max_rounds=200):
    """Points where Psi (lam < 0) or Psi+ (lam > 0) is defined.

    For lam < 0 these are uniform points of S_lam, the part of the unit
    sphere with xi . nu(xi) < lam.  For lam > 0 they are built from uniform
    points xi' of the radius-r sphere with xi' . nu(xi') > 0 by following
    the ray xi' + t nu(xi') out to the unit sphere; by the half-line property
    the end point lies in the same cell, satisfies xi . nu > lam and is
    mapped back onto xi' by Psi+.  Points on cell boundaries are skipped.
    Returns (points, cell indices).
    """
    lam = check_lambda(lam)
    if lam == 0.0:
        raise DomainError("the Psi maps need lambda != 0")
    part = _partition(partition)
    N = part.n_features_in_
    r = cap_waist_radius(lam)
    pts, idx = [], []
    total = 0
    for block in range(max_rounds):
        rng = _block_rng(seed, block)
        if lam < 0:
            X = sample_sphere(N, 4 * n, rng)
            i, flag = part.locate_many(X)
            s = np.einsum("ij,ij->i", X, part.normals_[i])
            keep = (s < lam) & ~flag
            X, i = X[keep], i[keep]
        else:
            Y = sample_sphere(N, 4 * n, rng, radius=r)
            i, flag = part.locate_many(Y)
            nu = part.normals_[i]
            a = np.einsum("ij,ij->i", Y, nu)
            keep = (a > 0) & ~flag
            Y, i, nu, a = Y[keep], i[keep], nu[keep], a[keep]
            t = -a + np.sqrt(a * a + lam * lam)
            X = Y + t[:, None] * nu
        pts.append(X)
        idx.append(i)
        total += len(X)
        if total >= n:
            break
    X = np.vstack(pts)[:n]
    i = np.concatenate(idx)[:n]
    return X, i


@dataclass
class PsiCheck:
    lam: float
    variant: str
    n: int
    norm_error: float
    jacobian_rel_error: float
    preserved: float
    min_jacobian: float
    roundtrip_error: float = 0.0

    @property
    def passed(self):
        return (
            self.n > 0
            and self.norm_error <= 1e-10
            and self.jacobian_rel_error < 1e-6
            and self.preserved == 1.0
            and self.min_jacobian >= 1.0 - 1e-12
        )

    def to_dict(self):
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def psi_calculus_check(partition, lam, n=100, seed=0):
    """Norm, Jacobian and cell-preservation checks of Psi/Psi+ on n points."""
    lam = check_lambda(lam)
    part = _partition(partition)
    variant = "minus" if lam < 0 else "plus"
    X, i = sample_admissible(part, lam, n, seed)
    if len(X) == 0:
        return PsiCheck(lam, variant, 0, 0.0, 0.0, 1.0, np.inf)
    nu = part.normals_[i]
    Y, jac = psi_batch(X, nu, lam, variant)
    r = cap_waist_radius(lam)
    norm_err = float(np.max(np.abs(np.linalg.norm(Y, axis=1) - r)))
    fd = np.array([psi_jacobian_fd(x, v, lam, variant) for x, v in zip(X, nu)])
    rel = float(np.max(np.abs(fd - jac) / jac))
    preserved = float(np.mean(part.predict(Y) == i))
    roundtrip = 0.0
    if variant == "plus":
        # the construction started from points of the small sphere; the
        # returned X must land on the unit sphere, in a cell it was built in
        roundtrip = float(np.max(np.abs(np.linalg.norm(X, axis=1) - 1.0)))
        preserved = min(preserved, float(np.mean(part.predict(X) == i)))
    return PsiCheck(lam, variant, len(X), norm_err, rel, preserved, float(jac.min()), roundtrip)


def psi_plus_preservation(partition, lam, n=1000, seed=0):
    """Fraction of S+_lam whose Psi+ image stays in the same cell.

    Psi+ moves against the normal, so unlike Psi it may leave the cell; this
    is diagnostic only.
    """
    part = _partition(partition)
    X = sample_sphere(part.n_features_in_, n, _block_rng(seed, 0))
    i, flag = part.locate_many(X)
    s = np.einsum("ij,ij->i", X, part.normals_[i])
    keep = (s > lam) & ~flag
    if not keep.any():
        return 1.0
    Y, _ = psi_batch(X[keep], part.normals_[i[keep]], lam, "plus")
    return float(np.mean(part.predict(Y) == i[keep]))


# -- layer cake ---------------------------------------------------------------


@dataclass
class LayerCake:
    lam: float
    dim: int
    lhs: float
    rhs: float
    tail: float
    bracket: float
    quad_error: float

    @property
    def error(self):
        return abs(self.lhs - self.rhs)

    @property
    def passed(self):
        return self.error <= 1e-6 + self.bracket

    def to_dict(self):
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def _layer_integrand(t, lam, N):
    # phi(lam) - phi(l(t)) is the zone between heights l(t) and lam
    return cap_band_measure(ell(t, lam), lam, N)


def layer_cake_check(lam, N=2, t_max=1e4, quad_tol=1e-10):
    """Both sides of the half-space calibration identity

        int_1^inf (phi(lam) - phi(l(t))) dt + phi(lam) = 1/2 |sphere of radius r|

    with phi the lower cap measure of the unit sphere.  The integral is
    truncated at ``t_max`` (computed in the variable log t) and the tail is
    estimated from the t^-2 decay of the integrand; ``bracket`` combines the
    quadrature error with the change of the tail estimate between t_max/2
    and t_max.
    """
    lam = check_lambda(lam)
    if not lam < 0:
        raise DomainError("the layer-cake identity is stated for lambda < 0")
    N = check_dimension(N)
    if not t_max > 2:
        raise DomainError("t_max must exceed 2")
    val, err = quad(
        lambda u: _layer_integrand(math.exp(u), lam, N) * math.exp(u),
        0.0,
        math.log(t_max),
        epsabs=QUAD_EPSABS,
        epsrel=quad_tol,
        limit=200,
    )
    if err > 1e-6:
        raise RuntimeError(f"layer-cake quadrature did not converge (error {err:.2e})")
    A = _layer_integrand(t_max, lam, N) * t_max**2
    A_half = _layer_integrand(t_max / 2, lam, N) * (t_max / 2) ** 2
    tail = A / t_max
    bracket = abs(A - A_half) / t_max + err
    phi = cap_surface_measure(lam, N, "below")
    lhs = val + tail + phi
    rhs = 0.5 * N * unit_ball_volume(N) * cap_waist_radius(lam) ** (N - 1)
    return LayerCake(lam, N, lhs, rhs, tail, bracket, err)


# -- sphere-level inequality --------------------------------------------------


def surjectivity_check(partition, lam, n=2000, seed=0):
    """Statistical check that the positive half of the radius-r sphere is
    covered by Psi+ of S+_lam.

    Each sampled xi' with xi' . nu(xi') > 0 is pushed along its normal to the
    unit sphere; the end point must stay in the cell of xi', have
    xi . nu > lam and be mapped back to xi' by Psi+.
    """
    lam = check_lambda(lam)
    part = _partition(partition)
    N = part.n_features_in_
    r = cap_waist_radius(lam)
    Y = sample_sphere(N, n, _block_rng(seed, 0), radius=r)
    i, flag = part.locate_many(Y)
    nu = part.normals_[i]
    a = np.einsum("ij,ij->i", Y, nu)
    # points within 1e-9 of the rim xi' . nu = 0 are boundary points, like
    # flagged cell boundaries; there s^2 - lam^2 is lost to rounding
    keep = (a > 1e-9) & ~flag
    Y, i, nu, a = Y[keep], i[keep], nu[keep], a[keep]
    t = -a + np.sqrt(a * a + lam * lam)
    X = Y + t[:, None] * nu
    ok = part.predict(X) == i
    ok &= np.einsum("ij,ij->i", X, nu) > lam
    ok &= np.abs(np.linalg.norm(X, axis=1) - 1.0) <= 1e-10
    if lam > 0:
        # Psi+ amplifies rounding by its Jacobian, which blows up as
        # xi' . nu -> 0, so the round trip is compared at that scale
        back, jac = psi_batch(X, nu, lam, "plus")
        ok &= np.linalg.norm(back - Y, axis=1) <= 1e-10 * np.maximum(1.0, jac)
    return {"samples": int(len(Y)), "covered": float(ok.mean()) if len(Y) else 1.0}


def verify_sphere_inequality(f, lam, budget=None, method="auto", radius=1.0):
    """Sphere-level form of the main inequality.

    For lam >= 0 the measure of {xi . nu(xi) > lam} on the sphere is
    compared with phi+(lam); for lam < 0 the measure of {xi . nu(xi) < lam}
    must not exceed phi(lam).  At lam = 0 the reflection bound on the
    positive and negative halves is recorded and for lam > 0 the covering
    property of Psi+ is checked by sampling.
    """
    lam = check_lambda(lam)
    part = _partition(f)
    verify_half_line(part).raise_if_failed()
    N = part.n_features_in_
    method = _resolve_method(method, N)
    budget = budget or Budget()
    scen = fingerprint(_scenario_payload(part, lam, budget, method) | {"radius": radius})
    t = lam / radius
    if lam < 0:
        lhs = sphere_region_measure(part, lam, "<", radius, budget, method)
        rhs = cap_surface_measure(max(t, -1.0), N, "below", radius)
        rep = InequalityReport(lhs, rhs, lam, "le", "sphere", scen)
    else:
        lhs = sphere_region_measure(part, lam, ">", radius, budget, method)
        rhs = cap_surface_measure(min(t, 1.0), N, "above", radius)
        rep = InequalityReport(lhs, rhs, lam, "ge", "sphere", scen)
    if lam == 0.0:
        minus = sphere_region_measure(part, 0.0, "<", radius, budget, method)
        half = 0.5 * sphere_area(N, radius)
        tol = K_SIGMA * lhs.half_width + EXACT_TOL
        rep.details["reflection"] = {"negative": minus.value, "positive": lhs.value, "half": half}
        rep.subchecks["reflection"] = bool(
            minus.value <= half + tol and lhs.value >= half - tol
        )
    elif lam > 0 and abs(t) < 1:
        cov = surjectivity_check(part, t, seed=budget.seed)
        rep.details["surjectivity"] = cov
        rep.subchecks["surjectivity"] = cov["covered"] == 1.0
    return rep


# -- adversarial search -------------------------------------------------------


class BoundaryChart:
    """Parametrisation of boundary points of a convex body.

    Balls use an unnormalised direction in R^N.  Polyhedral bodies use a face
    index and N - 1 tangent coordinates around an anchor point of that face;
    the point is projected onto the body, so coordinates that leave the face
    land on a neighbouring face or ridge, whose active normal is then used.
    """

    def __init__(self, body):
        self.body = body
        self.N = body.dim
        if body.kind == "ball":
            self.n_coords = self.N
            self.n_faces = 1
        else:
            self.n_coords = self.N - 1
            self.n_faces = body.n_faces
            c = body.interior_point
            self.anchors = []
            self.frames = []
            for k in range(self.n_faces):
                n, b = body.normals[k], body.offsets[k]
                self.anchors.append(body.project(c + (b - n @ c + 1.0) * n)[0])
                self.frames.append(_tangent_basis(n))

    def point(self, face, coords):
        """(site, outward normal) for one parameter vector."""
        coords = np.asarray(coords, dtype=float)
        body = self.body
        if body.kind == "ball":
            d = coords / np.linalg.norm(coords)
            return body.center + body.radius * d, d
        k = int(face)
        x = self.anchors[k] + coords @ self.frames[k]
        n = body.normals[k]
        x = x - (n @ x - body.offsets[k]) * n
        if np.any(body.normals @ x - body.offsets > 1e-12):
            x = body.project(x)[0]
        active = body.active_faces(x)
        if k not in active:
            k = int(active[0])
        return x, body.normals[k]

    def random(self, rng, scale=1.0):
        face = int(rng.integers(self.n_faces))
        return face, scale * rng.standard_normal(self.n_coords)


def _assemble(chart, faces, coords, values):
    pts = [chart.point(k, c) for k, c in zip(faces, coords)]
    sites = np.array([p for p, _ in pts])
    normals = np.array([n for _, n in pts])
    return sites, normals


def _objective(chart, faces, coords, values, lam, budget, method):
    sites, normals = _assemble(chart, faces, coords, values)
    if len(sites) > 1:
        d = np.linalg.norm(sites[:, None] - sites[None, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if d.min() <= 1e-6:
            return np.inf
    part = SubdifferentialPartition().fit(sites, values, normals)
    return restricted_profile(part, [lam], 1.0, budget, method)[0].value


@dataclass
class SearchResult:
    f: DiscreteBoundaryFunction
    report: InequalityReport
    objective: float
    evaluations: int
    history: list

    def to_dict(self):
        return {
            "f": self.f.to_dict(),
            "report": self.report.to_dict(),
            "objective": self.objective,
            "evaluations": self.evaluations,
        }


def minimize_restricted_measure(
    body,
    n_sites,
    lam,
    n_starts=4,
    sweeps=15,
    seed=0,
    search_budget=None,
    final_budget=None,
    method="auto",
    step=0.5,
    min_step=1e-3,
):
    """Multi-start coordinate descent for the smallest |B^lam_v|.

    The variables are the chart coordinates and values of every site; each
    start performs compass steps along every coordinate, halving the step
    when a sweep makes no progress.  Face indices are revisited once per
    sweep.  Monte Carlo objectives reuse one seed so every evaluation sees
    the same sample points.  The first start puts all sites on one face,
    the configuration that attains equality.  The best configuration is
    re-evaluated with ``final_budget``.
    """
    if n_sites < 1:
        raise DomainError("n_sites must be at least 1")
    if not isinstance(body, ConvexBody):
        raise TypeError("body must be a ConvexBody")
    lam = check_lambda(lam)
    N = body.dim
    method = _resolve_method(method, N)
    search_budget = search_budget or Budget(samples=20_000, seed=seed)
    final_budget = final_budget or Budget(samples=1_000_000, seed=seed + 1)
    chart = BoundaryChart(body)
    rng = np.random.default_rng(seed)
    best = None
    evals = 0
    history = []
    for start in range(n_starts):
        faces = []
        coords = []
        for _ in range(n_sites):
            k, c = chart.random(rng)
            faces.append(0 if start == 0 else k)
            coords.append(c)
        values = rng.standard_normal(n_sites)

        def obj():
            return _objective(chart, faces, coords, values, lam, search_budget, method)

        cur = obj()
        evals += 1
        h = step
        for _ in range(sweeps):
            improved = False
            if n_sites == 1:
                break
            for i in range(n_sites):
                for k in range(chart.n_faces):
                    if k == faces[i]:
                        continue
                    old = faces[i]
                    faces[i] = k
                    val = obj()
                    evals += 1
                    if val < cur:
                        cur, improved = val, True
                    else:
                        faces[i] = old
                for j in range(chart.n_coords + 1):
                    for sgn in (1.0, -1.0):
                        if j < chart.n_coords:
                            coords[i][j] += sgn * h
                        else:
                            values[i] += sgn * h
                        val = obj()
                        evals += 1
                        if val < cur:
                            cur, improved = val, True
                            break
                        if j < chart.n_coords:
                            coords[i][j] -= sgn * h
                        else:
                            values[i] -= sgn * h
            history.append(cur)
            if not improved:
                h *= 0.5
                if h < min_step:
                    break
        if best is None or cur < best[0]:
            best = (cur, list(faces), [c.copy() for c in coords], values.copy())
    cur, faces, coords, values = best
    sites, normals = _assemble(chart, faces, coords, values)
    f = DiscreteBoundaryFunction(sites, values, normals, body=body, validate=False)
    report = verify_main_inequality(f, lam, final_budget, method)
    report.details["search"] = {"objective": cur, "evaluations": evals, "starts": n_starts}
    return SearchResult(f, report, cur, evals, history)
