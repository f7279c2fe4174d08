"""Volumes of clipped subdifferential cells and measures of sphere subsets.

Two methods are provided.  ``exact2d`` is closed-form planar geometry: a cell
clipped by a halfplane is a convex polygon and its area inside a disk is a
sum of triangles and circular sectors; the sphere in the plane is a circle
whose relevant subsets are finite unions of arcs.  ``montecarlo`` works in
any dimension and reports a 99% binomial confidence half-width.

Random streams are split into blocks; block ``b`` of seed ``s`` always draws
from ``SeedSequence([s, b])``, so estimates do not depend on how blocks are
scheduled.
"""

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import DomainError
from .geometry import sphere_area, unit_ball_volume
from .subdiff import SubdifferentialCell

Z99 = 2.576
METHODS = ("exact2d", "exact", "montecarlo")


class DegenerateConfiguration(RuntimeError):
    """Too many samples fell on cell boundaries to trust the estimate."""


@dataclass
class Budget:
    samples: int = 100_000
    seed: int = 0
    target_half_width: float = None
    block_size: int = 1 << 16

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        return cls(
            samples=int(d.get("samples", cls.samples)),
            seed=int(d.get("seed", cls.seed)),
            target_half_width=d.get("target_half_width"),
        )

    def to_dict(self):
        return {
            "samples": self.samples,
            "seed": self.seed,
            "target_half_width": self.target_half_width,
        }


@dataclass
class MeasureEstimate:
    value: float
    half_width: float = 0.0
    method: str = "exact2d"
    samples: int = 0
    seed: int = 0
    warning: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.value < 0 and self.value > -1e-12:
            self.value = 0.0

    @property
    def is_exact(self):
        return self.method != "montecarlo"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def mc_estimate(hits, samples, reference, seed, target=None):
    p = hits / samples
    hw = Z99 * math.sqrt(p * (1.0 - p) / samples) * reference
    warn = target is not None and hw > target
    return MeasureEstimate(p * reference, hw, "montecarlo", int(samples), int(seed), warn)


def pool(estimates):
    """Sum of independent estimates; half-widths add in quadrature."""
    estimates = list(estimates)
    value = sum(e.value for e in estimates)
    hw = math.sqrt(sum(e.half_width**2 for e in estimates))
    exact = all(e.is_exact for e in estimates)
    first = estimates[0] if estimates else MeasureEstimate(0.0)
    return MeasureEstimate(
        value,
        hw,
        first.method if exact else "montecarlo",
        sum(e.samples for e in estimates),
        first.seed,
        any(e.warning for e in estimates),
    )


# -- sampling -----------------------------------------------------------------


def _block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), block]))


def sample_ball(N, n, rng, radius=1.0):
    """Uniform points in B_radius: Gaussian direction, radius r U^(1/N)."""
    d = rng.standard_normal((n, N))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / N)
    return d * r[:, None]


def sample_sphere(N, n, rng, radius=1.0):
    d = rng.standard_normal((n, N))
    return radius * d / np.linalg.norm(d, axis=1, keepdims=True)


def sample_blocks(budget, N, kind="ball", radius=1.0):
    """Yield sample blocks; stops early once the caller signals enough."""
    done = 0
    block = 0
    sampler = sample_ball if kind == "ball" else sample_sphere
    while done < budget.samples:
        n = min(budget.block_size, budget.samples - done)
        yield sampler(N, n, _block_rng(budget.seed, block), radius)
        done += n
        block += 1


# -- planar exact geometry ----------------------------------------------------


def clip_polygon(poly, normal, offset):
    """Clip a convex polygon (k x 2, CCW) by {p : normal . p <= offset}."""
    if len(poly) == 0:
        return poly
    s = poly @ normal - offset
    out = []
    k = len(poly)
    for a in range(k):
        b = (a + 1) % k
        pa, pb, sa, sb = poly[a], poly[b], s[a], s[b]
        if sa <= 0:
            out.append(pa)
        if (sa < 0 < sb) or (sb < 0 < sa):
            t = sa / (sa - sb)
            out.append(pa + t * (pb - pa))
    return np.array(out) if out else np.zeros((0, 2))


def _cross(p, q):
    return p[0] * q[1] - p[1] * q[0]


def _triangle_disk_area(p, q, r):
    """Signed area of triangle (0, p, q) intersected with the disk B_r(0)."""
    d = q - p
    a = d @ d
    ts = [0.0]
    if a > 0:
        b = 2.0 * (p @ d)
        c = p @ p - r * r
        disc = b * b - 4 * a * c
        if disc > 0:
            sq = math.sqrt(disc)
            for t in sorted(((-b - sq) / (2 * a), (-b + sq) / (2 * a))):
                if 0.0 < t < 1.0:
                    ts.append(t)
    ts.append(1.0)
    total = 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        P = p + t0 * d
        Q = p + t1 * d
        M = p + 0.5 * (t0 + t1) * d
        if M @ M <= r * r:
            total += 0.5 * _cross(P, Q)
        else:
            total += 0.5 * r * r * math.atan2(_cross(P, Q), P @ Q)
    return total


def polygon_disk_area(poly, radius):
    """Area of a polygon (CCW or CW) intersected with the disk centred at 0."""
    if len(poly) < 3:
        return 0.0
    total = 0.0
    for a in range(len(poly)):
        total += _triangle_disk_area(poly[a], poly[(a + 1) % len(poly)], radius)
    return abs(total)


def _halfplanes(cell, lam, nu):
    planes = []
    if isinstance(cell, tuple):
        planes.extend(zip(cell[0], cell[1]))
    elif cell is not None:
        planes.extend(zip(cell.directions, cell.bounds))
    if lam is not None and np.isfinite(lam):
        planes.append((-np.asarray(nu, dtype=float), -float(lam)))
    return planes


def clipped_region_area(halfplanes, radius):
    """Exact area of {|xi| < radius} intersected with the given halfplanes."""
    R = 2.0 * radius
    poly = np.array([[-R, -R], [R, -R], [R, R], [-R, R]], dtype=float)
    for normal, offset in halfplanes:
        poly = clip_polygon(poly, np.asarray(normal, dtype=float), float(offset))
        if len(poly) < 3:
            return 0.0
    return polygon_disk_area(poly, radius)


def _resolve_method(method, N):
    if method == "auto":
        return "exact2d" if N == 2 else "montecarlo"
    if method == "exact2d" and N != 2:
        raise DomainError("exact measures are implemented for N = 2 only")
    if method not in ("exact2d", "montecarlo"):
        raise ValueError(f"unknown method {method!r}")
    return method


# -- volumes ------------------------------------------------------------------


def region_volume(cell, lam, nu, radius=1.0, budget=None, method="auto", dim=None):
    """Measure of {xi in B_radius : xi in cell, xi . nu > lam}.

    ``cell=None`` stands for the whole space and ``lam=None`` (or -inf) drops
    the angular condition.  The threshold is absolute, not scaled by radius.
    """
    if not radius > 0:
        raise DomainError("radius must be positive")
    if isinstance(cell, tuple):
        cell = SubdifferentialCell(-1, np.atleast_2d(cell[0]), np.asarray(cell[1], dtype=float), None)
    N = dim if dim is not None else len(nu) if nu is not None else cell.directions.shape[1]
    method = _resolve_method(method, N)
    if method == "exact2d":
        return MeasureEstimate(clipped_region_area(_halfplanes(cell, lam, nu), radius))
    budget = budget or Budget()
    ref = unit_ball_volume(N) * radius**N
    hits = 0
    n = 0
    for X in sample_blocks(budget, N, "ball", radius):
        inside = np.ones(len(X), dtype=bool) if cell is None else cell.contains(X)
        if lam is not None and np.isfinite(lam):
            inside &= X @ nu > lam
        hits += int(inside.sum())
        n += len(X)
        if _target_met(hits, n, ref, budget):
            break
    est = mc_estimate(hits, n, ref, budget.seed, budget.target_half_width)
    if est.warning:
        warnings.warn("sample budget exhausted before the target half-width", RuntimeWarning)
    return est


def _target_met(hits, n, ref, budget):
    if budget.target_half_width is None:
        return False
    p = hits / n
    return Z99 * math.sqrt(p * (1 - p) / n) * ref <= budget.target_half_width


def restricted_profile(partition, lams, radius=1.0, budget=None, method="auto"):
    """Measures of {xi in B_radius : xi . nu(xi) > lam} for each lam.

    In Monte Carlo mode all thresholds share one sample stream, so the
    returned values are nonincreasing in lam sample by sample.
    """
    N = partition.n_features_in_
    lams = [float(x) for x in lams]
    method = _resolve_method(method, N)
    normals = partition.normals_
    if method == "exact2d":
        cons = [partition.constraints(i) for i in range(partition.n_sites)]
        out = []
        for lam in lams:
            total = sum(
                clipped_region_area(_halfplanes(c, lam, normals[i]), radius)
                for i, c in enumerate(cons)
            )
            out.append(MeasureEstimate(total))
        return out
    budget = budget or Budget()
    ref = unit_ball_volume(N) * radius**N
    lam_arr = np.asarray(lams)
    hits = np.zeros(len(lams), dtype=np.int64)
    n = 0
    for X in sample_blocks(budget, N, "ball", radius):
        s = np.einsum("ij,ij->i", X, normals[partition.predict(X)])
        hits += (s[:, None] > lam_arr[None, :]).sum(axis=0)
        n += len(X)
    return [mc_estimate(int(h), n, ref, budget.seed, budget.target_half_width) for h in hits]


def per_cell_volumes(partition, lam, radius=1.0, budget=None, method="auto"):
    """Per-cell pairs (|cell cap B_r|, |cell cap B_r cap {xi . nu_i > lam}|)."""
    N = partition.n_features_in_
    method = _resolve_method(method, N)
    normals = partition.normals_
    n_sites = partition.n_sites
    if method == "exact2d":
        out = []
        for i in range(n_sites):
            c = partition.constraints(i)
            whole = clipped_region_area(_halfplanes(c, None, None), radius)
            part = clipped_region_area(_halfplanes(c, lam, normals[i]), radius)
            out.append((MeasureEstimate(whole), MeasureEstimate(part)))
        return out
    budget = budget or Budget()
    ref = unit_ball_volume(N) * radius**N
    whole = np.zeros(n_sites, dtype=np.int64)
    part = np.zeros(n_sites, dtype=np.int64)
    n = 0
    for X in sample_blocks(budget, N, "ball", radius):
        idx = partition.predict(X)
        s = np.einsum("ij,ij->i", X, normals[idx])
        whole += np.bincount(idx, minlength=n_sites)
        part += np.bincount(idx[s > lam], minlength=n_sites)
        n += len(X)
    return [
        (mc_estimate(int(w), n, ref, budget.seed), mc_estimate(int(p), n, ref, budget.seed))
        for w, p in zip(whole, part)
    ]


# -- sphere measures ----------------------------------------------------------


def _circle_line_angles(normal, offset, radius):
    """Angles where the circle of given radius meets {normal . p = offset}."""
    nn = np.linalg.norm(normal)
    if nn == 0:
        return []
    c = offset / (nn * radius)
    if abs(c) > 1:
        return []
    base = math.atan2(normal[1], normal[0])
    w = math.acos(c)
    return [base - w, base + w]


def _exact_circle_measure(partition, lam, predicate, radius):
    sites, values, normals = partition.sites_, partition.values_, partition.normals_
    angles = [0.0]
    n = len(sites)
    for i in range(n):
        for j in range(i + 1, n):
            angles += _circle_line_angles(sites[j] - sites[i], values[j] - values[i], radius)
    for nu in normals:
        angles += _circle_line_angles(nu, lam, radius)
    angles = np.sort(np.mod(angles, 2 * math.pi))
    angles = np.append(angles, angles[0] + 2 * math.pi)
    lo, hi = angles[:-1], angles[1:]
    keep = hi - lo > 0
    lo, hi = lo[keep], hi[keep]
    mid = 0.5 * (lo + hi)
    P = radius * np.stack([np.cos(mid), np.sin(mid)], axis=1)
    s = np.einsum("ij,ij->i", P, normals[partition.predict(P)])
    sel = s < lam if predicate == "<" else s > lam
    return float(radius * np.sum((hi - lo)[sel]))


def sphere_region_measure(
    partition, lam, predicate=">", radius=1.0, budget=None, method="auto", max_boundary=0.01
):
    """Measure of {xi on the sphere of given radius : xi . nu(xi) <pred> lam}.

    Monte Carlo samples whose cell is ambiguous are discarded (counted as
    misses); more than ``max_boundary`` of them aborts the estimate.
    """
    if predicate not in ("<", ">"):
        raise ValueError("predicate must be '<' or '>'")
    if not radius > 0:
        raise DomainError("radius must be positive")
    N = partition.n_features_in_
    method = _resolve_method(method, N)
    if method == "exact2d":
        return MeasureEstimate(_exact_circle_measure(partition, lam, predicate, radius))
    budget = budget or Budget()
    ref = sphere_area(N, radius)
    normals = partition.normals_
    hits = flagged = n = 0
    for X in sample_blocks(budget, N, "sphere", radius):
        idx, on_b = partition.locate_many(X)
        s = np.einsum("ij,ij->i", X, normals[idx])
        sel = (s < lam) if predicate == "<" else (s > lam)
        hits += int((sel & ~on_b).sum())
        flagged += int(on_b.sum())
        n += len(X)
    if flagged > max_boundary * n:
        raise DegenerateConfiguration(f"{flagged} of {n} sphere samples on cell boundaries")
    return mc_estimate(hits, n, ref, budget.seed, budget.target_half_width)
