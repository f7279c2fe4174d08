"""Subdifferential partitions of R^N induced by a function on finitely many
boundary points of a convex body.

For sites x_1..x_n with values v_i the cell of site i is

    J v(x_i) = {xi : v_j - v_i >= xi . (x_j - x_i) for all j},

equivalently the set of slopes for which site i minimises v_j - xi . x_j.
That second form is what :meth:`SubdifferentialPartition.predict` evaluates,
so point location costs one matrix product per query batch.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import DomainError, check_points, check_unit_rows
from .geometry import BOUNDARY_TOL, ConvexBody

ON_BOUNDARY_TOL = 1e-10
HALF_LINE_TOL = 1e-12


class HalfLineViolation(ValueError):
    """Some cell fails the half-line property; the normals are not supporting."""


@dataclass
class DiscreteBoundaryFunction:
    """Values on a finite set of boundary sites together with outer normals."""

    sites: np.ndarray
    values: np.ndarray
    normals: np.ndarray
    body: ConvexBody = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.sites = check_points(self.sites, name="sites")
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        self.normals = check_points(self.normals, dim=self.dim, name="normals")
        if len(self.values) != len(self.sites) or len(self.normals) != len(self.sites):
            raise DomainError("sites, values and normals must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("values must be finite")
        if self.validate:
            self.check()

    @property
    def dim(self):
        return self.sites.shape[1]

    @property
    def n_sites(self):
        return len(self.sites)

    def check(self, n_samples=256, seed=0):
        """Verify the type invariants; raises DomainError on the first failure."""
        check_unit_rows(self.normals, tol=1e-12)
        if self.n_sites > 1:
            diff = self.sites[:, None, :] - self.sites[None, :, :]
            dist = np.linalg.norm(diff, axis=-1)
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= 1e-9:
                raise DomainError("sites must be pairwise distinct")
        Y = self.sites
        if self.body is not None:
            sd = self.body.signed_distance(self.sites)
            if np.any(np.abs(sd) > BOUNDARY_TOL):
                raise DomainError("every site must lie on the boundary of the body")
            rng = np.random.default_rng(seed)
            Y = np.vstack([Y, self.body.sample_interior(n_samples, rng)])
        margins = np.einsum("ikn,in->ik", Y[None, :, :] - self.sites[:, None, :], self.normals)
        if margins.max() > 1e-12:
            i = int(np.argmax(margins.max(axis=1)))
            raise DomainError(f"normal at site {i} is not a supporting normal")

    @classmethod
    def from_body(cls, body, sites, values, faces=None):
        """Attach outer normals computed from ``body``; ``faces`` picks ridge faces."""
        sites = check_points(sites, dim=body.dim, name="sites")
        faces = [None] * len(sites) if faces is None else faces
        normals = np.array([body.outward_normal(x, face=f) for x, f in zip(sites, faces)])
        return cls(sites, values, normals, body=body)

    def scaled(self, factor):
        """Same sites and normals, values multiplied by ``factor``."""
        return DiscreteBoundaryFunction(
            self.sites, self.values * factor, self.normals, body=self.body, validate=False
        )

    def to_dict(self):
        return {
            "sites": self.sites.tolist(),
            "values": self.values.tolist(),
            "normals": self.normals.tolist(),
        }

    @classmethod
    def from_dict(cls, d, body=None):
        sites = np.asarray(d["sites"], dtype=float)
        if d.get("normals") is None:
            if body is None:
                raise DomainError("normals are required when no body is given")
            return cls.from_body(body, sites, d["values"], faces=d.get("faces"))
        normals = np.asarray(d["normals"], dtype=float)
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
        return cls(sites, d["values"], normals, body=body)


@dataclass
class SubdifferentialCell:
    """One polyhedral cell in H-representation: directions @ xi <= bounds."""

    site_index: int
    directions: np.ndarray
    bounds: np.ndarray
    normal: np.ndarray
    redundant_removed: bool = False
    interior_margin: float = np.nan
    witness: np.ndarray = None
    neighbors: np.ndarray = None

    @property
    def is_empty(self):
        """No interior point (either infeasible or lower dimensional)."""
        return not self.interior_margin > 0

    def contains(self, Xi, tol=0.0):
        Xi = np.atleast_2d(Xi)
        if len(self.bounds) == 0:
            return np.ones(len(Xi), dtype=bool)
        return np.all(Xi @ self.directions.T <= self.bounds + tol, axis=1)

    def slack(self, Xi):
        """Smallest constraint slack per point (negative means outside)."""
        Xi = np.atleast_2d(Xi)
        if len(self.bounds) == 0:
            return np.full(len(Xi), np.inf)
        return (self.bounds - Xi @ self.directions.T).min(axis=1)


def _feasibility(directions, bounds):
    """Max-margin point of {d . xi <= b}; margin is measured in Euclidean units
    and capped at 1, so a positive value certifies a nonempty interior.

    xi is left unbounded: nearly coincident sites with distinct values give
    cells that exist only far from the origin."""
    N = directions.shape[1]
    if len(bounds) == 0:
        return 1.0, np.zeros(N)
    norms = np.linalg.norm(directions, axis=1)
    c = np.zeros(N + 1)
    c[-1] = -1.0
    A_ub = np.hstack([directions, norms[:, None]])
    res = linprog(
        c, A_ub=A_ub, b_ub=bounds, bounds=[(None, None)] * N + [(None, 1.0)], method="highs"
    )
    if res.status != 0:
        raise RuntimeError(f"cell feasibility LP failed: {res.message}")
    return float(res.x[-1]), res.x[:N]


def _prune(directions, bounds):
    """Indices of the irredundant constraints (an unbounded LP means the
    constraint is needed)."""
    keep = []
    for k in range(len(bounds)):
        others = [j for j in range(len(bounds)) if j != k]
        if not others:
            keep.append(k)
            continue
        res = linprog(
            -directions[k],
            A_ub=directions[others],
            b_ub=bounds[others],
            bounds=[(None, None)] * directions.shape[1],
            method="highs",
        )
        if res.status != 0 or -res.fun > bounds[k] - 1e-12:
            keep.append(k)
    return np.array(keep, dtype=int)


class SubdifferentialPartition(BaseEstimator):
    """Point location in the subdifferential partition of a boundary function.

    Parameters
    ----------
    boundary_tol : float
        A query point is flagged ``on_boundary`` when its best and second-best
        site scores agree within this tolerance, i.e. some constraint of its
        cell is active.
    prune_redundant : bool
        Remove redundant constraints when materialising cells.

    Fitting takes the sites as ``X`` and the values as ``y``; the normals are a
    fit parameter because they are needed only for the half-line machinery.
    """

    def __init__(self, boundary_tol=ON_BOUNDARY_TOL, prune_redundant=False):
        self.boundary_tol = boundary_tol
        self.prune_redundant = prune_redundant

    def fit(self, X, y=None, normals=None):
        if isinstance(X, DiscreteBoundaryFunction):
            X, y, normals = X.sites, X.values, X.normals
        self.sites_ = check_points(X, name="sites")
        self.values_ = np.asarray(y, dtype=float).reshape(-1)
        if len(self.values_) != len(self.sites_):
            raise DomainError("one value per site is required")
        self.normals_ = None if normals is None else check_points(normals, self.sites_.shape[1])
        self.n_features_in_ = self.sites_.shape[1]
        self._cells = None
        return self

    @property
    def n_sites(self):
        check_is_fitted(self, "sites_")
        return len(self.sites_)

    def scores(self, Xi):
        """v_j - xi . x_j for every query point and site."""
        check_is_fitted(self, "sites_")
        Xi = check_points(Xi, dim=self.n_features_in_, name="xi")
        return self.values_[None, :] - Xi @ self.sites_.T

    def predict(self, Xi):
        """Lowest index of a cell containing each query point."""
        return np.argmin(self.scores(Xi), axis=1)

    def locate_many(self, Xi):
        S = self.scores(Xi)
        idx = np.argmin(S, axis=1)
        if S.shape[1] == 1:
            return idx, np.zeros(len(idx), dtype=bool)
        part = np.partition(S, 1, axis=1)
        return idx, (part[:, 1] - part[:, 0]) <= self.boundary_tol

    def locate(self, xi):
        """(site index, on_boundary) for a single point."""
        idx, flag = self.locate_many(np.atleast_2d(xi))
        return int(idx[0]), bool(flag[0])

    def normal_of(self, Xi):
        """The normal nu(xi) of the cell containing each point."""
        if self.normals_ is None:
            raise DomainError("partition was fitted without normals")
        return self.normals_[self.predict(Xi)]

    def cells(self):
        """Materialise the H-representation of every cell (cached)."""
        check_is_fitted(self, "sites_")
        if self._cells is None:
            self._cells = [self._cell(i) for i in range(self.n_sites)]
        return self._cells

    def constraints(self, i):
        """(directions, bounds, neighbour indices) of cell ``i`` without pruning."""
        others = np.flatnonzero(np.arange(self.n_sites) != i)
        return self.sites_[others] - self.sites_[i], self.values_[others] - self.values_[i], others

    def _cell(self, i):
        D, b, others = self.constraints(i)
        if self.prune_redundant and len(b) > 1:
            keep = _prune(D, b)
            D, b, others = D[keep], b[keep], others[keep]
        margin, witness = _feasibility(D, b)
        normal = None if self.normals_ is None else self.normals_[i]
        return SubdifferentialCell(
            i, D, b, normal, self.prune_redundant, margin, witness, neighbors=others
        )


def build_partition(f, prune_redundant=False):
    """Cells of the partition induced by ``f`` (one per site, possibly empty)."""
    model = SubdifferentialPartition(prune_redundant=prune_redundant).fit(f)
    return model.cells()


def locate(partition, xi):
    if isinstance(partition, SubdifferentialPartition):
        return partition.locate(xi)
    xi = np.asarray(xi, dtype=float)
    for cell in partition:
        if cell.contains(xi)[0]:
            return cell.site_index, bool(cell.slack(xi)[0] <= ON_BOUNDARY_TOL)
    raise RuntimeError("query point not covered by the partition")


@dataclass
class HalfLineCertificate:
    worst_margin: np.ndarray
    violations: list
    tol: float = HALF_LINE_TOL

    @property
    def passed(self):
        return not self.violations

    def raise_if_failed(self):
        if self.violations:
            i, j, m = self.violations[0]
            raise HalfLineViolation(
                f"cell {i}: direction to site {j} has margin {m:.3e} along its normal"
            )

    def to_dict(self):
        return {
            "passed": self.passed,
            "worst_margin": [float(m) for m in self.worst_margin],
            "violations": [[int(i), int(j), float(m)] for i, j, m in self.violations],
        }


def verify_half_line(cells, f=None, tol=HALF_LINE_TOL):
    """Check d . nu_i <= tol for every constraint direction d of every cell.

    ``cells`` may be a list of :class:`SubdifferentialCell`, a fitted
    :class:`SubdifferentialPartition` or a :class:`DiscreteBoundaryFunction`.
    A passing certificate means each cell is invariant under xi -> xi + t nu_i.
    """
    if isinstance(cells, DiscreteBoundaryFunction):
        f, cells = cells, None
    if isinstance(cells, SubdifferentialPartition):
        sites, normals = cells.sites_, cells.normals_
    elif cells is None or f is not None:
        sites, normals = f.sites, f.normals
    else:
        sites, normals = None, np.array([c.normal for c in cells])
    if sites is not None:
        D = sites[None, :, :] - sites[:, None, :]
        M = np.einsum("ijn,in->ij", D, normals)
        np.fill_diagonal(M, -np.inf)
        pairs = [(i, j) for i in range(len(sites)) for j in range(len(sites)) if i != j]
        margins = {(i, j): M[i, j] for i, j in pairs}
    else:
        margins = {}
        for c in cells:
            for j, d in zip(c.neighbors, c.directions):
                margins[(c.site_index, int(j))] = float(d @ c.normal)
    n = len(normals)
    worst = np.full(n, -np.inf)
    violations = []
    for (i, j), m in margins.items():
        worst[i] = max(worst[i], m)
        if m > tol:
            violations.append((i, j, float(m)))
    worst[~np.isfinite(worst)] = 0.0
    return HalfLineCertificate(worst, violations, tol)
