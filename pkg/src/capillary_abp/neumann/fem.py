"""P1 finite elements for the pure Neumann problem

    Lap u = c in Omega,  du/dnu = 1 on SIGMA,  du/dnu = -lam on GAMMA,

with c fixed by compatibility, c |Omega| = |SIGMA| - lam |GAMMA|, and the
additive constant removed by a zero-mean constraint enforced with a Lagrange
multiplier.  Gradients and Hessians are recovered by least-squares quadratic
fits on node patches.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import DomainError, check_lambda, check_points
from .mesh import GAMMA, SIGMA, MixedBoundaryMesh


def _p1_gradients(mesh):
    """Constant gradients of the three hat functions on every triangle."""
    P = mesh.nodes[mesh.triangles]
    area = mesh.triangle_areas()
    # grad phi_k = rot90(opposite edge) / (2 area)
    e0 = P[:, 2] - P[:, 1]
    e1 = P[:, 0] - P[:, 2]
    e2 = P[:, 1] - P[:, 0]
    G = np.stack([e0, e1, e2], axis=1)
    G = np.stack([-G[..., 1], G[..., 0]], axis=-1) / (2 * area[:, None, None])
    return G, area


def stiffness_matrix(mesh):
    G, area = _p1_gradients(mesh)
    K_loc = np.einsum("tkd,tld->tkl", G, G) * area[:, None, None]
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((K_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(mesh):
    area = mesh.triangle_areas()
    M_loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    vals = (area[:, None, None] * M_loc[None]).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def lumped_mass(mesh):
    """Integral of every hat function."""
    area = mesh.triangle_areas()
    return np.bincount(mesh.triangles.ravel(), np.repeat(area / 3.0, 3), len(mesh.nodes))


def boundary_mass_matrix(mesh):
    B = mesh.boundary_edges
    L = mesh.boundary_lengths()
    M_loc = (np.ones((2, 2)) + np.eye(2)) / 6.0
    rows = np.repeat(B, 2, axis=1).ravel()
    cols = np.tile(B, (1, 2)).ravel()
    vals = (L[:, None, None] * M_loc[None]).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def compatibility_constant(mesh, lam):
    """c = (|SIGMA| - lam |GAMMA|) / |Omega| from the mesh geometry."""
    return (mesh.length_of(SIGMA) - lam * mesh.length_of(GAMMA)) / mesh.area


def _solve_constrained(K, b, m):
    n = K.shape[0]
    A = sp.bmat([[K, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]]).tocsc()
    rhs = np.append(b, 0.0)
    x = spsolve(A, rhs)
    if not np.all(np.isfinite(x)):
        raise RuntimeError("singular Neumann system could not be solved")
    u, mu = x[:n], x[n]
    res = float(np.linalg.norm(A @ x - rhs))
    return u, mu, res


@dataclass
class NeumannSolution:
    mesh: MixedBoundaryMesh
    u: np.ndarray
    c: float
    lam: float
    residual: float
    multiplier: float
    recovered_grad: np.ndarray = None
    hessian: np.ndarray = None
    element_grad: np.ndarray = None
    _extra: dict = field(default_factory=dict, repr=False)

    @property
    def mean(self):
        return float(lumped_mass(self.mesh) @ self.u / self.mesh.area)

    @property
    def energy(self):
        """|SIGMA| - lam |GAMMA|, the capillary energy of the mesh domain."""
        return self.mesh.length_of(SIGMA) - self.lam * self.mesh.length_of(GAMMA)

    def boundary_flux(self):
        """sum of the discrete normal fluxes, K u + c M 1, over all nodes.

        For the Galerkin solution this equals the assembled boundary load, so
        its total is the discrete divergence theorem."""
        K = stiffness_matrix(self.mesh)
        return K @ self.u + self.c * lumped_mass(self.mesh)

    def interpolate(self, X, chunk=256):
        """Piecewise-linear interpolant; NaN outside the mesh."""
        X = check_points(X, dim=2)
        P = self.mesh.nodes[self.mesh.triangles]
        T = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)
        Tinv = np.linalg.inv(T)
        out = np.full(len(X), np.nan)
        for a in range(0, len(X), chunk):
            Y = X[a : a + chunk]
            lam12 = np.einsum("tij,ptj->pti", Tinv, Y[:, None, :] - P[None, :, 0])
            bary = np.concatenate([1 - lam12.sum(-1, keepdims=True), lam12], axis=-1)
            score = bary.min(axis=-1)
            t = np.argmax(score, axis=1)
            ok = score[np.arange(len(Y)), t] >= -1e-12
            vals = np.einsum("pk,pk->p", bary[np.arange(len(Y)), t], self.u[self.mesh.triangles[t]])
            out[a : a + chunk] = np.where(ok, vals, np.nan)
        return out

    def to_dict(self):
        return {
            "u": self.u.tolist(),
            "c": self.c,
            "lambda": self.lam,
            "residual": self.residual,
            "recovered_grad": None if self.recovered_grad is None else self.recovered_grad.tolist(),
        }


def solve_neumann(mesh, lam, source=None, flux=None, recover=True):
    """Galerkin P1 solution with zero mean.

    By default the data are the capillary ones: Laplacian c from
    compatibility, flux 1 on SIGMA and -lam on GAMMA.  ``source(X)`` and
    ``flux(X, labels, normals)`` override them for manufactured solutions;
    then ``c`` is reported as the mean of the source and compatibility is
    the caller's responsibility.
    """
    lam = check_lambda(lam)
    if not isinstance(mesh, MixedBoundaryMesh):
        raise TypeError("mesh must be a MixedBoundaryMesh")
    if mesh.n_components() != 1:
        raise DomainError("domain must be connected; solve each component separately")
    K = stiffness_matrix(mesh)
    m = lumped_mass(mesh)
    B = mesh.boundary_edges
    L = mesh.boundary_lengths()
    n = len(mesh.nodes)
    if flux is None:
        g = np.where(mesh.labels == SIGMA, 1.0, -lam)
        bl = np.bincount(B.ravel(), np.repeat(0.5 * g * L, 2), n)
    else:
        # nodal interpolation per edge end, integrated exactly for P1
        P0, P1 = mesh.nodes[B[:, 0]], mesh.nodes[B[:, 1]]
        normals = mesh.boundary_normals()
        g0 = flux(P0, mesh.labels, normals)
        g1 = flux(P1, mesh.labels, normals)
        bl = np.bincount(B[:, 0], L * (2 * g0 + g1) / 6.0, n)
        bl += np.bincount(B[:, 1], L * (g0 + 2 * g1) / 6.0, n)
    if source is None:
        c = compatibility_constant(mesh, lam)
        load = bl - c * m
    else:
        f = source(mesh.nodes)
        load = bl - mass_matrix(mesh) @ f
        c = float(m @ f / mesh.area)
    u, mu, res = _solve_constrained(K, load, m)
    sol = NeumannSolution(mesh, u, c, lam, res, mu)
    sol.element_grad = element_gradients(mesh, u)
    if recover:
        sol.recovered_grad, sol.hessian = recover_derivatives(mesh, u)
    return sol


def element_gradients(mesh, u):
    G, _ = _p1_gradients(mesh)
    return np.einsum("tkd,tk->td", G, u[mesh.triangles])


def _patches(mesh, min_size=9):
    """Two-ring neighbourhoods, grown further where they are too small."""
    nb = mesh.node_neighbors()
    out = []
    for i in range(len(mesh.nodes)):
        ring = {i} | set(nb[i].tolist())
        for j in nb[i]:
            ring.update(nb[j].tolist())
        while len(ring) < min_size:
            grow = set()
            for j in ring:
                grow.update(nb[j].tolist())
            if grow <= ring:
                break
            ring |= grow
        out.append(np.array(sorted(ring)))
    return out


def recover_derivatives(mesh, u):
    """Gradient and Hessian at every node from a local quadratic fit.

    Around node i the values on its patch are fitted in the least-squares
    sense by u_i' + g . d + d^T H d / 2 with d = x - x_i (centred and scaled
    by the patch radius for conditioning).
    """
    X = mesh.nodes
    grads = np.zeros((len(X), 2))
    hess = np.zeros((len(X), 2, 2))
    for i, idx in enumerate(_patches(mesh)):
        d = X[idx] - X[i]
        s = max(np.abs(d).max(), 1e-300)
        d = d / s
        A = np.column_stack(
            [np.ones(len(d)), d[:, 0], d[:, 1], 0.5 * d[:, 0] ** 2, d[:, 0] * d[:, 1], 0.5 * d[:, 1] ** 2]
        )
        coef, *_ = np.linalg.lstsq(A, u[idx], rcond=None)
        grads[i] = coef[1:3] / s
        hess[i] = np.array([[coef[3], coef[4]], [coef[4], coef[5]]]) / s**2
    return grads, hess


class NeumannSolver(BaseEstimator):
    """Estimator wrapper: ``fit(mesh)`` solves, ``predict(X)`` interpolates u.

    Parameters
    ----------
    lam : float
        Contact parameter in (-1, 1).
    recover : bool
        Compute recovered gradients and Hessians after the solve.
    """

    def __init__(self, lam=0.0, recover=True):
        self.lam = lam
        self.recover = recover

    def fit(self, X, y=None):
        self.solution_ = solve_neumann(X, self.lam, recover=self.recover)
        self.c_ = self.solution_.c
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        return self.solution_.interpolate(X)
