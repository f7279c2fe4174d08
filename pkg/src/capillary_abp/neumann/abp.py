"""The ABP chain on a discrete Neumann solution.

With Omega-hat the set of points where the tangent plane of u supports the
whole graph and |grad u| < 1, the continuum argument reads

    |B^lam| <= |grad u(Omega-hat)| <= int det D^2u <= int (Lap u / N)^N
            = (c / N)^N |Omega-hat| <= (c / N)^N |Omega|,

with c |Omega| the capillary energy of Omega.  Every link is evaluated on
the mesh with an explicit slack proportional to h.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import ConvexHull, Delaunay, QhullError, cKDTree

from .._validation import DomainError, check_lambda
from ..capillary import reference_energy
from ..geometry import cap_volume
from ..measures import Budget, MeasureEstimate, sample_blocks
from ..subdiff import DiscreteBoundaryFunction, SubdifferentialPartition
from .fem import NeumannSolution
from .mesh import GAMMA, SIGMA

CONTACT_SLACK = 4.0
INCLUSION_CONST = 10.0
VISCOSITY_CONST = 4.0
CHAIN_CONST = 4.0
DISK_SEGMENTS = 32


def _check_solution(sol):
    if not isinstance(sol, NeumannSolution) or sol.recovered_grad is None:
        raise DomainError("a solved NeumannSolution with recovered gradients is required")


def _candidates(sol):
    inner = sol.mesh.interior_nodes()
    g = sol.recovered_grad[inner]
    return inner[np.einsum("ij,ij->i", g, g) < 1.0]


def contact_set(sol, slack_const=CONTACT_SLACK, method="hull", chunk=512):
    """Interior nodes whose recovered tangent plane supports all nodal values.

    Node i qualifies when |g_i| < 1 and
    u_j - u_i >= g_i . (x_j - x_i) - slack_const h^2 for every node j.
    ``method='brute'`` evaluates the definition against every node;
    ``'hull'`` only against the vertices of the lower convex hull of the
    lifted points (x_j, u_j), which contain the minimiser of
    u_j - g . x_j for every g.
    """
    _check_solution(sol)
    X, u = sol.mesh.nodes, sol.u
    slack = slack_const * sol.mesh.h**2
    cand = _candidates(sol)
    if method == "brute":
        ref = np.arange(len(X))
    elif method == "hull":
        ref = _lower_hull_vertices(X, u)
    else:
        raise ValueError("method must be 'hull' or 'brute'")
    keep = np.zeros(len(cand), dtype=bool)
    Xr, ur = X[ref], u[ref]
    for a in range(0, len(cand), chunk):
        idx = cand[a : a + chunk]
        g = sol.recovered_grad[idx]
        lhs = ur[None, :] - g @ Xr.T
        rhs = u[idx] - np.einsum("ij,ij->i", g, X[idx])
        keep[a : a + chunk] = lhs.min(axis=1) >= rhs - slack
    return np.sort(cand[keep])


def _lower_hull_vertices(X, u):
    pts = np.column_stack([X, u])
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return np.arange(len(X))
    lower = hull.equations[:, 2] < 0
    return np.unique(hull.simplices[lower])


def contact_triangles(sol, contact):
    mask = np.zeros(len(sol.mesh.nodes), dtype=bool)
    mask[contact] = True
    return np.flatnonzero(mask[sol.mesh.triangles].all(axis=1))


@dataclass
class GradientImage:
    lower: float
    upper: float
    n_triangles: int
    warning: bool = False

    def to_dict(self):
        return dict(self.__dict__)

    def as_estimate(self):
        mid = 0.5 * (self.lower + self.upper)
        return MeasureEstimate(mid, 0.5 * (self.upper - self.lower), method="exact")


def gradient_image_measure(sol, contact, hessian_bound=None):
    """Bracket for the area of the gradient image of the contact set.

    Upper: area of the union of disks around the element gradients of
    triangles with all vertices in contact, radius h_T times the largest
    recovered Hessian norm at the vertices (polygonal disks are
    circumscribed, so the union is an outer estimate).  Lower: area of the
    Delaunay triangles of those gradients whose circumradius is below the
    smallest disk radius at their corners; each such triangle lies in the
    union of its corner disks, so lower <= upper.
    """
    _check_solution(sol)
    tris = contact_triangles(sol, contact)
    if len(tris) == 0:
        warnings.warn("empty contact set", RuntimeWarning)
        return GradientImage(0.0, 0.0, 0, True)
    G = sol.element_grad[tris]
    Hn = np.linalg.norm(sol.hessian, ord=2, axis=(1, 2))
    bound = Hn[sol.mesh.triangles[tris]].max(axis=1) if hessian_bound is None else hessian_bound
    rho = sol.mesh.triangle_diameters()[tris] * bound
    rho = np.maximum(rho, 1e-12)
    scale = 1.0 / math.cos(math.pi / DISK_SEGMENTS)
    disks = shapely.buffer(shapely.points(G), rho * scale, quad_segs=DISK_SEGMENTS // 4)
    upper = float(shapely.union_all(disks).area)
    lower = 0.0
    if len(G) >= 3:
        try:
            dt = Delaunay(G)
        except QhullError:
            dt = None
        if dt is not None:
            P = G[dt.simplices]
            a = np.linalg.norm(P[:, 1] - P[:, 2], axis=1)
            b = np.linalg.norm(P[:, 0] - P[:, 2], axis=1)
            c = np.linalg.norm(P[:, 0] - P[:, 1], axis=1)
            d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
            area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            R = a * b * c / np.maximum(4 * area, 1e-300)
            ok = R < rho[dt.simplices].min(axis=1)
            lower = float(area[ok].sum())
    return GradientImage(min(lower, upper), upper, len(tris))


@dataclass
class InclusionReport:
    delta_max: float
    h: float
    samples: int
    const: float = INCLUSION_CONST

    @property
    def passed(self):
        return self.samples == 0 or self.delta_max <= self.const * self.h

    def to_dict(self):
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def boundary_function_on_gamma(sol):
    """Restriction of u to the wetted nodes, with the body's normals."""
    mesh = sol.mesh
    if mesh.body is None:
        raise DomainError("the mesh needs its body to supply normals on GAMMA")
    idx = np.unique(mesh.boundary_edges[mesh.labels == GAMMA])
    if len(idx) == 0:
        raise DomainError("mesh has no wetted edges")
    X = mesh.nodes[idx]
    normals = np.array([mesh.body.outward_normal(x, face=_face(mesh.body, x)) for x in X])
    return DiscreteBoundaryFunction(X, sol.u[idx], normals, body=mesh.body)


def _face(body, x):
    if body.kind == "ball":
        return None
    return body.active_faces(x)[0]


def check_subdiff_inclusion(sol, lam=None, budget=None, contact=None, const=INCLUSION_CONST):
    """Distance from the restricted subdifferential of u on GAMMA to the
    gradients of the contact triangles.

    Points of B^lam for the wetted restriction are sampled uniformly; each
    is matched with the nearest element gradient of a contact triangle.
    """
    _check_solution(sol)
    lam = sol.lam if lam is None else check_lambda(lam)
    budget = budget or Budget(samples=20_000)
    f = boundary_function_on_gamma(sol)
    part = SubdifferentialPartition().fit(f)
    contact = contact_set(sol) if contact is None else contact
    tris = contact_triangles(sol, contact)
    if len(tris) == 0:
        raise DomainError("empty contact set")
    tree = cKDTree(sol.element_grad[tris])
    dmax = 0.0
    n = 0
    for X in sample_blocks(budget, 2, "ball"):
        idx = part.predict(X)
        sel = np.einsum("ij,ij->i", X, part.normals_[idx]) > lam
        if sel.any():
            d, _ = tree.query(X[sel])
            dmax = max(dmax, float(d.max()))
            n += int(sel.sum())
    return InclusionReport(dmax, sol.mesh.h, n, const)


@dataclass
class ViscosityReport:
    sigma_error: float
    gamma_error: float
    corner_min: float
    tol: float
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def check_viscosity_conditions(sol, lam=None, const=VISCOSITY_CONST, corner_angle=math.pi / 8, exclude=3.0):
    """Boundary conditions read off the recovered gradients.

    At a boundary node every incident edge gives a one-sided normal
    derivative g . nu_edge, to be compared with 1 on SIGMA and -lam on
    GAMMA within ``const * h``.  At nodes where the labels meet the
    supersolution condition max(d_sigma u - 1, d_gamma u + lam) >= -const h
    is checked instead.  Nodes within ``exclude * h`` of a corner with
    turning angle above ``corner_angle`` (other than the label junctions)
    are skipped: the solution is singular there.
    """
    _check_solution(sol)
    lam = sol.lam if lam is None else check_lambda(lam)
    mesh = sol.mesh
    tol = const * mesh.h
    normals = mesh.boundary_normals()
    inc = mesh.incident_boundary_edges()
    junction = set(mesh.gamma_nodes().tolist())
    corners = []
    for i, ks in inc.items():
        if len(ks) == 2 and i not in junction:
            n1, n2 = normals[ks[0]], normals[ks[1]]
            if math.acos(np.clip(n1 @ n2, -1, 1)) > corner_angle:
                corners.append(i)
    far = np.ones(len(mesh.nodes), dtype=bool)
    if corners:
        d, _ = cKDTree(mesh.nodes[corners]).query(mesh.nodes)
        far = d > exclude * mesh.h
    data = np.where(mesh.labels == SIGMA, 1.0, -lam)
    s_err = g_err = 0.0
    cmin = math.inf
    viol = []
    g = sol.recovered_grad
    for i, ks in inc.items():
        if i in junction:
            ds = max(g[i] @ normals[k] - 1.0 for k in ks if mesh.labels[k] == SIGMA)
            dg = max(g[i] @ normals[k] + lam for k in ks if mesh.labels[k] == GAMMA)
            val = max(ds, dg)
            cmin = min(cmin, val)
            if val < -tol:
                viol.append({"node": int(i), "kind": "junction", "value": float(val)})
            continue
        if not far[i]:
            continue
        for k in ks:
            err = abs(g[i] @ normals[k] - data[k])
            if mesh.labels[k] == SIGMA:
                s_err = max(s_err, err)
            else:
                g_err = max(g_err, err)
            if err > tol:
                viol.append({"node": int(i), "edge": int(k), "error": float(err)})
    return ViscosityReport(s_err, g_err, cmin if cmin < math.inf else 0.0, tol, viol)


@dataclass
class ChainLink:
    name: str
    lhs: float
    rhs: float
    slack: float

    @property
    def gap(self):
        """lhs - rhs; the link asserts gap <= slack."""
        return self.lhs - self.rhs

    @property
    def passed(self):
        return self.gap <= self.slack

    def to_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "gap": self.gap,
            "pass": self.passed,
        }


@dataclass
class ChainRecord:
    lam: float
    h: float
    area: float
    contact_area: float
    cap: float
    image: GradientImage
    int_det: float
    int_trace: float
    int_c: float
    final: float
    energy: float
    reference: float
    links: list

    @property
    def passed(self):
        return all(link.passed for link in self.links)

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k not in ("links", "image")}
        d["image"] = self.image.to_dict()
        d["links"] = [link.to_dict() for link in self.links]
        d["pass"] = self.passed
        return d


def abp_chain_report(sol, lam=None, contact=None, const=CHAIN_CONST):
    """Evaluate every link of the chain on a solved mesh.

    Integrals over the contact set use the triangles with all three vertices
    in contact and the vertex average of the recovered Hessians.  The chain
    is invariant under scaling of Omega (the gradient image is unchanged and
    both sides of the final inequality scale alike), so no normalisation of
    |Omega| is needed.  Link slacks are ``const * h`` times the cap volume.
    """
    _check_solution(sol)
    lam = sol.lam if lam is None else check_lambda(lam)
    mesh = sol.mesh
    N = 2
    contact = contact_set(sol) if contact is None else contact
    tris = contact_triangles(sol, contact)
    area_T = mesh.triangle_areas()[tris]
    H = sol.hessian[mesh.triangles[tris]].mean(axis=1)
    det = np.linalg.det(H)
    tr = np.trace(H, axis1=1, axis2=2)
    chat = float(area_T.sum())
    cap = cap_volume(lam, N=N)
    image = gradient_image_measure(sol, contact)
    int_det = float(np.sum(area_T * det))
    int_trace = float(np.sum(area_T * (tr / N) ** N))
    int_c = (sol.c / N) ** N * chat
    final = (sol.c / N) ** N * mesh.area
    energy = sol.energy
    ref = reference_energy(mesh.area, lam, N)
    slack = const * mesh.h * cap
    links = [
        ChainLink("cap <= image", cap, image.upper, slack),
        ChainLink("image <= int det", image.lower, int_det, slack),
        ChainLink("int det <= int (tr/N)^N", int_det, int_trace, 1e-12),
        ChainLink("int (tr/N)^N <= (c/N)^N |contact|", int_trace, int_c, slack),
        ChainLink("(c/N)^N |contact| <= (c/N)^N |Omega|", int_c, final, 1e-12),
        ChainLink("cap <= (J/(N|Omega|))^N |Omega|", cap, final, 1e-12),
        ChainLink("reference energy <= J", ref, energy, 1e-12),
    ]
    return ChainRecord(
        lam, mesh.h, mesh.area, chat, cap, image, int_det, int_trace, int_c, final, energy, ref, links
    )


def flux_balance(sol):
    """Total boundary load minus c |Omega|; zero for compatible data."""
    mesh = sol.mesh
    g = np.where(mesh.labels == SIGMA, 1.0, -sol.lam)
    return float(np.sum(g * mesh.boundary_lengths()) - sol.c * mesh.area)


def discrete_flux_residual(sol):
    """sum_i (K u)_i + c |Omega| minus the boundary load, i.e. the discrete
    divergence theorem; zero up to the solver residual."""
    mesh = sol.mesh
    total = float(np.sum(sol.boundary_flux()))
    g = np.where(mesh.labels == SIGMA, 1.0, -sol.lam)
    return total - float(np.sum(g * mesh.boundary_lengths()))
