"""Triangle meshes of planar polygons with free (sigma) and wetted (gamma) edges.

Boundary edges carry one of two labels: ``SIGMA`` for the free interface
outside the body and ``GAMMA`` for the part wetting the body.  Nodes where
the two labels meet form the contact set between them.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import Delaunay

from .._validation import DomainError, check_lambda, check_points
from ..geometry import BOUNDARY_TOL, ConvexBody

SIGMA = 0
GAMMA = 1
LABELS = {"sigma": SIGMA, "gamma": GAMMA}


def _edge_key(E):
    return np.sort(np.asarray(E, dtype=np.int64), axis=1)


@dataclass
class MixedBoundaryMesh:
    """Conforming triangulation with labelled boundary edges.

    ``triangles`` are counter-clockwise; ``boundary_edges`` are oriented so
    the domain lies to their left and ``labels`` holds SIGMA or GAMMA per
    boundary edge.  ``body`` (optional) is the convex set wetted by GAMMA.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    labels: np.ndarray
    body: ConvexBody = None
    h: float = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = check_points(self.nodes, dim=2, name="nodes")
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.labels) != len(self.boundary_edges):
            raise DomainError("one label per boundary edge is required")
        if self.h is None:
            self.h = float(self.edge_lengths().max())

    # geometry

    def edges(self):
        """Unique edges and the number of triangles sharing each."""
        if "edges" not in self._cache:
            T = self.triangles
            E = _edge_key(np.vstack([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]))
            self._cache["edges"] = np.unique(E, axis=0, return_counts=True)
        return self._cache["edges"]

    def edge_lengths(self):
        E, _ = self.edges()
        return np.linalg.norm(self.nodes[E[:, 1]] - self.nodes[E[:, 0]], axis=1)

    def triangle_areas(self):
        P = self.nodes[self.triangles]
        d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def triangle_diameters(self):
        P = self.nodes[self.triangles]
        return np.max(
            np.stack(
                [
                    np.linalg.norm(P[:, 1] - P[:, 0], axis=1),
                    np.linalg.norm(P[:, 2] - P[:, 1], axis=1),
                    np.linalg.norm(P[:, 0] - P[:, 2], axis=1),
                ]
            ),
            axis=0,
        )

    @property
    def area(self):
        return float(self.triangle_areas().sum())

    def boundary_lengths(self):
        B = self.boundary_edges
        return np.linalg.norm(self.nodes[B[:, 1]] - self.nodes[B[:, 0]], axis=1)

    def boundary_normals(self):
        """Outward unit normal of every boundary edge (domain on the left)."""
        B = self.boundary_edges
        d = self.nodes[B[:, 1]] - self.nodes[B[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def length_of(self, label):
        return float(self.boundary_lengths()[self.labels == label].sum())

    def boundary_nodes(self):
        return np.unique(self.boundary_edges)

    def interior_nodes(self):
        mask = np.ones(len(self.nodes), dtype=bool)
        mask[self.boundary_nodes()] = False
        return np.flatnonzero(mask)

    def gamma_nodes(self):
        """Nodes where a SIGMA edge meets a GAMMA edge."""
        B = self.boundary_edges
        s = np.unique(B[self.labels == SIGMA])
        g = np.unique(B[self.labels == GAMMA])
        return np.intersect1d(s, g)

    def node_label_sets(self):
        """For each boundary node the set of labels on incident edges."""
        out = {}
        for (a, b), lab in zip(self.boundary_edges, self.labels):
            out.setdefault(int(a), set()).add(int(lab))
            out.setdefault(int(b), set()).add(int(lab))
        return out

    def incident_boundary_edges(self):
        out = {}
        for k, (a, b) in enumerate(self.boundary_edges):
            out.setdefault(int(a), []).append(k)
            out.setdefault(int(b), []).append(k)
        return out

    def node_neighbors(self):
        """Adjacency lists from the triangle edges."""
        if "nbrs" not in self._cache:
            E, _ = self.edges()
            nb = [[] for _ in range(len(self.nodes))]
            for a, b in E:
                nb[a].append(b)
                nb[b].append(a)
            self._cache["nbrs"] = [np.array(sorted(x), dtype=np.int64) for x in nb]
        return self._cache["nbrs"]

    # validation

    def n_components(self):
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        E, _ = self.edges()
        n = len(self.nodes)
        A = coo_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(n, n))
        used = np.zeros(n, dtype=bool)
        used[self.triangles.ravel()] = True
        k, lab = connected_components(A, directed=False)
        return len(np.unique(lab[used]))

    def check(self, tol=BOUNDARY_TOL):
        """Verify conformity, the labelling and, if a body is set, placement."""
        if np.any(self.triangle_areas() <= 0):
            raise DomainError("triangles must be counter-clockwise and non-degenerate")
        E, counts = self.edges()
        if np.any(counts > 2):
            raise DomainError("an edge is shared by more than two triangles")
        bnd = {tuple(e) for e in E[counts == 1]}
        given = [tuple(e) for e in _edge_key(self.boundary_edges)]
        if len(set(given)) != len(given) or set(given) != bnd:
            raise DomainError("boundary edges must match the triangulation, each listed once")
        if not np.all(np.isin(self.labels, [SIGMA, GAMMA])):
            raise DomainError("labels must be SIGMA or GAMMA")
        if self.body is not None:
            B = self.boundary_edges
            P = self.nodes
            g = self.labels == GAMMA
            ends = np.vstack([P[B[g, 0]], P[B[g, 1]]])
            if len(ends) and np.max(np.abs(self.body.signed_distance(ends))) > tol:
                raise DomainError("GAMMA edges must lie on the boundary of the body")
            mids = 0.5 * (P[B[~g, 0]] + P[B[~g, 1]])
            if len(mids) and np.min(self.body.signed_distance(mids)) < -tol:
                raise DomainError("SIGMA edges must lie outside the body")
        return self

    # serialisation

    def to_dict(self):
        return {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_edges": self.boundary_edges.tolist(),
            "labels": ["gamma" if x == GAMMA else "sigma" for x in self.labels],
            "body": None if self.body is None else self.body.to_dict(),
            "h": self.h,
        }

    @classmethod
    def from_dict(cls, d):
        labels = [LABELS[x] if isinstance(x, str) else int(x) for x in d["labels"]]
        body = None if d.get("body") is None else ConvexBody.from_dict(d["body"])
        return cls(d["nodes"], d["triangles"], d["boundary_edges"], labels, body, d.get("h"))

    def scaled(self, s):
        """Mesh of s * Omega; the body is not rescaled and is dropped."""
        return MixedBoundaryMesh(
            self.nodes * s, self.triangles, self.boundary_edges, self.labels, None, self.h * s
        )


# -- generation ---------------------------------------------------------------


def _subdivide(loop, edge_labels, h):
    """Boundary nodes of a closed polygon with spacing at most h."""
    pts, labs = [], []
    k = len(loop)
    for a in range(k):
        p, q = loop[a], loop[(a + 1) % k]
        m = max(1, int(math.ceil(np.linalg.norm(q - p) / h - 1e-9)))
        t = np.arange(m)[:, None] / m
        pts.append(p + t * (q - p))
        labs += [edge_labels[a]] * m
    return np.vstack(pts), np.array(labs)


def _split_segments(pts, labs, mask):
    """Insert the midpoint of every boundary segment flagged in ``mask``."""
    out_p, out_l = [], []
    nb = len(pts)
    for a in range(nb):
        out_p.append(pts[a])
        out_l.append(labs[a])
        if mask[a]:
            out_p.append(0.5 * (pts[a] + pts[(a + 1) % nb]))
            out_l.append(labs[a])
    return np.array(out_p), np.array(out_l)


def _hex_lattice(bounds, h):
    x0, y0, x1, y1 = bounds
    dy = h * math.sqrt(3) / 2
    rows = []
    for j, y in enumerate(np.arange(y0, y1 + dy, dy)):
        xs = np.arange(x0 + (0.5 * h if j % 2 else 0.0), x1 + h, h)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    return np.vstack(rows)


def mesh_polygon(loop, edge_labels, h, body=None, min_boundary_distance=0.55):
    """Triangulate a simple polygon (counter-clockwise vertex loop).

    Boundary edges are split with spacing at most ``h``; the interior gets
    a hexagonal lattice of spacing ``h`` with points closer than
    ``min_boundary_distance * h`` to the boundary dropped.  The Delaunay
    triangulation of all points is restricted to triangles with centroid
    inside the polygon; the result is checked to be conforming with the
    polygon boundary.
    """
    loop = check_points(loop, dim=2, name="loop")
    labels = np.array([LABELS[x] if isinstance(x, str) else int(x) for x in edge_labels])
    if len(labels) != len(loop):
        raise DomainError("one label per polygon edge is required")
    poly = shapely.Polygon(loop)
    if not poly.is_valid or poly.area <= 0:
        raise DomainError("loop must be a simple counter-clockwise polygon")
    if not shapely.Polygon(loop).exterior.is_ccw:
        raise DomainError("loop must be counter-clockwise")
    bpts, blabs = _subdivide(loop, labels, h)
    lat = _hex_lattice(poly.bounds, h)
    inside = shapely.contains_xy(poly, lat[:, 0], lat[:, 1])
    lat = lat[inside]
    d = shapely.distance(poly.exterior, shapely.points(lat))
    lat = lat[d > min_boundary_distance * h]
    # far ghost points keep boundary nodes off the convex hull, where
    # collinear runs would otherwise give degenerate triangles
    x0, y0, x1, y1 = poly.bounds
    r = 10.0 * max(x1 - x0, y1 - y0)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    ghosts = np.array([[cx - r, cy - r], [cx + r, cy - r], [cx + r, cy + r], [cx - r, cy + r]])
    # split boundary segments missing from the Delaunay triangulation
    for _ in range(8):
        nodes = np.vstack([bpts, lat])
        tri = Delaunay(np.vstack([nodes, ghosts])).simplices
        tri = tri[np.all(tri < len(nodes), axis=1)]
        nb = len(bpts)
        have = {tuple(e) for e in _edge_key(tri[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2))}
        seg = _edge_key(np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb]))
        missing = np.array([tuple(e) not in have for e in seg])
        if not missing.any():
            break
        bpts, blabs = _split_segments(bpts, blabs, missing)
    cent = nodes[tri].mean(axis=1)
    tri = tri[shapely.contains_xy(poly, cent[:, 0], cent[:, 1])]
    P = nodes[tri]
    d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    nb = len(bpts)
    bedges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    mesh = MixedBoundaryMesh(nodes, tri, bedges, blabs, body, h)
    mesh.check()
    return mesh


def cap_polygon(lam, h):
    """Polygon circumscribed about the arc of the cap B^lam.

    The free edges are tangent to the unit circle, at equally spaced angles
    between arcsin(lam) and pi - arcsin(lam); the wetted edge is the chord
    on the line x_2 = lam.  On this polygon u = |x|^2 / 2 satisfies the
    Neumann data exactly (x . nu = 1 on tangent edges, -x_2 = -lam on the
    chord), with Laplacian 2.
    """
    lam = check_lambda(lam)
    a = math.asin(lam)
    m = max(2, int(math.ceil((math.pi - 2 * a) / h)))
    th = np.linspace(a, math.pi - a, m + 1)
    mid = 0.5 * (th[:-1] + th[1:])
    rad = 1.0 / np.cos(0.5 * (th[1] - th[0]))
    corners = rad * np.column_stack([np.cos(mid), np.sin(mid)])
    loop = np.vstack([[math.cos(a), lam], corners, [-math.cos(a), lam]])
    labels = [SIGMA] * (len(loop) - 1) + [GAMMA]
    return loop, labels


def cap_mesh(lam, h):
    """Mesh of :func:`cap_polygon` wetting the halfspace {x_2 <= lam}."""
    loop, labels = cap_polygon(lam, h)
    body = ConvexBody.halfspace([0.0, 1.0], lam)
    return mesh_polygon(loop, labels, h, body)


def square_mesh(h, side=1.0):
    """Square [0, side]^2 resting on {x_2 <= 0}; the bottom edge is wetted."""
    loop = side * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    body = ConvexBody.halfspace([0.0, 1.0], 0.0)
    return mesh_polygon(loop, [GAMMA, SIGMA, SIGMA, SIGMA], h, body)


def dumbbell_mesh(h, neck=0.3):
    """Two unit squares joined along the floor by a low channel of height
    ``neck``, wetting {x_2 <= 0} along the whole bottom edge."""
    if not 0 < neck < 1:
        raise DomainError("neck height must lie in (0, 1)")
    loop = np.array(
        [[0.0, 0.0], [3.0, 0.0], [3.0, 1.0], [2.0, 1.0], [2.0, neck], [1.0, neck], [1.0, 1.0], [0.0, 1.0]]
    )
    body = ConvexBody.halfspace([0.0, 1.0], 0.0)
    return mesh_polygon(loop, [GAMMA] + [SIGMA] * 7, h, body)
