"""Capillary energy of polytopal sets lying outside a convex body.

A test set E is stored by its boundary: edges (N=2) or triangles (N=3),
oriented so that the divergence theorem gives a positive volume.  Each
boundary facet is either wetted (it lies in the boundary of C) or free.  The
energy is

    J(E) = |free boundary| - lam |wetted boundary|,

and it is compared with the energy N |B^lam|^(1/N) m^((N-1)/N) of the
optimal cap of the same volume m.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, check_dimension, check_lambda, check_points
from .geometry import BOUNDARY_TOL, ConvexBody, cap_volume
from .maingeo import InequalityReport, fingerprint
from .measures import MeasureEstimate

EQUALITY_TOL = 1e-3


class ClassificationError(ValueError):
    """A boundary facet is neither contained in the boundary of C nor outside C."""


@dataclass
class PolytopalSet:
    """Boundary representation of a set of finite perimeter.

    ``faces`` holds vertex index pairs (N=2) or triples (N=3).  ``wetted``
    marks facets on the boundary of the body; it is filled in by
    :meth:`classify` when omitted.
    """

    vertices: np.ndarray
    faces: np.ndarray
    wetted: np.ndarray = None

    def __post_init__(self):
        self.vertices = check_points(self.vertices, name="vertices")
        N = self.vertices.shape[1]
        if N not in (2, 3):
            raise DomainError("polytopal sets are supported in dimensions 2 and 3")
        self.faces = np.asarray(self.faces, dtype=int).reshape(-1, N)
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise DomainError("face indices out of range")
        if self.wetted is not None:
            self.wetted = np.asarray(self.wetted, dtype=bool).reshape(-1)
            if len(self.wetted) != len(self.faces):
                raise DomainError("one wetted tag per face is required")
        # closed boundary: every (N-2)-face is shared by exactly two facets
        if N == 2:
            counts = np.bincount(self.faces.ravel(), minlength=len(self.vertices))
            used = counts > 0
            if not np.all(counts[used] == 2):
                raise DomainError("boundary is not a closed curve")
            heads = np.bincount(self.faces[:, 0], minlength=len(self.vertices))
            if not np.all(heads[used] == 1):
                raise DomainError("boundary edges are not consistently oriented")
        else:
            e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
            _, counts = np.unique(e, axis=0, return_counts=True)
            if not np.all(counts == 2):
                raise DomainError("boundary surface is not closed")
        if not self.volume > 0:
            raise DomainError("set must have positive volume (check orientation)")

    @property
    def dim(self):
        return self.vertices.shape[1]

    @classmethod
    def from_loops(cls, loops, wetted=None):
        """Planar set bounded by counter-clockwise vertex loops.

        ``wetted`` gives, per loop, one flag per edge (edge j joins vertex j
        to vertex j + 1).
        """
        verts, faces, tags = [], [], []
        base = 0
        for li, loop in enumerate(loops):
            loop = np.asarray(loop, dtype=float)
            k = len(loop)
            verts.append(loop)
            idx = base + np.arange(k)
            faces.append(np.column_stack([idx, np.roll(idx, -1)]))
            if wetted is not None:
                tags.append(np.asarray(wetted[li], dtype=bool))
            base += k
        return cls(
            np.vstack(verts), np.vstack(faces), None if wetted is None else np.concatenate(tags)
        )

    def facet_points(self):
        return self.vertices[self.faces]

    def facet_measures(self):
        P = self.facet_points()
        if self.dim == 2:
            return np.linalg.norm(P[:, 1] - P[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)

    @property
    def volume(self):
        """Volume by the divergence theorem applied to x / N."""
        P = self.vertices[self.faces]
        if self.dim == 2:
            return 0.5 * float(np.sum(P[:, 0, 0] * P[:, 1, 1] - P[:, 1, 0] * P[:, 0, 1]))
        return float(np.sum(np.linalg.det(P)) / 6.0)

    def classify(self, body, tol=BOUNDARY_TOL):
        """Wetted flag per facet, determined geometrically.

        A facet is wetted when all its vertices lie on one face of a
        polyhedral body (hence the whole facet does, by convexity of the
        face); it is free when its centroid is strictly outside the body.
        Anything else touches the body partially or enters it.
        """
        if body.dim != self.dim:
            raise DomainError("body and set dimensions differ")
        sd_v = body.signed_distance(self.vertices)
        if np.any(sd_v < -tol):
            raise ClassificationError("a vertex lies inside the body")
        P = self.facet_points()
        cent = P.mean(axis=1)
        sd_c = body.signed_distance(cent)
        out = np.zeros(len(self.faces), dtype=bool)
        for f, face in enumerate(self.faces):
            on = np.abs(sd_v[face]) <= tol
            if on.all() and abs(sd_c[f]) <= tol and self._in_common_face(body, face, tol):
                out[f] = True
            elif not sd_c[f] > tol:
                raise ClassificationError(f"facet {f} is neither on the boundary nor outside")
        return out

    def _in_common_face(self, body, face, tol):
        if body.kind == "ball":
            return False
        V = self.vertices[face]
        slack = np.abs(V @ body.normals.T - body.offsets)
        return bool(np.any(np.all(slack <= tol, axis=0)))

    def validated(self, body, tol=BOUNDARY_TOL):
        """Copy with geometric wetted tags; stored tags must agree."""
        tags = self.classify(body, tol)
        if self.wetted is not None and not np.array_equal(tags, self.wetted):
            bad = int(np.flatnonzero(tags != self.wetted)[0])
            raise ClassificationError(f"stored wetted tag of facet {bad} is wrong")
        return PolytopalSet(self.vertices, self.faces, tags)

    def transformed(self, scale=1.0, shift=None):
        shift = np.zeros(self.dim) if shift is None else np.asarray(shift, dtype=float)
        return PolytopalSet(self.vertices * scale + shift, self.faces, self.wetted)

    def to_dict(self):
        return {
            "vertices": self.vertices.tolist(),
            "faces": self.faces.tolist(),
            "wetted_tags": None if self.wetted is None else self.wetted.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["vertices"], d["faces"], d.get("wetted_tags"))


@dataclass(frozen=True)
class EnergyBreakdown:
    free_perimeter: float
    wetted_area: float
    lam: float
    volume: float

    @property
    def energy(self):
        return self.free_perimeter - self.lam * self.wetted_area

    def to_dict(self):
        return {
            "free_perimeter": self.free_perimeter,
            "wetted_area": self.wetted_area,
            "lambda": self.lam,
            "energy": self.energy,
            "volume": self.volume,
        }


def capillary_energy(E, body, lam):
    """Free perimeter, wetted area, energy and volume of ``E`` outside ``body``."""
    lam = check_lambda(lam)
    tags = E.classify(body)
    if E.wetted is not None and not np.array_equal(tags, E.wetted):
        raise ClassificationError("stored wetted tags disagree with the geometry")
    areas = E.facet_measures()
    return EnergyBreakdown(
        float(areas[~tags].sum()), float(areas[tags].sum()), lam, E.volume
    )


def reference_energy(m, lam, N=2):
    """Energy N |B^lam|^(1/N) m^((N-1)/N) of the optimal cap of volume m."""
    if not m > 0:
        raise DomainError("volume must be positive")
    N = check_dimension(N)
    return N * cap_volume(lam, N=N) ** (1.0 / N) * m ** ((N - 1.0) / N)


def rigidity_probe(E, tags, tol=1e-9):
    """Flatness of the wetted part and sphericity of the free part.

    The wetted vertices must span a single hyperplane; the free vertices
    not on the wetted part are fitted by a sphere in the least-squares sense
    (|x|^2 = 2 c . x + k) and the largest relative radial deviation is
    reported.
    """
    wet_v = np.unique(E.faces[tags])
    free_v = np.setdiff1d(np.unique(E.faces[~tags]), wet_v)
    if len(wet_v) >= E.dim:
        W = E.vertices[wet_v]
        sv = np.linalg.svd(W - W.mean(axis=0), compute_uv=False)
        flatness = float(sv[-1]) if len(sv) >= E.dim else 0.0
    else:
        flatness = 0.0 if len(wet_v) else math.inf
    X = E.vertices[free_v] if len(free_v) > E.dim else E.vertices[np.unique(E.faces[~tags])]
    A = np.column_stack([2 * X, np.ones(len(X))])
    sol, *_ = np.linalg.lstsq(A, np.sum(X * X, axis=1), rcond=None)
    c = sol[:-1]
    R = math.sqrt(max(sol[-1] + c @ c, 0.0))
    dev = float(np.max(np.abs(np.linalg.norm(X - c, axis=1) - R)) / R) if R > 0 else math.inf
    return {
        "flatness": flatness,
        "sphericity": dev,
        "center": c.tolist(),
        "radius": R,
        "rigid": bool(flatness <= tol and dev <= 1e-6),
    }


def verify_theorem1(E, body, lam, equality_tol=EQUALITY_TOL):
    """Compare J(E) with the optimal cap energy at the same volume.

    When the margin is below ``equality_tol`` times the energy the set is
    flagged as near-equality and the rigidity probe records whether it looks
    like a cap on a flat face.  The probe is descriptive; ``passed`` depends
    on the margin only.
    """
    br = capillary_energy(E, body, lam)
    rhs = reference_energy(br.volume, lam, E.dim)
    lhs = MeasureEstimate(br.energy, method="exact")
    scen = fingerprint({"set": E.to_dict(), "body": body.to_dict(), "lambda": lam})
    rep = InequalityReport(lhs, rhs, lam, "ge", "energy", scen)
    rep.details["breakdown"] = br.to_dict()
    rel = rep.margin / br.energy if br.energy > 0 else math.inf
    rep.details["relative_margin"] = rel
    near = bool(rep.margin < equality_tol * abs(br.energy))
    rep.details["near_equality"] = near
    if near:
        tags = E.classify(body)
        rep.details["rigidity"] = rigidity_probe(E, tags)
    return rep


# -- generators ---------------------------------------------------------------


def _face_frame_2d(normal):
    n = np.asarray(normal, dtype=float)
    return np.array([n[1], -n[0]])


def polygonal_cap(lam, k, body=None, center=None):
    """Inscribed polygon of the unit cap B^lam sitting on a planar face.

    The cap is the part of the unit disk above its chord at height lam; it is
    placed on the line {n . x = b} of ``body`` (default: the halfspace
    {x_2 <= 0}) with the chord centred at ``center``.  The arc carries ``k``
    vertices including both chord end points, so the set has k edges.
    """
    lam = check_lambda(lam)
    if k < 3:
        raise DomainError("need at least three arc vertices")
    body = ConvexBody.halfspace([0.0, 1.0], 0.0) if body is None else body
    n = body.normals[0]
    b = body.offsets[0]
    t = _face_frame_2d(n)  # tangent with (t, n) positively oriented
    o = b * n if center is None else np.asarray(center, dtype=float)
    alpha = math.asin(lam)
    phi = np.linspace(alpha, math.pi - alpha, k)
    # local coordinates: disk centre at height -lam below the chord
    loc = np.column_stack([np.cos(phi), np.sin(phi) - lam])
    loc[0, 1] = loc[-1, 1] = 0.0
    pts = o + loc[:, :1] * t + loc[:, 1:] * n
    tags = np.zeros(k, dtype=bool)
    tags[-1] = True  # closing edge runs along the chord
    return PolytopalSet.from_loops([pts], [tags])


def wedge_droplet(lam, k, opening_angle=math.pi / 2, radius=1.0):
    """Disk of given radius wetting both faces of a 2D wedge at Young's angle.

    The wedge is ``ConvexBody.wedge(opening_angle)`` with ridge at the
    origin; the disk centre sits on the symmetry axis at signed distance
    -lam * radius from each face, so the free arc meets each face at the
    contact angle arccos(lam).  Returns (set, body).
    """
    lam = check_lambda(lam)
    body = ConvexBody.wedge(opening_angle)
    h = opening_angle / 2
    if not abs(lam) < math.sin(h):
        raise DomainError("droplet does not contain the ridge for this lambda")
    c = np.array([0.0, -lam * radius / math.sin(h)])
    n1, n2 = body.normals
    t1 = np.array([math.sin(h), -math.cos(h)])
    t2 = np.array([-math.sin(h), -math.cos(h)])

    def far_root(t):
        # |s t - c| = R with the larger s
        bq = -2 * (t @ c)
        cq = c @ c - radius**2
        return (-bq + math.sqrt(bq * bq - 4 * cq)) / 2

    q1 = far_root(t1) * t1
    q2 = far_root(t2) * t2
    a1 = math.atan2(q1[1] - c[1], q1[0] - c[0])
    a2 = math.atan2(q2[1] - c[1], q2[0] - c[0])
    if a2 < a1:
        a2 += 2 * math.pi
    phi = np.linspace(a1, a2, k)
    arc = c + radius * np.column_stack([np.cos(phi), np.sin(phi)])
    arc[0], arc[-1] = q1, q2
    pts = np.vstack([arc, [[0.0, 0.0]]])
    tags = np.zeros(k + 1, dtype=bool)
    tags[-2:] = True
    return PolytopalSet.from_loops([pts], [tags]), body


def disjoint_caps(lam, k, gap=1.0, scales=(1.0, 0.7)):
    """Two polygonal caps side by side on the halfspace {x_2 <= 0}."""
    loops, tags = [], []
    x = 0.0
    r = math.sqrt(1 - lam * lam)
    for s in scales:
        cap = polygonal_cap(lam, k)
        pts = cap.vertices * s + np.array([x + s * r, 0.0])
        loops.append(pts)
        tags.append(cap.wetted)
        x += 2 * s * r + gap
    return PolytopalSet.from_loops(loops, tags)


def random_star_set(body, rng, k=24, face=None, amplitude=0.3):
    """Random star-shaped polygon resting on one face of a 2D polytope.

    The set is {o + rho(theta) u(theta)} over the half-plane outside the
    face, with o a random point of the face and rho a random trigonometric
    polynomial; the two end radii are clipped so the wetted segment stays
    inside the face.
    """
    if body.dim != 2 or body.kind == "ball":
        raise DomainError("random star sets need a planar polyhedral body")
    faces = _finite_faces(body)
    face = faces[int(rng.integers(len(faces)))] if face is None else face
    n = body.normals[face]
    t = _face_frame_2d(n)
    lo, hi = _face_extent(body, face)
    s0 = rng.uniform(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo))
    base = body.offsets[face] * n
    o = base + s0 * t
    theta = np.linspace(0.0, math.pi, k)
    coef = rng.uniform(-amplitude, amplitude, 4)
    rho = 1.0 + sum(c * np.sin((j + 1) * theta + j) for j, c in enumerate(coef))
    rho *= rng.uniform(0.3, 1.0) * min(hi - s0, s0 - lo)
    rho[0] = min(rho[0], hi - s0)
    rho[-1] = min(rho[-1], s0 - lo)
    pts = o + rho[:, None] * (np.cos(theta)[:, None] * t + np.sin(theta)[:, None] * n)
    tags = np.zeros(k, dtype=bool)
    tags[-1] = True
    return PolytopalSet.from_loops([pts], [tags])


def _face_extent(body, face):
    """Range of the tangent coordinate along a face of a planar polytope."""
    n = body.normals[face]
    t = _face_frame_2d(n)
    base = body.offsets[face] * n
    lo, hi = -math.inf, math.inf
    for j, (m, b) in enumerate(zip(body.normals, body.offsets)):
        if j == face:
            continue
        a = m @ t
        c = b - m @ base
        if abs(a) < 1e-14:
            continue
        if a > 0:
            hi = min(hi, c / a)
        else:
            lo = max(lo, c / a)
    return lo, hi


def _finite_faces(body):
    return [k for k in range(body.n_faces) if np.all(np.isfinite(_face_extent(body, k)))]


def polyhedral_cap(lam, rings=8, segments=32):
    """Triangulated cap B^lam in R^3 resting on {x_3 = 0}.

    The curved part is sampled on ``rings`` circles of latitude plus the
    top vertex; the flat disk is a fan from its centre.  Normals point out.
    """
    lam = check_lambda(lam)
    r = math.sqrt(1 - lam * lam)
    alpha = math.acos(lam)  # polar angle of the rim
    verts = [[0.0, 0.0, 1.0 - lam], [0.0, 0.0, 0.0]]
    polar = np.linspace(0.0, alpha, rings + 1)[1:]
    az = np.linspace(0.0, 2 * math.pi, segments, endpoint=False)
    for p in polar:
        for a in az:
            verts.append([math.sin(p) * math.cos(a), math.sin(p) * math.sin(a), math.cos(p) - lam])
    verts = np.array(verts)
    verts[-segments:, 2] = 0.0
    verts[-segments:, :2] *= r / np.linalg.norm(verts[-segments:, :2], axis=1)[:, None]

    def ring(i, j):
        return 2 + i * segments + j % segments

    faces, tags = [], []
    for j in range(segments):
        faces.append([0, ring(0, j), ring(0, j + 1)])
        tags.append(False)
    for i in range(rings - 1):
        for j in range(segments):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces += [[a, c, d], [a, d, b]]
            tags += [False, False]
    for j in range(segments):
        faces.append([1, ring(rings - 1, j + 1), ring(rings - 1, j)])
        tags.append(True)
    return PolytopalSet(verts, faces, tags)
