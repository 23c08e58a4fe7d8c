"""Delzant polygons: validation, exact moment integration over the interior and the
weighted boundary measure, and half-plane clipping with boundary bookkeeping.

Facet i joins vertex i to vertex i+1 and carries a primitive integer inward normal
n_i with offset c_i, so l_i(x) = <x, n_i> - c_i vanishes on the facet and is
positive inside.  The boundary measure weights Euclidean arclength by 1/|n_i|.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import legendre

from .errors import ToricFlowError
from .poly2 import Polynomial2D

GEOM_TOL = 1e-9  # geometric predicates, applied on unit-bounding-box rescaled data

_gauss_cache = {}


def _gauss01(n):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    if n not in _gauss_cache:
        x, w = legendre.leggauss(n)
        _gauss_cache[n] = ((x + 1.0) / 2.0, w / 2.0)
    return _gauss_cache[n]


def _rationalize(value):
    return Fraction(float(value)).limit_denominator(10**12)


def _primitive_inward_normal(dx, dy):
    """Primitive integer normal obtained by rotating the CCW edge direction by +90 deg."""
    fx, fy = _rationalize(dx), _rationalize(dy)
    nx, ny = -fy, fx
    den = math.lcm(nx.denominator, ny.denominator)
    a, b = int(nx * den), int(ny * den)
    g = math.gcd(abs(a), abs(b))
    if g == 0:
        raise ToricFlowError("degenerate edge with zero direction")
    return (a // g, b // g)


@dataclass(frozen=True)
class Facet:
    normal: tuple  # primitive integer inward normal
    offset: float  # l(x) = <x, normal> - offset

    @property
    def weight(self):
        """dsigma weight: Lebesgue arclength divided by the Euclidean normal length."""
        return 1.0 / math.hypot(*self.normal)


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


class DelzantPolygon:
    """Convex lattice polygon with counterclockwise vertices and per-facet data.

    Construction is lenient (it only needs well-defined edges); `validate` checks
    the full Delzant conditions and reports every violation.
    """

    def __init__(self, vertices, normals=None, offsets=None):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ToricFlowError("polygon needs at least 3 two-dimensional vertices")
        self.vertices = verts
        n = verts.shape[0]
        facets = []
        for i in range(n):
            p, q = verts[i], verts[(i + 1) % n]
            if normals is not None:
                nv = (int(normals[i][0]), int(normals[i][1]))
            else:
                d = q - p
                nv = _primitive_inward_normal(d[0], d[1])
            if offsets is not None:
                c = float(offsets[i])
            else:
                c = float(nv[0] * p[0] + nv[1] * p[1])
            facets.append(Facet(nv, c))
        self.facets = facets
        self._normal_matrix = np.array([f.normal for f in facets], dtype=float)
        self._offsets = np.array([f.offset for f in facets])

    # -- basic geometry -------------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def scale(self):
        lo, hi = self.bounding_box
        return float(np.hypot(*(hi - lo)))

    @property
    def area(self):
        return self.interior_moment(Polynomial2D.constant(1.0))

    @property
    def centroid(self):
        a = self.area
        cx = self.interior_moment(Polynomial2D.affine(0.0, 1.0, 0.0)) / a
        cy = self.interior_moment(Polynomial2D.affine(0.0, 0.0, 1.0)) / a
        return np.array([cx, cy])

    def l_values(self, points):
        """l_i at given points, shape (N, n_facets)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self._normal_matrix.T - self._offsets

    def contains(self, points, margin=0.0):
        return np.all(self.l_values(points) >= margin, axis=-1)

    def edge_lengths(self):
        v = self.vertices
        return np.hypot(*(np.roll(v, -1, axis=0) - v).T)

    def edge_point(self, i, s):
        """Point at arclength s along facet i measured from vertex i."""
        p = self.vertices[i]
        q = self.vertices[(i + 1) % self.n_vertices]
        d = q - p
        length = np.hypot(*d)
        return p + (np.asarray(s, dtype=float) / length)[..., None] * d

    def weighted_perimeter(self):
        return math.fsum(
            L * f.weight for L, f in zip(self.edge_lengths(), self.facets)
        )

    # -- validation -----------------------------------------------------------

    def validate(self):
        """Check all Delzant polygon invariants; list each violation distinctly."""
        bad = []
        v = self.vertices
        n = self.n_vertices
        lo, hi = self.bounding_box
        span = max(hi[0] - lo[0], hi[1] - lo[1])
        if span <= 0:
            return ValidationReport(False, ["degenerate polygon: zero bounding box"])
        u = (v - lo) / span  # unit-scale copy for predicates

        for i in range(n):
            a, b, c = u[i - 1], u[i], u[(i + 1) % n]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= GEOM_TOL:
                kind = "collinear" if abs(cross) <= GEOM_TOL else "non-convex/clockwise"
                bad.append(f"vertex {i}: {kind} turn (cross={cross:.3e})")

        for i, f in enumerate(self.facets):
            if math.gcd(abs(f.normal[0]), abs(f.normal[1])) != 1:
                bad.append(f"facet {i}: non-primitive normal {f.normal}")

        tol = GEOM_TOL * max(1.0, span)
        lv = self.l_values(v)
        for i in range(n):
            for j in range(n):
                if lv[i, j] < -tol:
                    bad.append(f"facet {j}: l_{j} < 0 at vertex {i} (value {lv[i, j]:.3e})")
        for i, f in enumerate(self.facets):
            for k in (i, (i + 1) % n):
                if abs(lv[k, i]) > tol:
                    bad.append(
                        f"facet {i}: offset inconsistent, l_{i}(vertex {k}) = {lv[k, i]:.3e}"
                    )

        for i in range(n):
            # facets meeting at vertex i: facet i-1 (ending there) and facet i
            n1 = self.facets[i - 1].normal
            n2 = self.facets[i].normal
            det = n1[0] * n2[1] - n1[1] * n2[0]
            if det not in (1, -1):
                bad.append(f"vertex {i}: adjacent normals {n1}, {n2} have det {det} != +-1")

        return ValidationReport(not bad, bad)

    # -- exact moments ---------------------------------------------------------

    def interior_moment(self, p):
        """Exact integral of a bivariate polynomial over the polygon (Green's theorem)."""
        return interior_moment_over(self.vertices, p)

    def boundary_moment(self, p):
        """Exact integral of a polynomial over the boundary against dsigma."""
        contribs = []
        v = self.vertices
        n = self.n_vertices
        p = _as_poly(p)
        deg = p.total_degree
        nodes, wts = _gauss01(max(1, deg // 2 + 1))
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            length = math.hypot(*(b - a))
            x = a[0] + nodes * (b[0] - a[0])
            y = a[1] + nodes * (b[1] - a[1])
            contribs.append(self.facets[i].weight * length * float(np.dot(wts, p(x, y))))
        return math.fsum(contribs)

    # -- clipping ---------------------------------------------------------------

    def clip_halfplane(self, a, b):
        """Intersection with the half-plane <a, x> - b >= 0.

        The result keeps, for every surviving boundary edge, the index of the
        original facet it came from (crease edges carry None and no dsigma mass).
        """
        a = np.asarray(a, dtype=float)
        v = self.vertices
        n = self.n_vertices
        s = v @ a - float(b)
        tol = 1e-12 * max(1.0, self.scale) * max(1.0, float(np.hypot(*a)))

        segs = []
        for i in range(n):
            p, q = v[i], v[(i + 1) % n]
            sp, sq = s[i], s[(i + 1) % n]
            pin, qin = sp >= -tol, sq >= -tol
            if pin and qin:
                segs.append((p, q, i))
            elif pin and not qin:
                x = p + (sp / (sp - sq)) * (q - p)
                segs.append((p, x, i))
            elif qin and not pin:
                x = p + (sp / (sp - sq)) * (q - p)
                segs.append((x, q, i))
        segs = [(p, q, i) for (p, q, i) in segs if np.hypot(*(q - p)) > tol]
        if not segs:
            return ClippedPolygon(np.zeros((0, 2)), [], self)

        verts = [segs[0][0]]
        labels = []
        for p, q, lab in segs:
            if np.hypot(*(p - verts[-1])) > tol:
                verts.append(p)
                labels.append(None)  # crease gap
            verts.append(q)
            labels.append(lab)
        if np.hypot(*(verts[0] - verts[-1])) <= tol:
            verts.pop()
        else:
            labels.append(None)
        return ClippedPolygon(np.asarray(verts), labels, self)

    # -- serialization ----------------------------------------------------------

    def to_dict(self):
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "normals": [[int(f.normal[0]), int(f.normal[1])] for f in self.facets],
            "offsets": [float(f.offset) for f in self.facets],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["vertices"],
            normals=data.get("normals"),
            offsets=data.get("offsets"),
        )

    def __repr__(self):
        return f"DelzantPolygon({self.n_vertices} vertices)"


class ClippedPolygon:
    """Convex sub-polygon from half-plane clipping, remembering parent facets."""

    def __init__(self, vertices, edge_labels, parent):
        self.vertices = np.asarray(vertices, dtype=float)
        self.edge_labels = list(edge_labels)
        self.parent = parent

    @property
    def is_empty(self):
        return self.vertices.shape[0] < 3

    @property
    def area(self):
        if self.is_empty:
            return 0.0
        return interior_moment_over(self.vertices, Polynomial2D.constant(1.0))

    def interior_moment(self, p):
        if self.is_empty:
            return 0.0
        return interior_moment_over(self.vertices, p)

    def boundary_moment(self, p):
        """Integral against dsigma over the portion of the parent boundary kept."""
        if self.is_empty:
            return 0.0
        p = _as_poly(p)
        deg = p.total_degree
        nodes, wts = _gauss01(max(1, deg // 2 + 1))
        v = self.vertices
        m = v.shape[0]
        contribs = []
        for k in range(m):
            lab = self.edge_labels[k]
            if lab is None:
                continue
            a, b = v[k], v[(k + 1) % m]
            length = math.hypot(*(b - a))
            x = a[0] + nodes * (b[0] - a[0])
            y = a[1] + nodes * (b[1] - a[1])
            w = self.parent.facets[lab].weight
            contribs.append(w * length * float(np.dot(wts, p(x, y))))
        return math.fsum(contribs)


def _as_poly(p):
    if isinstance(p, Polynomial2D):
        return p
    return Polynomial2D(p)


def interior_moment_over(vertices, p):
    """Green's-theorem reduction of a polygon moment to exact edge integrals."""
    p = _as_poly(p)
    anti = p.antiderivative_x()
    deg = anti.total_degree
    nodes, wts = _gauss01(max(1, deg // 2 + 1))
    v = np.asarray(vertices, dtype=float)
    n = v.shape[0]
    contribs = []
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        x = a[0] + nodes * (b[0] - a[0])
        y = a[1] + nodes * (b[1] - a[1])
        contribs.append((b[1] - a[1]) * float(np.dot(wts, anti(x, y))))
    return math.fsum(contribs)


def validate(poly):
    """Module-level form of DelzantPolygon.validate."""
    return poly.validate()


def transform_polygon(poly, A, t=(0.0, 0.0)):
    """Image polygon under x -> A x + t for an integer unimodular A.

    Vertex order is reversed when det A < 0 so the result stays counterclockwise.
    """
    A = np.asarray(A)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if int(round(det)) not in (1, -1):
        raise ToricFlowError(f"transformation matrix must be unimodular, det={det}")
    verts = poly.vertices @ np.asarray(A, dtype=float).T + np.asarray(t, dtype=float)
    if det < 0:
        verts = verts[::-1]
    return DelzantPolygon(verts)


# -- file format ---------------------------------------------------------------

def load_polygon(path):
    with open(path) as fh:
        return DelzantPolygon.from_dict(json.load(fh))


def save_polygon(poly, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(poly.to_dict(), fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


# -- stock polygons --------------------------------------------------------------

def unit_square():
    return DelzantPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])


def standard_simplex():
    """Moment polygon of CP^2 with the standard polarization."""
    return DelzantPolygon([(0, 0), (1, 0), (0, 1)])


def hirzebruch_trapezoid():
    """Moment polygon of the one-point blow-up of CP^2 (nonconstant theta)."""
    return DelzantPolygon([(0, 0), (2, 0), (1, 1), (0, 1)])
