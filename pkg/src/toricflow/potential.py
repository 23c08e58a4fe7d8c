"""Symplectic potentials u = sum_i (1/2) l_i log l_i + f with a polynomial correction f.

The Guillemin log part is differentiated facet by facet in closed form; the
polynomial part is stored on coordinates rescaled to the bounding box (for
conditioning) and differentiated exactly, so jets up to fourth order carry no
finite-difference error.  Potentials are immutable values: every modification
returns a new object.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, ToricFlowError
from .polygon import DelzantPolygon, transform_polygon
from .poly2 import Polynomial2D, n_coeffs


@dataclass(frozen=True)
class AffineFunction:
    """a0 + a1*x1 + a2*x2."""

    a0: float
    a1: float
    a2: float

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return self.a0 + pts[..., 0] * self.a1 + pts[..., 1] * self.a2

    def __add__(self, other):
        return AffineFunction(self.a0 + other.a0, self.a1 + other.a1, self.a2 + other.a2)

    def __neg__(self):
        return AffineFunction(-self.a0, -self.a1, -self.a2)

    @property
    def coefficients(self):
        return np.array([self.a0, self.a1, self.a2])

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0)


@dataclass
class Jet:
    """Derivatives of u at one point; entries beyond the requested order are None."""

    point: np.ndarray
    value: float
    grad: np.ndarray = None
    hess: np.ndarray = None
    d3: np.ndarray = None
    d4: np.ndarray = None


@dataclass
class Jets:
    """Batched jets at N points; tensor shapes (N,), (N,2), (N,2,2), ..."""

    points: np.ndarray
    value: np.ndarray
    grad: np.ndarray = None
    hess: np.ndarray = None
    d3: np.ndarray = None
    d4: np.ndarray = None


class SymplecticPotential:
    """u = log_coeff * sum_i (1/2) l_i log l_i + f(x), with f polynomial.

    `log_coeff` is 1 for genuine Guillemin boundary behaviour; 0 gives a purely
    smooth (synthetic) potential used in tests, other values arise when scaling
    a potential as a whole.
    """

    def __init__(self, polygon, f=None, degree=8, log_coeff=1.0, normalization=None):
        if degree < 0:
            raise ToricFlowError("polynomial degree must be nonnegative")
        self.polygon = polygon
        self.degree = int(degree)
        self.log_coeff = float(log_coeff)
        self.f = f if f is not None else Polynomial2D.zero()
        self.normalization = normalization if normalization is not None else AffineFunction.zero()

        lo, hi = polygon.bounding_box
        self._mid = (lo + hi) / 2.0
        self._half = (hi - lo) / 2.0
        # s = (x - mid)/half; d^(a+b) f/dx1^a dx2^b = F^(a,b)(s) / (half1^a half2^b)
        self._dcoeffs = {}
        for a in range(5):
            for b in range(5 - a):
                self._dcoeffs[(a, b)] = self.f.diff(a, b)
        self._n3 = [np.einsum("i,j,k->ijk", *(np.array(f.normal, float),) * 3) for f in polygon.facets]
        self._n4 = [np.einsum("i,j,k,l->ijkl", *(np.array(f.normal, float),) * 4) for f in polygon.facets]

    # -- construction helpers ---------------------------------------------------

    @classmethod
    def guillemin(cls, polygon, degree=8):
        return cls(polygon, None, degree=degree)

    def with_f(self, f):
        return SymplecticPotential(self.polygon, f, self.degree, self.log_coeff, self.normalization)

    def rescale_point(self, points):
        return (np.asarray(points, dtype=float) - self._mid) / self._half

    def affine_to_frame(self, aff):
        """Affine function of x rewritten as a polynomial in the rescaled frame."""
        a0 = aff.a0 + aff.a1 * self._mid[0] + aff.a2 * self._mid[1]
        return Polynomial2D.affine(a0, aff.a1 * self._half[0], aff.a2 * self._half[1])

    def add_affine(self, aff):
        return self.with_f(self.f + self.affine_to_frame(aff))

    def f_in_x_frame(self):
        """Polynomial part as a polynomial in the original x coordinates."""
        B = np.diag(1.0 / self._half)
        t = -self._mid / self._half
        return self.f.compose_affine(B, t)

    def f_packed(self):
        return self.f.packed(self.degree)

    @classmethod
    def from_packed(cls, polygon, vec, degree, log_coeff=1.0):
        return cls(polygon, Polynomial2D.from_packed(vec, degree), degree, log_coeff)

    # -- evaluation ---------------------------------------------------------------

    def _poly_derivative_values(self, s, a, b):
        scale = self._half[0] ** a * self._half[1] ** b
        return self._dcoeffs[(a, b)](s[:, 0], s[:, 1]) / scale

    def jets(self, points, order=4, exclude_facet=None):
        """Batched derivatives up to `order` at strictly interior points.

        `exclude_facet` omits one facet's log term, which makes the remainder
        smooth across that facet (used for boundary-limit curvature formulas).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        N = pts.shape[0]
        lv = self.polygon.l_values(pts)
        active = [i for i in range(len(self.polygon.facets)) if i != exclude_facet]
        if self.log_coeff != 0.0:
            bad = lv[:, active] <= 0.0
            if np.any(bad):
                n_pt, n_f = np.argwhere(bad)[0]
                raise DomainError(
                    f"point {tuple(pts[n_pt])} not interior: l_{active[n_f]} = {lv[n_pt, active[n_f]]:.3e}"
                )

        s = self.rescale_point(pts)
        value = self._poly_derivative_values(s, 0, 0)
        out = Jets(points=pts, value=value)
        if order >= 1:
            g = np.zeros((N, 2))
            g[:, 0] = self._poly_derivative_values(s, 1, 0)
            g[:, 1] = self._poly_derivative_values(s, 0, 1)
            out.grad = g
        if order >= 2:
            h = np.zeros((N, 2, 2))
            h[:, 0, 0] = self._poly_derivative_values(s, 2, 0)
            h[:, 0, 1] = h[:, 1, 0] = self._poly_derivative_values(s, 1, 1)
            h[:, 1, 1] = self._poly_derivative_values(s, 0, 2)
            out.hess = h
        if order >= 3:
            d3 = np.zeros((N, 2, 2, 2))
            for idx in np.ndindex(2, 2, 2):
                a = idx.count(0)
                d3[(slice(None),) + idx] = self._poly_derivative_values(s, a, 3 - a)
            out.d3 = d3
        if order >= 4:
            d4 = np.zeros((N, 2, 2, 2, 2))
            for idx in np.ndindex(2, 2, 2, 2):
                a = idx.count(0)
                d4[(slice(None),) + idx] = self._poly_derivative_values(s, a, 4 - a)
            out.d4 = d4

        if self.log_coeff != 0.0:
            c = self.log_coeff
            for i in active:
                facet = self.polygon.facets[i]
                nvec = np.array(facet.normal, dtype=float)
                l = lv[:, i]
                out.value += c * 0.5 * l * np.log(l)
                if order >= 1:
                    out.grad += c * (0.5 * np.log(l) + 0.5)[:, None] * nvec
                if order >= 2:
                    out.hess += c * (0.5 / l)[:, None, None] * np.outer(nvec, nvec)
                if order >= 3:
                    out.d3 += c * (-0.5 / l**2)[:, None, None, None] * self._n3[i]
                if order >= 4:
                    out.d4 += c * (1.0 / l**3)[:, None, None, None, None] * self._n4[i]
        return out

    def values(self, points):
        return self.jets(points, order=0).value

    def gradients(self, points):
        return self.jets(points, order=1).grad

    def hessians(self, points):
        return self.jets(points, order=2).hess

    def boundary_values(self, points):
        """Values on the closed polygon, with the l log l convention 0 at l = 0."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lv = self.polygon.l_values(pts)
        tol = 1e-9 * max(1.0, self.polygon.scale)
        if np.any(lv < -tol):
            n_pt = int(np.argwhere(np.any(lv < -tol, axis=1))[0][0])
            raise DomainError(f"point {tuple(pts[n_pt])} outside closed polygon")
        lv = np.clip(lv, 0.0, None)
        s = self.rescale_point(pts)
        vals = self._poly_derivative_values(s, 0, 0)
        if self.log_coeff != 0.0:
            vals = vals + self.log_coeff * 0.5 * xlogy(lv, lv).sum(axis=1)
        return vals

    # -- normalization -------------------------------------------------------------

    def normalize(self, x0=None):
        """Subtract u(x0) + Du(x0).(x - x0) so the result vanishes to first order at x0."""
        if x0 is None:
            x0 = self.polygon.centroid
        x0 = np.asarray(x0, dtype=float)
        if not bool(self.polygon.contains(x0[None, :], margin=0.0).all()) or np.any(
            self.polygon.l_values(x0[None, :]) <= 0.0
        ):
            raise DomainError(f"normalization point {tuple(x0)} is not interior")
        j = self.jets(x0[None, :], order=1)
        v = float(j.value[0])
        g = j.grad[0]
        shift = AffineFunction(v - float(g @ x0), float(g[0]), float(g[1]))
        out = self.with_f(self.f - self.affine_to_frame(shift))
        out = SymplecticPotential(
            self.polygon, out.f, self.degree, self.log_coeff, self.normalization + shift
        )
        return out


def eval_derivatives(u, x, order=4):
    """Jet of u at a single interior point."""
    if not 0 <= order <= 4:
        raise ToricFlowError("order must be between 0 and 4")
    j = u.jets(np.asarray(x, dtype=float)[None, :], order=order)
    return Jet(
        point=j.points[0],
        value=float(j.value[0]),
        grad=None if j.grad is None else j.grad[0],
        hess=None if j.hess is None else j.hess[0],
        d3=None if j.d3 is None else j.d3[0],
        d4=None if j.d4 is None else j.d4[0],
    )


def normalize(u, x0=None):
    return u.normalize(x0)


class SegmentRestriction:
    """One-variable restriction V(t) = u(p + t (q - p)) with exact V''."""

    def __init__(self, u, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        tol = 1e-9 * max(1.0, u.polygon.scale)
        lp = u.polygon.l_values(p[None, :])[0]
        lq = u.polygon.l_values(q[None, :])[0]
        if np.any(lp < -tol) or np.any(lq < -tol):
            raise DomainError("segment endpoint outside the closed polygon")
        if np.any((lp <= tol) & (lq <= tol)):
            raise DomainError("segment lies inside the boundary; open part must be interior")
        self.u = u
        self.p = p
        self.q = q
        self.direction = q - p

    def points(self, t):
        t = np.asarray(t, dtype=float)
        return self.p[None, :] + t[:, None] * self.direction[None, :]

    def V(self, t):
        return self.u.values(self.points(np.atleast_1d(t)))

    def V2(self, t):
        """V''(t) = (q-p)^T D^2 u (q-p) along the open segment."""
        h = self.u.hessians(self.points(np.atleast_1d(t)))
        d = self.direction
        return np.einsum("i,nij,j->n", d, h, d)


def restrict_to_segment(u, p, q):
    return SegmentRestriction(u, p, q)


def convexity_probe(u, n_points=1000, seed=0, margin_factor=1e-6):
    """Sample interior points and check det/trace of the Hessian are positive.

    Returns (ok, first_bad_point_or_None); the flow treats a failed probe as a
    degeneration signal.
    """
    rng = np.random.default_rng(seed)
    lo, hi = u.polygon.bounding_box
    margin = margin_factor * u.polygon.scale
    pts = []
    while len(pts) < n_points:
        cand = rng.uniform(lo, hi, size=(4 * n_points, 2))
        keep = u.polygon.contains(cand, margin=margin)
        pts.extend(cand[keep][: n_points - len(pts)])
    pts = np.asarray(pts)
    h = u.hessians(pts)
    det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
    tr = h[:, 0, 0] + h[:, 1, 1]
    bad = (det <= 0.0) | (tr <= 0.0)
    if np.any(bad):
        return False, pts[np.argwhere(bad)[0][0]]
    return True, None


def transform_potential(u, A, t=(0.0, 0.0)):
    """Pull the potential through the lattice map y = A x + t.

    The Guillemin part maps onto the transformed polygon's own Guillemin part,
    so only the polynomial correction needs composing with the inverse map.
    """
    A = np.asarray(A, dtype=float)
    t = np.asarray(t, dtype=float)
    poly2 = transform_polygon(u.polygon, A, t)
    Ainv = np.linalg.inv(A)
    # F'(s') = F(B s' + c) combining both bounding-box frames with the inverse map
    lo, hi = poly2.bounding_box
    mid2, half2 = (lo + hi) / 2.0, (hi - lo) / 2.0
    D = np.diag(1.0 / u._half)
    B = D @ Ainv @ np.diag(half2)
    c = D @ (Ainv @ (mid2 - t)) - u._mid / u._half
    f2 = u.f.compose_affine(B, c)
    return SymplecticPotential(poly2, f2, u.degree, u.log_coeff)


# -- serialization ------------------------------------------------------------------

def potential_to_dict(u):
    return {
        "polygon": u.polygon.to_dict(),
        "degree": u.degree,
        "log_coeff": u.log_coeff,
        "f_coeffs": [float(c) for c in u.f_packed()],
        "normalization": [float(c) for c in u.normalization.coefficients],
    }


def potential_from_dict(data):
    poly = DelzantPolygon.from_dict(data["polygon"])
    degree = int(data["degree"])
    vec = np.array(data["f_coeffs"], dtype=float)
    if vec.size != n_coeffs(degree):
        raise ToricFlowError("coefficient vector length does not match degree")
    u = SymplecticPotential.from_packed(poly, vec, degree, log_coeff=data.get("log_coeff", 1.0))
    norm = data.get("normalization", [0.0, 0.0, 0.0])
    return SymplecticPotential(poly, u.f, degree, u.log_coeff, AffineFunction(*norm))


def save_potential(u, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(potential_to_dict(u), fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_potential(path):
    with open(path) as fh:
        return potential_from_dict(json.load(fh))
