"""Integral functionals on the polygon: the extremal affine function theta_P, the
stability functional L, the relative modified Mabuchi energy, the modified Calabi
energy, and L^2 distances.

Interior quadrature fans triangles from the centroid and grades them dyadically
toward the boundary; each triangle carries a conical-product Gauss rule (Jacobi x
Legendre), which has positive weights at every order and is exact to the requested
degree.  Boundary quadrature is composite Gauss-Legendre graded dyadically toward
the facet endpoints, where restrictions of symplectic potentials behave like
l log l.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import DegeneracyError, ToricFlowError
from .polygon import DelzantPolygon
from .poly2 import Polynomial2D
from .potential import AffineFunction, SymplecticPotential
from . import curvature as _curvature

_conical_cache = {}
_gl_cache = {}


def _conical_rule(order):
    """Nodes/weights on the reference triangle, exact for total degree <= order."""
    if order not in _conical_cache:
        n = max(1, (order + 2) // 2)
        xj, wj = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x) after mapping to [0, 1]
        x = (xj + 1.0) / 2.0
        wx = wj / 4.0
        tl, wl = roots_legendre(n)
        t = (tl + 1.0) / 2.0
        wt = wl / 2.0
        X = np.repeat(x, n)
        T = np.tile(t, n)
        nodes = np.column_stack([X, (1.0 - X) * T])
        weights = np.repeat(wx, n) * np.tile(wt, n)
        _conical_cache[order] = (nodes, weights)
    return _conical_cache[order]


def _gl01(n):
    if n not in _gl_cache:
        x, w = roots_legendre(n)
        _gl_cache[n] = ((x + 1.0) / 2.0, w / 2.0)
    return _gl_cache[n]


def _graded_sub_triangles(g, a, b, depth, corner_depth=0):
    """Split triangle (g, a, b) into strips graded toward the edge (a, b).

    With corner_depth > 0 each strip is additionally split tangentially toward
    both strip ends, at a dyadic depth matching the strip level: restrictions of
    symplectic potentials behave like l log l near the polygon vertices, and the
    edge-normal grading alone does not resolve that tangential singularity.
    """
    if depth <= 0:
        return [(g, a, b)]

    def at(lam, t):
        return g + lam * ((1.0 - t) * (a - g) + t * (b - g))

    lam = [0.0] + [1.0 - 0.5**k for k in range(1, depth + 1)] + [1.0]
    tris = []
    for k in range(len(lam) - 1):
        l0, l1 = lam[k], lam[k + 1]
        if k == 0:
            tris.append((g, at(l1, 0.0), at(l1, 1.0)))
            continue
        for (t0, t1) in _dyadic_intervals(min(k, corner_depth)):
            p00, p01 = at(l0, t0), at(l0, t1)
            p10, p11 = at(l1, t0), at(l1, t1)
            tris.append((p00, p10, p11))
            tris.append((p00, p11, p01))
    return tris


def _dyadic_intervals(depth):
    """Subdivision of [0, 1] graded toward both endpoints; lengths sum to 1 exactly."""
    if depth <= 0:
        return [(0.0, 1.0)]
    left = [(0.0, 0.5**depth)] + [(0.5 ** (k + 1), 0.5**k) for k in range(depth - 1, 0, -1)]
    right = [(1.0 - b, 1.0 - a) for (a, b) in reversed(left)]
    return left + right


@dataclass
class QuadratureRule:
    """Interior and boundary quadrature attached to one polygon."""

    polygon: DelzantPolygon
    depth: int
    order: int
    interior_nodes: np.ndarray
    interior_weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    boundary_facets: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, polygon, depth=6, order=7, boundary_order=8, boundary_depth=30,
              corner_depth=None):
        if corner_depth is None:
            corner_depth = depth
        ref_nodes, ref_w = _conical_rule(order)
        g = polygon.centroid
        v = polygon.vertices
        n = polygon.n_vertices
        nodes, weights = [], []
        for i in range(n):
            for (p0, p1, p2) in _graded_sub_triangles(g, v[i], v[(i + 1) % n], depth, corner_depth):
                e1, e2 = p1 - p0, p2 - p0
                area2 = e1[0] * e2[1] - e1[1] * e2[0]  # 2*area, positive for CCW
                pts = p0[None, :] + ref_nodes[:, 0:1] * e1[None, :] + ref_nodes[:, 1:2] * e2[None, :]
                nodes.append(pts)
                weights.append(ref_w * area2)
        interior_nodes = np.concatenate(nodes)
        interior_weights = np.concatenate(weights)

        gx, gw = _gl01(boundary_order)
        intervals = _dyadic_intervals(boundary_depth)
        bnodes, bweights, bfacets = [], [], []
        lengths = polygon.edge_lengths()
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            w_sigma = polygon.facets[i].weight
            for (t0, t1) in intervals:
                t = t0 + gx * (t1 - t0)
                pts = a[None, :] + t[:, None] * (b - a)[None, :]
                bnodes.append(pts)
                bweights.append(gw * (t1 - t0) * lengths[i] * w_sigma)
                bfacets.append(np.full(gx.size, i, dtype=int))
        rule = cls(
            polygon=polygon,
            depth=depth,
            order=order,
            interior_nodes=interior_nodes,
            interior_weights=interior_weights,
            boundary_nodes=np.concatenate(bnodes),
            boundary_weights=np.concatenate(bweights),
            boundary_facets=np.concatenate(bfacets),
        )
        area_err = abs(math.fsum(rule.interior_weights) - polygon.area)
        per_err = abs(math.fsum(rule.boundary_weights) - polygon.weighted_perimeter())
        if area_err > 1e-12 * max(1.0, polygon.area) or per_err > 1e-12 * max(
            1.0, polygon.weighted_perimeter()
        ):
            raise ToricFlowError("quadrature weights inconsistent with polygon measures")
        return rule

    def integrate_interior(self, values):
        return math.fsum(np.asarray(values, dtype=float) * self.interior_weights)

    def integrate_boundary(self, values):
        return math.fsum(np.asarray(values, dtype=float) * self.boundary_weights)

    def guillemin_dets(self):
        """Hessian determinants of the Guillemin reference at the interior nodes."""
        if "ref_dets" not in self._cache:
            ref = SymplecticPotential.guillemin(self.polygon, degree=0)
            h = ref.hessians(self.interior_nodes)
            self._cache["ref_dets"] = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
        return self._cache["ref_dets"]


# -- theta_P ------------------------------------------------------------------------

_MONOMIALS = (
    Polynomial2D.constant(1.0),
    Polynomial2D.affine(0.0, 1.0, 0.0),
    Polynomial2D.affine(0.0, 0.0, 1.0),
)


def solve_theta(poly):
    """The affine function with 2 int_dP m dsigma = int_P m theta dx for m in {1, x1, x2}."""
    G = np.array([[poly.interior_moment(mi * mj) for mj in _MONOMIALS] for mi in _MONOMIALS])
    rhs = np.array([2.0 * poly.boundary_moment(m) for m in _MONOMIALS])
    coeffs = np.linalg.solve(G, rhs)
    theta = AffineFunction(*coeffs)
    res = np.abs(G @ coeffs - rhs).max()
    if res > 1e-10 * max(1.0, np.abs(rhs).max()):
        raise ToricFlowError(f"theta residual too large: {res:.3e}")
    return theta


def average_scalar_curvature(poly):
    """2 sigma(dP) / |P|; equals theta_P when the Futaki invariant vanishes."""
    return 2.0 * poly.weighted_perimeter() / poly.area


def theta_as_poly(theta):
    return Polynomial2D.affine(theta.a0, theta.a1, theta.a2)


# -- the L functional -----------------------------------------------------------------


def l_functional(poly, theta, u, rule):
    """L(u) = 2 int_dP u dsigma - int_P u theta dx by quadrature.

    `u` may be a SymplecticPotential (boundary values use the l log l = 0
    convention) or any callable on (N, 2) point arrays.
    """
    if isinstance(u, SymplecticPotential):
        interior_vals = u.values(rule.interior_nodes)
        boundary_vals = u.boundary_values(rule.boundary_nodes)
    else:
        interior_vals = np.asarray(u(rule.interior_nodes), dtype=float)
        boundary_vals = np.asarray(u(rule.boundary_nodes), dtype=float)
    if not np.all(np.isfinite(interior_vals)) or not np.all(np.isfinite(boundary_vals)):
        raise ToricFlowError("non-finite samples at quadrature nodes")
    return 2.0 * rule.integrate_boundary(boundary_vals) - rule.integrate_interior(
        interior_vals * theta(rule.interior_nodes)
    )


def l_functional_poly(poly, theta, p):
    """Exact L of a polynomial (given in x coordinates) via polygon moments."""
    return 2.0 * poly.boundary_moment(p) - poly.interior_moment(p * theta_as_poly(theta))


@dataclass
class CreaseLResult:
    value: float
    boundary_mass: float
    degenerate: bool


def crease_l_functional(poly, theta, a, b):
    """Exact L and boundary mass of max(0, <a, x> - b) via clipping and moments.

    Degenerate creases (empty or full positive side) report L = 0 by convention.
    """
    a = np.asarray(a, dtype=float)
    b = float(b)
    pos = poly.clip_halfplane(a, b)
    if pos.is_empty:
        return CreaseLResult(0.0, 0.0, True)
    ramp = Polynomial2D.affine(-b, a[0], a[1])
    if pos.area >= poly.area * (1.0 - 1e-12):
        # affine on all of P: L vanishes by the definition of theta
        return CreaseLResult(0.0, poly.boundary_moment(ramp), True)
    boundary_part = pos.boundary_moment(ramp)
    interior_part = pos.interior_moment(ramp * theta_as_poly(theta))
    return CreaseLResult(2.0 * boundary_part - interior_part, boundary_part, False)


# -- energies ---------------------------------------------------------------------------


def _potential_difference_poly(u, v):
    if u.polygon is not v.polygon and not np.array_equal(u.polygon.vertices, v.polygon.vertices):
        raise ToricFlowError("potentials live on different polygons")
    if u.log_coeff != v.log_coeff:
        raise ToricFlowError("potentials have different Guillemin coefficients")
    return u.f_in_x_frame() - v.f_in_x_frame()


def mabuchi_relative(u, theta=None, rule=None):
    """M(u) - M(u_ref) for the Guillemin reference of the same polygon.

    The log-determinant ratio is bounded on P because both potentials share the
    Guillemin singularity, so the graded quadrature converges; the L part of the
    difference is a polynomial and is integrated exactly.
    """
    poly = u.polygon
    theta = theta if theta is not None else solve_theta(poly)
    rule = rule if rule is not None else QuadratureRule.build(poly)
    h = u.hessians(rule.interior_nodes)
    det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
    bad = det <= 0.0
    if np.any(bad):
        k = int(np.argwhere(bad)[0][0])
        raise DegeneracyError(
            f"convexity lost at quadrature node (det={det[k]:.3e})",
            point=rule.interior_nodes[k],
        )
    ref = SymplecticPotential.guillemin(poly, degree=0)
    log_part = -rule.integrate_interior(np.log(det / rule.guillemin_dets()))
    diff = _potential_difference_poly(u, ref)
    return log_part + l_functional_poly(poly, theta, diff)


def calabi_energy_mod(u, theta=None, rule=None, scalar_values=None):
    """int_P (R_u - theta)^2 dx; the squared gradient of the modified Mabuchi energy."""
    poly = u.polygon
    theta = theta if theta is not None else solve_theta(poly)
    rule = rule if rule is not None else QuadratureRule.build(poly)
    R = scalar_values
    if R is None:
        R = _curvature.scalar_curvature_at(u, rule.interior_nodes)
    dev = R - theta(rule.interior_nodes)
    return rule.integrate_interior(dev * dev)


def l2_distance(u, v, rule=None):
    """(int_P (u - v)^2 dx)^(1/2); exact for two potentials on the same polygon."""
    if isinstance(u, SymplecticPotential) and isinstance(v, SymplecticPotential):
        diff = _potential_difference_poly(u, v)
        val = u.polygon.interior_moment(diff * diff)
        return math.sqrt(max(val, 0.0))
    if rule is None:
        raise ToricFlowError("a quadrature rule is required for non-potential inputs")
    du = np.asarray(u(rule.interior_nodes), dtype=float)
    dv = np.asarray(v(rule.interior_nodes), dtype=float)
    return math.sqrt(max(rule.integrate_interior((du - dv) ** 2), 0.0))


@dataclass
class EnergyReport:
    mabuchi_rel: float
    calabi_mod: float
    l_functional: float
    boundary_int: float

    CSV_HEADER = "mabuchi_rel,calabi_mod,l_functional,boundary_int"

    def __post_init__(self):
        if self.calabi_mod < 0.0:
            raise ToricFlowError("calabi_mod must be nonnegative")

    def csv_row(self):
        return f"{self.mabuchi_rel!r},{self.calabi_mod!r},{self.l_functional!r},{self.boundary_int!r}"


def boundary_integral_normalized(u, rule, x0=None):
    """int_dP u~ dsigma for the normalization of u at x0 (default: centroid)."""
    tilde = u.normalize(x0)
    return rule.integrate_boundary(tilde.boundary_values(rule.boundary_nodes))


def energy_report(u, theta=None, rule=None):
    poly = u.polygon
    theta = theta if theta is not None else solve_theta(poly)
    rule = rule if rule is not None else QuadratureRule.build(poly)
    return EnergyReport(
        mabuchi_rel=mabuchi_relative(u, theta, rule),
        calabi_mod=calabi_energy_mod(u, theta, rule),
        l_functional=l_functional(poly, theta, u, rule),
        boundary_int=boundary_integral_normalized(u, rule),
    )
