"""Relative K-stability diagnostics over single-crease piecewise-linear functions,
Donaldson's M-condition estimator, and Hessian-metric diameter bounds via ray lengths.

The lambda search minimizes L(c) / int_dP c dsigma over creases c = max(0, <a,x> - b)
normalized so the base point lies on the zero side.  Per direction the boundary mass
is an elementary closed form and the interior part is piecewise cubic in the offset
with breakpoints at the vertex supports, so a dense offset grid costs four exact
clip evaluations per breakpoint interval instead of one per offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .errors import ToricFlowError
from .functionals import crease_l_functional
from .polygon import DelzantPolygon

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CreaseFunction:
    """max(0, <a, x> - b); the normalization point must satisfy <a, x0> <= b."""

    a: tuple
    b: float

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return np.maximum(0.0, pts[..., 0] * self.a[0] + pts[..., 1] * self.a[1] - self.b)

    def scaled(self, factor):
        return CreaseFunction((self.a[0] * factor, self.a[1] * factor), self.b * factor)


@dataclass(frozen=True)
class SegmentTriple:
    """Segment split into equal thirds by x2, x3; v is the unit vector x1 -> x4."""

    x1: tuple
    x4: tuple

    @property
    def x2(self):
        p, q = np.asarray(self.x1), np.asarray(self.x4)
        return p + (q - p) / 3.0

    @property
    def x3(self):
        p, q = np.asarray(self.x1), np.asarray(self.x4)
        return p + 2.0 * (q - p) / 3.0

    @property
    def v(self):
        d = np.asarray(self.x4) - np.asarray(self.x1)
        return d / np.hypot(*d)


def l_of_crease(poly, theta, crease):
    """Exact L of a crease function (clip + moments); 0 for degenerate creases."""
    return crease_l_functional(poly, theta, crease.a, crease.b).value


def crease_boundary_mass(poly, crease):
    """int_dP max(0, <a,x> - b) dsigma, exactly."""
    return float(_boundary_mass_grid(poly, np.asarray(crease.a, float), np.array([crease.b]))[0])


# -- lambda search -----------------------------------------------------------------


def _boundary_mass_grid(poly, a, b_grid):
    """int_dP max(0, <a,x> - b) dsigma for every b, in closed form per edge."""
    v = poly.vertices
    n = v.shape[0]
    sv = v @ a
    out = np.zeros_like(b_grid)
    for i in range(n):
        s1 = sv[i] - b_grid
        s2 = sv[(i + 1) % n] - b_grid
        L = math.hypot(*(v[(i + 1) % n] - v[i]))
        w = poly.facets[i].weight * L
        both_pos = (s1 >= 0.0) & (s2 >= 0.0)
        p_only = (s1 > 0.0) & (s2 < 0.0)
        q_only = (s1 < 0.0) & (s2 > 0.0)
        vals = np.zeros_like(b_grid)
        vals[both_pos] = 0.5 * (s1[both_pos] + s2[both_pos])
        vals[p_only] = 0.5 * s1[p_only] ** 2 / (s1[p_only] - s2[p_only])
        vals[q_only] = 0.5 * s2[q_only] ** 2 / (s2[q_only] - s1[q_only])
        out += w * vals
    return out


def _interior_part_grid(poly, theta, a, b_grid):
    """int_P max(0, <a,x> - b) theta dx for every b.

    Piecewise cubic in b between consecutive vertex supports; each piece is
    reconstructed exactly from four clip-and-moment evaluations.
    """
    sv = np.sort(np.unique(np.round(poly.vertices @ a, 14)))
    out = np.zeros_like(b_grid)
    lo, hi = b_grid.min(), b_grid.max()
    knots = [lo] + [s for s in sv if lo < s < hi] + [hi]
    for k in range(len(knots) - 1):
        t0, t1 = knots[k], knots[k + 1]
        sel = (b_grid >= t0 - 1e-15) & (b_grid <= t1 + 1e-15)
        if k == len(knots) - 2:
            sel = b_grid >= t0 - 1e-15
        if not np.any(sel):
            continue
        span = t1 - t0
        if span <= 0:
            continue
        bn = t0 + span * np.array([0.06, 0.38, 0.62, 0.94])
        In = np.array([_interior_exact(poly, theta, a, b) for b in bn])
        coeffs = np.polynomial.polynomial.polyfit((bn - t0) / span, In, 3)
        out[sel] = np.polynomial.polynomial.polyval((b_grid[sel] - t0) / span, coeffs)
    return out


def _interior_exact(poly, theta, a, b):
    res = crease_l_functional(poly, theta, a, b)
    # L = 2*boundary - interior  =>  interior = 2*boundary - L
    return 2.0 * res.boundary_mass - res.value


@dataclass
class LambdaResult:
    lambda_hat: float
    crease: CreaseFunction
    stable_in_family: bool
    n_evaluated: int
    table: list = None  # optional (angle, b, ratio) rows


def lambda_estimate(
    poly,
    theta,
    n_directions=720,
    n_offsets=200,
    refine=True,
    top_k=5,
    x0=None,
    keep_table=False,
):
    """Minimize L(c) / int_dP c dsigma over a grid of normalized crease functions.

    lambda_hat > 0 means no PL destabilizer was found in the family; lambda_hat <= 0
    reports the explicit destabilizing crease.
    """
    if x0 is None:
        x0 = poly.centroid
    best = (math.inf, None, None)
    table = [] if keep_table else None
    n_eval = 0
    mass_tol = 1e-12 * max(1.0, poly.scale)

    for k in range(n_directions):
        phi = 2.0 * math.pi * k / n_directions
        a = np.array([math.cos(phi), math.sin(phi)])
        sv = poly.vertices @ a
        lo, hi = float(sv.min()), float(sv.max())
        b_lo = max(lo, float(a @ x0))
        if hi - b_lo <= 1e-12 * max(1.0, poly.scale):
            continue
        step = (hi - b_lo) / (n_offsets + 1)
        b_grid = b_lo + step * np.arange(1, n_offsets + 1)
        B = _boundary_mass_grid(poly, a, b_grid)
        I = _interior_part_grid(poly, theta, a, b_grid)
        ok = B > mass_tol
        ratio = np.full_like(b_grid, math.inf)
        ratio[ok] = (2.0 * B[ok] - I[ok]) / B[ok]
        n_eval += int(ok.sum())
        j = int(np.argmin(ratio))
        if ratio[j] < best[0]:
            best = (float(ratio[j]), phi, float(b_grid[j]))
        if keep_table:
            table.extend((phi, float(b), float(r)) for b, r in zip(b_grid, ratio))

    lam, phi, b = best
    if phi is None:
        raise ToricFlowError("lambda search found no admissible crease")

    if refine:
        lam, phi, b = _refine_crease(poly, theta, x0, phi, b,
                                     2.0 * math.pi / n_directions, lam)

    a = (math.cos(phi), math.sin(phi))
    crease = CreaseFunction(a, b)
    return LambdaResult(lam, crease, lam > 0.0, n_eval, table)


def crease_ratio(poly, theta, a, b):
    """Exact L(c)/mass(c) for one crease; inf when degenerate."""
    res = crease_l_functional(poly, theta, a, b)
    if res.degenerate or res.boundary_mass <= 1e-12 * max(1.0, poly.scale):
        return math.inf
    return res.value / res.boundary_mass


def _golden_min(f, lo, hi, iters=40):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = c if fc < fd else d
    return x, min(fc, fd)


def _refine_crease(poly, theta, x0, phi0, b0, dphi, lam0):
    def ratio_at(phi, b):
        return crease_ratio(poly, theta, (math.cos(phi), math.sin(phi)), b)

    def best_b(phi):
        a = np.array([math.cos(phi), math.sin(phi)])
        sv = poly.vertices @ a
        lo = max(float(sv.min()), float(a @ x0))
        hi = float(sv.max())
        if hi - lo <= 1e-12:
            return b0, math.inf
        pad = 1e-9 * (hi - lo)
        return _golden_min(lambda b: ratio_at(phi, b), lo + pad, hi - pad)

    def over_phi(phi):
        return best_b(phi)[1]

    phi, _ = _golden_min(over_phi, phi0 - dphi, phi0 + dphi, iters=30)
    b, lam = best_b(phi)
    if lam < lam0:
        return lam, phi, b
    return lam0, phi0, b0


def lambda_scan_bruteforce(poly, theta, n_directions, n_offsets, x0=None):
    """Naive exhaustive clip-and-moment scan over the same grid as lambda_estimate."""
    if x0 is None:
        x0 = poly.centroid
    best = math.inf
    arg = None
    for k in range(n_directions):
        phi = 2.0 * math.pi * k / n_directions
        a = np.array([math.cos(phi), math.sin(phi)])
        sv = poly.vertices @ a
        lo, hi = float(sv.min()), float(sv.max())
        b_lo = max(lo, float(a @ x0))
        if hi - b_lo <= 1e-12 * max(1.0, poly.scale):
            continue
        step = (hi - b_lo) / (n_offsets + 1)
        for j in range(1, n_offsets + 1):
            b = b_lo + step * j
            r = crease_ratio(poly, theta, a, b)
            if r < best:
                best = r
                arg = CreaseFunction((a[0], a[1]), b)
    return best, arg


# -- M-condition -----------------------------------------------------------------------


def m_condition_value(u, x1, x4):
    """|Du.v(x2) - Du.v(x3)| for the segment split into equal thirds."""
    seg = SegmentTriple(tuple(np.asarray(x1, float)), tuple(np.asarray(x4, float)))
    g = u.gradients(np.vstack([seg.x2, seg.x3]))
    return float(abs((g[0] - g[1]) @ seg.v))


@dataclass
class MConditionResult:
    m_hat: float
    worst: SegmentTriple
    n_segments: int


def _mcond_points(poly, offsets, edge_fractions, grid_n):
    """Boundary-offset probes plus an interior lattice, filtered to the interior."""
    scale = poly.scale
    pts = []
    lengths = poly.edge_lengths()
    v = poly.vertices
    n = poly.n_vertices
    for i in range(n):
        d = v[(i + 1) % n] - v[i]
        tang = d / lengths[i]
        normal = np.array([-tang[1], tang[0]])  # inward for CCW
        for frac in np.linspace(0.12, 0.88, edge_fractions):
            base = v[i] + frac * d
            for off in offsets:
                pts.append(base + off * scale * normal)
    lo, hi = poly.bounding_box
    gx = np.linspace(lo[0], hi[0], grid_n + 2)[1:-1]
    gy = np.linspace(lo[1], hi[1], grid_n + 2)[1:-1]
    mesh = np.array([(x, y) for x in gx for y in gy])
    pts = np.vstack([np.asarray(pts), mesh])
    keep = poly.contains(pts, margin=1e-6 * scale)
    return pts[keep]


def m_condition_estimate(u, offsets=(1e-2, 1e-3, 1e-4), edge_fractions=9, grid_n=5):
    """Sampled sup of the M-condition quantity over segments between probe points.

    The sup is over the sampled family only; density is a configuration choice,
    so the estimate is monotone under enlarging the family.
    """
    poly = u.polygon
    pts = _mcond_points(poly, offsets, edge_fractions, grid_n)
    m = pts.shape[0]
    ii, jj = np.triu_indices(m, k=1)
    p = pts[ii]
    q = pts[jj]
    d = q - p
    lens = np.hypot(d[:, 0], d[:, 1])
    keep = lens > 1e-9 * poly.scale
    p, q, d, lens = p[keep], q[keep], d[keep], lens[keep]
    x2 = p + d / 3.0
    x3 = p + 2.0 * d / 3.0
    g2 = u.gradients(x2)
    g3 = u.gradients(x3)
    vals = np.abs(np.einsum("ni,ni->n", g2 - g3, d / lens[:, None]))
    k = int(np.argmax(vals))
    worst = SegmentTriple(tuple(p[k]), tuple(q[k]))
    return MConditionResult(float(vals[k]), worst, int(vals.size))


# -- diameter --------------------------------------------------------------------------

_ray_rule_cache = {}


def _ray_rule(depth, order):
    """Dyadic nodes/weights on [0, 1] graded toward both endpoints (t^(-1/2) safe)."""
    key = (depth, order)
    if key not in _ray_rule_cache:
        x, w = roots_legendre(order)
        x = (x + 1.0) / 2.0
        w = w / 2.0
        iv = [(0.0, 0.5**depth)] + [(0.5 ** (k + 1), 0.5**k) for k in range(depth - 1, -1, -1)]
        iv = [(a / 2.0, b / 2.0) for (a, b) in iv]
        iv = iv + [(1.0 - b, 1.0 - a) for (a, b) in reversed(iv)]
        nodes = np.concatenate([a + x * (b - a) for (a, b) in iv])
        weights = np.concatenate([w * (b - a) for (a, b) in iv])
        _ray_rule_cache[key] = (nodes, weights)
    return _ray_rule_cache[key]


def ray_length(u, p, q, depth=40, order=12):
    """Length of the straight segment p -> q in the Hessian metric of u.

    Endpoints may touch the boundary; the dyadic grading absorbs the integrable
    t^(-1/2) endpoint singularity of sqrt(V'').
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q - p
    if np.hypot(*d) == 0.0:
        return 0.0
    t, w = _ray_rule(depth, order)
    pts = p[None, :] + t[:, None] * d[None, :]
    h = u.hessians(pts)
    quad = np.einsum("i,nij,j->n", d, h, d)
    if np.any(quad <= 0.0):
        k = int(np.argwhere(quad <= 0.0)[0][0])
        raise ToricFlowError(f"Hessian metric degenerate along ray at t={t[k]:.3e}")
    return math.fsum(w * np.sqrt(quad))


@dataclass
class DiameterResult:
    diam_hat: float
    rays: list  # dicts with p, q, direct, relay, used


def diameter_estimate(u, depth=40, order=12):
    """Upper diameter estimate: max over probe pairs of min(direct, through-centroid).

    Probes are all vertices, facet midpoints and the centroid; segments lying in
    the boundary (no interior) fall back to the centroid relay.
    """
    poly = u.polygon
    v = poly.vertices
    n = poly.n_vertices
    mids = np.array([(v[i] + v[(i + 1) % n]) / 2.0 for i in range(n)])
    g = poly.centroid
    probes = np.vstack([v, mids, g[None, :]])
    to_hub = [ray_length(u, p, g, depth, order) for p in probes]
    scale = poly.scale
    rays = []
    best = 0.0
    for i in range(len(probes)):
        for j in range(i + 1, len(probes)):
            p, q = probes[i], probes[j]
            mid = (p + q) / 2.0
            interior = bool(np.all(poly.l_values(mid[None, :]) > 1e-9 * scale))
            direct = ray_length(u, p, q, depth, order) if interior else math.inf
            relay = to_hub[i] + to_hub[j]
            used = min(direct, relay)
            rays.append(
                {
                    "p": tuple(p),
                    "q": tuple(q),
                    "direct": None if direct is math.inf else direct,
                    "relay": relay,
                    "used": used,
                }
            )
            best = max(best, used)
    return DiameterResult(best, rays)
