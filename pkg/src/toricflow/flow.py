"""Time integration of the modified Calabi flow df/dt = theta_P - R_f as the downward
gradient flow of the modified Mabuchi energy.

The velocity theta - R is projected onto the polynomial correction space by
weighted least squares on interior collocation nodes; steps are explicit (Euler or
RK2 on the coefficients) and accepted only when the energy does not increase and
convexity survives, which gives an unconditional Lyapunov guarantee.  Rejected
steps halve dt; five consecutive acceptances double it up to dt_max.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, FlowStallError, ToricFlowError
from .curvature import scalar_curvature_at, sup_rm_estimate
from .functionals import (
    QuadratureRule,
    average_scalar_curvature,
    l2_distance,
    l_functional_poly,
    solve_theta,
)
from .poly2 import Polynomial2D, monomial_exponents, n_coeffs
from .potential import AffineFunction, SymplecticPotential

HISTORY_HEADER = "t,dt,mabuchi_rel,calabi_mod,sup_rm,boundary_int,l2_ref"


@dataclass
class FlowParams:
    dt0: float = 1e-5
    dt_min: float = 1e-14
    dt_max: float = 1e-3
    tol: float = 1e-6
    t_max: float = 10.0
    curvature_bound: float = math.inf  # C1 monitor; breach aborts the run
    modified: bool = True  # False runs the unmodified flow with theta = R_bar
    scheme: str = "euler"  # "euler" | "rk2"
    accept_slack: float = 1e-12
    double_after: int = 5
    projection_margin: float = 1e-4
    monitor_interior: int = 120


@dataclass
class FlowRecord:
    t: float
    dt: float
    mabuchi_rel: float
    calabi_mod: float
    sup_rm: float
    boundary_int: float
    l2_ref: float

    def csv_row(self):
        return (
            f"{self.t!r},{self.dt!r},{self.mabuchi_rel!r},{self.calabi_mod!r},"
            f"{self.sup_rm!r},{self.boundary_int!r},{self.l2_ref!r}"
        )


@dataclass
class FlowState:
    potential: SymplecticPotential
    t: float
    dt: float
    history: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    status: str = "running"
    streak: int = 0
    mabuchi: float = None
    r_nodes: np.ndarray = None


class ModifiedCalabiFlow:
    """Driver holding the polygon-dependent machinery of the flow."""

    def __init__(self, polygon, degree=8, params=None, rule=None, theta=None, seed=0):
        self.polygon = polygon
        self.degree = int(degree)
        self.params = params if params is not None else FlowParams()
        # flow integrands (log-det ratio, (R - theta)^2) are bounded and smooth up
        # to the boundary, so the cheaper rule without corner grading suffices here
        self.rule = rule if rule is not None else QuadratureRule.build(polygon, corner_depth=0)
        if theta is not None:
            self.theta = theta
        elif self.params.modified:
            self.theta = solve_theta(polygon)
        else:
            self.theta = AffineFunction(average_scalar_curvature(polygon), 0.0, 0.0)
        self.seed = seed

        nodes = self.rule.interior_nodes
        lmin = polygon.l_values(nodes).min(axis=1)
        self._mask = lmin >= self.params.projection_margin
        if int(self._mask.sum()) < n_coeffs(self.degree):
            raise ToricFlowError("too few collocation nodes for the polynomial degree")
        ref = SymplecticPotential.guillemin(polygon, degree=self.degree)
        self._ref = ref
        s = ref.rescale_point(nodes[self._mask])
        cols = [s[:, 0] ** i * s[:, 1] ** j for (i, j) in monomial_exponents(self.degree)]
        phi = np.column_stack(cols)
        sw = np.sqrt(self.rule.interior_weights[self._mask])
        self._proj = np.linalg.pinv(sw[:, None] * phi, rcond=1e-13)
        self._sw = sw
        self._theta_nodes = self.theta(nodes)
        # exact L of each basis monomial, making the Mabuchi L-part a dot product
        self._lvec = np.array(
            [
                l_functional_poly(
                    polygon,
                    self.theta,
                    Polynomial2D.from_packed(e, self.degree).compose_affine(
                        np.diag(1.0 / ref._half), -ref._mid / ref._half
                    ),
                )
                for e in np.eye(n_coeffs(self.degree))
            ]
        )
        self._log_ref = np.log(self.rule.guillemin_dets())

    # -- energies -------------------------------------------------------------

    def _dets(self, u):
        h = u.hessians(self.rule.interior_nodes)
        return h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]

    def mabuchi_rel(self, u, dets=None):
        dets = self._dets(u) if dets is None else dets
        log_part = -self.rule.integrate_interior(np.log(dets) - self._log_ref)
        return log_part + float(self._lvec @ u.f_packed())

    def calabi(self, u, r_nodes=None):
        r = self.scalar_on_nodes(u) if r_nodes is None else r_nodes
        dev = r - self._theta_nodes
        return self.rule.integrate_interior(dev * dev)

    def scalar_on_nodes(self, u):
        return scalar_curvature_at(u, self.rule.interior_nodes)

    def velocity(self, u, r_nodes=None):
        """Projection of theta - R onto the polynomial space (packed coefficients)."""
        r = self.scalar_on_nodes(u) if r_nodes is None else r_nodes
        g = (self._theta_nodes - r)[self._mask]
        return self._proj @ (self._sw * g)

    def trial_step(self, u, dt, r_nodes=None):
        """One forced explicit step (no acceptance logic)."""
        k1 = self.velocity(u, r_nodes)
        if self.params.scheme == "rk2":
            mid = u.with_f(u.f + Polynomial2D.from_packed(dt * k1, self.degree))
            k2 = self.velocity(mid)
            delta = 0.5 * dt * (k1 + k2)
        else:
            delta = dt * k1
        return u.with_f(u.f + Polynomial2D.from_packed(delta, self.degree))

    # -- monitors -------------------------------------------------------------

    def monitors(self, state):
        u = state.potential
        tilde = u.normalize()
        boundary_int = self.rule.integrate_boundary(tilde.boundary_values(self.rule.boundary_nodes))
        sup_rm = sup_rm_estimate(u, n_interior=self.params.monitor_interior, seed=self.seed)
        return FlowRecord(
            t=state.t,
            dt=state.dt,
            mabuchi_rel=state.mabuchi,
            calabi_mod=self.calabi(u, state.r_nodes),
            sup_rm=sup_rm,
            boundary_int=boundary_int,
            l2_ref=l2_distance(u, self._ref),
        )

    # -- stepping ---------------------------------------------------------------

    def initial_state(self, u, dt=None):
        dets = self._dets(u)
        if np.any(dets <= 0.0):
            raise DegeneracyError("initial potential is not convex at the quadrature nodes")
        state = FlowState(
            potential=u,
            t=0.0,
            dt=dt if dt is not None else self.params.dt0,
            mabuchi=self.mabuchi_rel(u, dets),
            r_nodes=self.scalar_on_nodes(u),
        )
        state.history.append(self.monitors(state))
        state.snapshots.append(u.f_packed())
        return state

    def step(self, state):
        """Advance one accepted step, halving dt on energy increase or convexity loss."""
        p = self.params
        u = state.potential
        dt = state.dt
        streak = state.streak
        while True:
            if dt < p.dt_min:
                raise FlowStallError(f"step size underflow: dt={dt:.3e} < dt_min={p.dt_min:.3e}")
            try:
                trial = self.trial_step(u, dt, state.r_nodes)
                dets = self._dets(trial)
                convex = bool(np.all(dets > 0.0))
            except DegeneracyError:
                convex = False
                dets = None
            if convex:
                m1 = self.mabuchi_rel(trial, dets)
                if m1 <= state.mabuchi + p.accept_slack:
                    streak += 1
                    dt_next = dt
                    if streak >= p.double_after:
                        dt_next = min(2.0 * dt, p.dt_max)
                        streak = 0
                    new = FlowState(
                        potential=trial,
                        t=state.t + dt,
                        dt=dt_next,
                        history=state.history,
                        snapshots=state.snapshots,
                        streak=streak,
                        mabuchi=m1,
                        r_nodes=self.scalar_on_nodes(trial),
                    )
                    new.history.append(self.monitors(new))
                    new.snapshots.append(trial.f_packed())
                    return new
            dt *= 0.5
            streak = 0

    def run(self, state, t_max=None, tol=None):
        """Iterate until the Calabi energy drops below tol, t reaches t_max, or an error.

        The terminating condition lands in state.status: converged | time_limit |
        stalled | degenerate | curvature_bound.
        """
        p = self.params
        t_max = p.t_max if t_max is None else t_max
        tol = p.tol if tol is None else tol
        if not state.history:
            state.history.append(self.monitors(state))
            state.snapshots.append(state.potential.f_packed())
        rec = state.history[-1]
        if rec.sup_rm > p.curvature_bound:
            state.status = "curvature_bound"
            return state
        if rec.calabi_mod < tol:
            state.status = "converged"
            return state
        while state.t < t_max:
            try:
                state = self.step(state)
            except FlowStallError:
                state.status = "stalled"
                return state
            except DegeneracyError:
                state.status = "degenerate"
                return state
            rec = state.history[-1]
            if rec.sup_rm > p.curvature_bound:
                state.status = "curvature_bound"
                return state
            if rec.calabi_mod < tol:
                state.status = "converged"
                return state
        state.status = "time_limit"
        return state

    def potentials_from_snapshots(self, state):
        return [
            SymplecticPotential.from_packed(self.polygon, c, self.degree)
            for c in state.snapshots
        ]


def normalize_trajectory(potentials, x0=None):
    """Normalize each potential at x0; report the shift sequence and its sup norm."""
    normalized = []
    shifts = []
    for u in potentials:
        v = u.normalize(x0)
        normalized.append(v)
        shifts.append(v.normalization.coefficients - u.normalization.coefficients)
    sup_shift = max((float(np.abs(s).max()) for s in shifts), default=0.0)
    return normalized, shifts, sup_shift


def observed_decay_rate(history):
    """Least-squares slope of log(calabi_mod) over the trailing half of the run."""
    rows = [r for r in history if r.calabi_mod > 0.0]
    if len(rows) < 4:
        return None
    tail = rows[len(rows) // 2 :]
    t = np.array([r.t for r in tail])
    y = np.log([r.calabi_mod for r in tail])
    if np.ptp(t) == 0.0:
        return None
    slope = np.polyfit(t, y, 1)[0]
    return float(slope)


def write_history_csv(history, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for rec in history:
            fh.write(rec.csv_row() + "\n")
    os.replace(tmp, path)
