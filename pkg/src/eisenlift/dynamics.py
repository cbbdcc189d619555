"""Classical checks: Newtonian paths, lifted geodesics and their projection,
and the action identity between a potential and the free particle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import expr as ex
from .expr import Expr
from .flatmap import FlatteningMap, PotentialSpec
from .geometry import T, U, X, build_metric, christoffel
from .numerics import DenseSolution, solve_dense


class DegenerateMetric(ValueError):
    """The conformal factor is not positive at the initial time."""


class NormDriftExceeded(RuntimeError):
    def __init__(self, drift: float, tol: float):
        super().__init__(f"null norm drifted to {drift:.3e} (limit {tol:.1e})")
        self.drift = drift
        self.tol = tol


@dataclass(frozen=True)
class Trajectory:
    """A path ``x(t)`` with its velocity on ``[t_lo, t_hi]``."""

    t_lo: float
    t_hi: float
    position: Callable
    velocity: Callable

    def sample(self, n: int = 201):
        t = np.linspace(self.t_lo, self.t_hi, n)
        return t, self.position(t)

    @classmethod
    def from_solution(cls, sol: DenseSolution) -> "Trajectory":
        return cls(sol.t_lo, sol.t_hi, lambda t: sol(t)[0], lambda t: sol(t)[1])


def newton_trajectory(V: Expr, x0: float, v0: float, t_range=(0.0, 1.0), tol: float = 1e-10,
                      params=None, t0: float | None = None) -> Trajectory:
    """Solve ``x'' = -dV/dx`` with ``x(t0) = x0``, ``x'(t0) = v0`` (``t0`` defaults to the start)."""
    force = ex.lambdify(ex.neg(ex.diff(V, "x")), ("x", "t"), params)
    lo, hi = map(float, t_range)
    start = lo if t0 is None else float(t0)

    def rhs(t, y):
        return [y[1], force(y[0], t)]

    sol = solve_dense(rhs, start, [float(x0), float(v0)], lo, hi, rtol=tol, atol=tol / 100)
    return Trajectory.from_solution(sol)


@dataclass(frozen=True)
class GeodesicState:
    position: tuple   # (t, u, x)
    velocity: tuple   # derivatives with respect to the affine parameter
    affine: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self.position + self.velocity, dtype=float)


def lift_initial_data(V: Expr, omega: Expr, x0: float, v0: float, t0: float = 0.0,
                      m: float = 1.0, params=None, *, norm: float = 0.0) -> GeodesicState:
    """Lift Newtonian initial data to a geodesic of the conformal lifted metric.

    ``dt/ds = m / Omega(t0)``, ``dx/ds = v0 dt/ds`` and ``du/ds`` is the root of
    the (linear in ``du/ds``) norm condition. ``norm = 0`` gives null geodesics;
    a negative value is only used to probe the timelike branch.
    """
    if not m > 0:
        raise ValueError("m must be positive")
    bind = dict(params or {})
    om = float(ex.evaluate(ex.as_expr(omega), {**bind, "t": t0, "x": x0}))
    if not om > 0:
        raise DegenerateMetric(f"Omega(t0) = {om} is not positive")
    pot = float(ex.evaluate(V, {**bind, "t": t0, "x": x0}))
    tdot = m / om
    xdot = v0 * tdot
    # Omega (2 tdot udot - 2 V tdot^2 + xdot^2) = norm
    udot = (norm / om + 2 * pot * tdot ** 2 - xdot ** 2) / (2 * tdot)
    return GeodesicState((float(t0), 0.0, float(x0)), (tdot, udot, xdot))


@dataclass(frozen=True)
class GeodesicPath:
    solution: DenseSolution
    norm_drift: float
    initial_norm: float

    def states(self, s):
        return self.solution(s)

    def at_times(self, t):
        """States at coordinate times ``t``, found by inverting ``t(s)``."""
        t = np.asarray(t, dtype=float)
        grid = np.linspace(self.solution.t_lo, self.solution.t_hi, 2001)
        t_grid = self.solution(grid)[0]
        s = np.interp(t, t_grid, grid)
        for _ in range(30):
            st = self.solution(s)
            ds = (st[0] - t) / st[3]
            s = np.clip(s - ds, grid[0], grid[-1])
            if np.max(np.abs(ds), initial=0.0) < 1e-14:
                break
        return self.solution(s)


def _compiled_geometry(V: Expr, omega: Expr, params):
    metric = build_metric(V, ex.as_expr(omega))
    gamma = christoffel(metric)
    idx = gamma.nonzero()
    gfn = ex.lambdify([gamma[i] for i in idx], ("t", "x"), params) if idx else None
    mfn = ex.lambdify([metric.g(i, j) for i in range(3) for j in range(3)], ("t", "x"), params)
    return idx, gfn, mfn


def _norm(mfn, y):
    t, x = y[0], y[2]
    comps = mfn(t, x)
    vel = y[3:6]
    total = 0.0
    for k, g in enumerate(comps):
        i, j = divmod(k, 3)
        total = total + g * vel[i] * vel[j]
    return total


def integrate_geodesic(V: Expr, omega: Expr, s0: GeodesicState, affine_range, tol: float = 1e-10,
                       params=None, norm_tol: float = 1e-8) -> GeodesicPath:
    """Integrate the geodesic equation of ``Omega (dx^2 + 2 dt du - 2 V dt^2)``.

    Christoffel symbols come from the exact curvature module. The norm is
    monitored on 2001 points; drift above ``norm_tol`` raises.
    """
    idx, gfn, mfn = _compiled_geometry(V, omega, params)

    def rhs(s, y):
        acc = [0.0, 0.0, 0.0]
        if gfn is not None:
            vals = gfn(y[T], y[X])
            vel = y[3:]
            for (mu, nu, lam), g in zip(idx, vals):
                acc[mu] -= g * vel[nu] * vel[lam]
        return [y[3], y[4], y[5], *acc]

    lo, hi = map(float, affine_range)
    sol = solve_dense(rhs, s0.affine, s0.as_array(), lo, hi, rtol=tol, atol=tol / 100)
    grid = np.linspace(lo, hi, 2001)
    initial = float(_norm(mfn, s0.as_array()))
    drift = float(np.max(np.abs(_norm(mfn, sol(grid)) - initial)))
    if drift > norm_tol:
        raise NormDriftExceeded(drift, norm_tol)
    return GeodesicPath(sol, drift, initial)


@dataclass(frozen=True)
class Projection:
    t: np.ndarray
    x_newton: np.ndarray
    x_projected: np.ndarray
    null_norm: np.ndarray

    @property
    def max_abs_dx(self) -> float:
        return float(np.max(np.abs(self.x_projected - self.x_newton)))

    @property
    def max_abs_null_norm(self) -> float:
        return float(np.max(np.abs(self.null_norm)))


def project_geodesic(V: Expr, omega: Expr, x0: float, v0: float, t_range=(0.0, 1.0),
                     m: float = 1.0, n: int = 201, tol: float = 1e-10, params=None,
                     *, norm: float = 0.0) -> Projection:
    """Lift ``(x0, v0)`` at the start of ``t_range``, integrate, and compare the
    projected ``x(t)`` with the Newtonian path on ``n`` uniform times."""
    omega = ex.as_expr(omega)
    lo, hi = map(float, t_range)
    s0 = lift_initial_data(V, omega, x0, v0, lo, m, params, norm=norm)
    # Omega dt/ds = m is conserved, so the affine length is int Omega dt / m
    om_fn = ex.lambdify(omega, ("t",), params)
    length = quad(lambda t: float(om_fn(t)), lo, hi, epsabs=1e-13, epsrel=1e-12)[0] / m
    path = integrate_geodesic(V, omega, s0, (0.0, 1.02 * length + 1e-9), tol, params,
                              norm_tol=1e-8 * max(1.0, abs(norm)))
    t = np.linspace(lo, hi, n)
    states = path.at_times(t)
    _, _, mfn = _compiled_geometry(V, omega, params)
    newton = newton_trajectory(V, x0, v0, (lo, hi), tol, params)
    return Projection(t, newton.position(t), states[X], _norm(mfn, states))


@dataclass(frozen=True)
class ActionReport:
    action_potential: float
    action_free: float
    boundary: float
    t_i: float
    t_f: float

    @property
    def residual(self) -> float:
        return abs(self.action_potential - (self.action_free - self.boundary))

    def passed(self, tol: float = 1e-6) -> bool:
        return self.residual < tol

    def to_dict(self) -> dict:
        return {"S_V": self.action_potential, "S_free": self.action_free,
                "boundary": self.boundary, "residual": self.residual,
                "t_i": self.t_i, "t_f": self.t_f}


def action_equivalence(spec: PotentialSpec, fmap: FlatteningMap, path: Trajectory,
                       t_i: float, t_f: float) -> ActionReport:
    """Compare the action of ``path`` under ``V`` with the free action of its image.

    The free action is ``int (dxi/dtau)^2 / 2 dtau = int (dxi/dt)^2 / (2 Omega) dt``
    with ``xi = (x - h(tau(t))) sqrt(Omega)``; the boundary term is the jump of
    ``f3`` between the end points.
    """
    pot = spec.potential_callable()
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200)

    def lagrangian(t):
        x, v = path.position(t), path.velocity(t)
        return float(0.5 * v * v - pot(x, t))

    def free_density(t):
        x, v = path.position(t), path.velocity(t)
        tau = fmap.tau_of_t(t)
        om, dom = fmap.omega(t), fmap.domega_dt(t)
        rel = x - fmap.h(tau)
        dxi_dt = (v - fmap.dh(tau) * om) * np.sqrt(om) + rel * dom / (2 * np.sqrt(om))
        return float(0.5 * dxi_dt ** 2 / om)

    s_v = quad(lagrangian, t_i, t_f, **opts)[0]
    s_free = quad(free_density, t_i, t_f, **opts)[0]

    def f3_at(t):
        tau = fmap.tau_of_t(t)
        return float(fmap.f3(fmap.xi_of(path.position(t), t), tau))

    return ActionReport(s_v, s_free, f3_at(t_f) - f3_at(t_i), float(t_i), float(t_f))
