"""Wave functions carried between the free particle and a mapped potential.

Units are hbar = m = 1. The canonical direction is free -> V:

    phi_V(t, x) = Omega(t)^(1/4) exp(-i f3(xi, tau)) phi_free(tau, xi)

with ``(tau, xi)`` the image of ``(t, x)``. The reverse map is its algebraic
inverse.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_banded

from . import expr as ex
from .expr import Expr
from .flatmap import FlatteningMap


class GridMismatch(ValueError):
    pass


class BoundaryLeak(UserWarning):
    pass


class Grid(NamedTuple):
    x_min: float
    x_max: float
    n: int

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)


@dataclass(frozen=True)
class WaveGrid:
    x_min: float
    x_max: float
    n: int
    values: np.ndarray
    time: float

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("a wave grid needs at least 16 points")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.n,):
            raise ValueError(f"expected {self.n} values, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def grid(self) -> Grid:
        return Grid(self.x_min, self.x_max, self.n)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def dx(self) -> float:
        return self.grid.dx

    @property
    def norm(self) -> float:
        """Trapezoid ``int |phi|^2 dx``."""
        return float(np.trapezoid(np.abs(self.values) ** 2, dx=self.dx))

    @classmethod
    def sample(cls, phi: Callable, t: float, grid) -> "WaveGrid":
        g = _as_grid(grid)
        return cls(g.x_min, g.x_max, g.n, phi(t, g.x), float(t))


def _as_grid(grid) -> Grid:
    if isinstance(grid, WaveGrid):
        return grid.grid
    x_min, x_max, n = grid
    return Grid(float(x_min), float(x_max), int(n))


def l2_distance(a: WaveGrid, b: WaveGrid) -> float:
    _same_grid(a, b)
    return float(math.sqrt(np.sum(np.abs(a.values - b.values) ** 2) * a.dx))


def _same_grid(a: WaveGrid, b: WaveGrid):
    if (a.n, a.x_min, a.x_max) != (b.n, b.x_min, b.x_max):
        raise GridMismatch("wave grids do not share the same spatial grid")


# ------------------------------------------------------------------ packets

@dataclass(frozen=True)
class FreePacket:
    """Gaussian free-particle solution centred at ``x0`` with momentum ``p0``
    and initial position spread ``s``."""

    x0: float = 0.0
    p0: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("packet width must be positive")

    def __call__(self, tau, xi):
        return eval_free_packet(self, tau, xi)


def eval_free_packet(pk: FreePacket, tau, xi):
    tau = np.asarray(tau, dtype=float)
    xi = np.asarray(xi, dtype=float)
    spread = 1 + 1j * tau / (2 * pk.s ** 2)
    shift = xi - pk.x0 - pk.p0 * tau
    amp = (2 * math.pi * pk.s ** 2) ** -0.25 / np.sqrt(spread)
    phase = 1j * pk.p0 * (xi - pk.x0) - 0.5j * pk.p0 ** 2 * tau
    return amp * np.exp(-shift ** 2 / (4 * pk.s ** 2 * spread) + phase)


def oscillator_ground_state(omega0: float = 1.0) -> Callable:
    """``(w/pi)^(1/4) exp(-w x^2/2 - i w t/2)`` for ``V = w^2 x^2/2``."""
    w = float(omega0)

    def phi(t, x):
        x = np.asarray(x, dtype=float)
        return (w / math.pi) ** 0.25 * np.exp(-0.5 * w * x ** 2 - 0.5j * w * np.asarray(t, dtype=float))

    return phi


# ------------------------------------------------------------------ transport

def potential_wavefunction(fmap: FlatteningMap, phi_free: Callable) -> Callable:
    """``phi_V(t, x)`` from a free solution ``phi_free(tau, xi)``."""

    def phi(t, x):
        tau = fmap.tau_of_t(t)
        xi = fmap.xi_of(x, t)
        om = fmap.omega(t)
        return om ** 0.25 * np.exp(-1j * fmap.f3(xi, tau)) * phi_free(tau, xi)

    return phi


def free_wavefunction(fmap: FlatteningMap, phi_v: Callable) -> Callable:
    """Inverse of :func:`potential_wavefunction`."""

    def phi(tau, xi):
        t = fmap.t_of_tau(tau)
        om = fmap.omega(t)
        return om ** -0.25 * np.exp(1j * fmap.f3(xi, tau)) * phi_v(t, fmap.f1(xi, tau))

    return phi


def map_free_to_potential(fmap: FlatteningMap, phi_free: Callable, t: float, grid) -> WaveGrid:
    return WaveGrid.sample(potential_wavefunction(fmap, phi_free), t, grid)


def map_potential_to_free(fmap: FlatteningMap, phi_v: Callable, tau: float, grid) -> WaveGrid:
    return WaveGrid.sample(free_wavefunction(fmap, phi_v), tau, grid)


def phase_identity_error(fmap: FlatteningMap, phi_free: Callable, tau, xi) -> float:
    """Max of ``|arg(phi_V/phi_free) + f3|`` wrapped to ``(-pi, pi]`` at matched points."""
    tau = np.asarray(tau, dtype=float)
    xi = np.asarray(xi, dtype=float)
    t = fmap.f2(xi, tau)
    x = fmap.f1(xi, tau)
    ratio = potential_wavefunction(fmap, phi_free)(t, x) / phi_free(tau, xi)
    diff = np.angle(ratio) + fmap.f3(xi, tau)
    return float(np.max(np.abs(np.angle(np.exp(1j * diff)))))


# ------------------------------------------------------------------ residuals

def sample_series(phi: Callable, t: float, delta: float, grid) -> tuple:
    """Three slices at ``t - delta, t, t + delta``."""
    return tuple(WaveGrid.sample(phi, t + k * delta, grid) for k in (-1, 0, 1))


def schrodinger_residual(series: Sequence[WaveGrid], V: Expr, params=None) -> float:
    """Discrete L2 norm of ``i phi_t + phi_xx/2 - V phi`` at the middle slice.

    Second-order central differences in both t and x, interior points only.
    """
    if len(series) != 3:
        raise GridMismatch("need exactly three time slices")
    before, mid, after = series
    _same_grid(before, mid)
    _same_grid(mid, after)
    delta = mid.time - before.time
    if not delta > 0 or not math.isclose(after.time - mid.time, delta, rel_tol=1e-9, abs_tol=1e-15):
        raise GridMismatch("time slices must be equally spaced and increasing")
    dx = mid.dx
    phi = mid.values
    dt_phi = (after.values - before.values) / (2 * delta)
    dxx = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / dx ** 2
    x = mid.x[1:-1]
    pot = ex.lambdify(V, ("x", "t"), params)(x, mid.time)
    res = 1j * dt_phi[1:-1] + 0.5 * dxx - pot * phi[1:-1]
    return float(math.sqrt(np.sum(np.abs(res) ** 2) * dx))


def richardson_slope(steps, residuals) -> float:
    """Least-squares slope of ``log residual`` against ``log step``."""
    steps = np.log(np.asarray(steps, dtype=float))
    res = np.log(np.asarray(residuals, dtype=float))
    return float(np.polyfit(steps, res, 1)[0])


# ------------------------------------------------------------------ propagation

def crank_nicolson(phi0: WaveGrid, V: Expr, t0: float, t1: float, steps: int, params=None,
                   edge_threshold: float = 1e-10) -> WaveGrid:
    """Propagate ``i phi_t = -phi_xx/2 + V phi`` with homogeneous Dirichlet walls.

    The potential is sampled at the midpoint of each step. A ``BoundaryLeak``
    warning is emitted once if the amplitude next to a wall exceeds
    ``edge_threshold``.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    x = phi0.x[1:-1]
    m = x.size
    dx = phi0.dx
    dt = (t1 - t0) / steps
    pot = ex.lambdify(V, ("x", "t"), params)
    static = not ex.depends_on(V, "t")
    psi = phi0.values[1:-1].copy()
    off = -0.5 / dx ** 2
    lhs = np.zeros((3, m), dtype=complex)
    lhs[0, 1:] = 0.5j * dt * off
    lhs[2, :-1] = 0.5j * dt * off
    leaked = False
    v = pot(x, t0 + 0.5 * dt) + 0 * x if static else None
    for k in range(steps):
        if not static:
            v = pot(x, t0 + (k + 0.5) * dt) + 0 * x
        diag = 1.0 / dx ** 2 + v
        hpsi = diag * psi
        hpsi[1:] += off * psi[:-1]
        hpsi[:-1] += off * psi[1:]
        rhs = psi - 0.5j * dt * hpsi
        lhs[1] = 1 + 0.5j * dt * diag
        psi = solve_banded((1, 1), lhs, rhs, check_finite=False)
        if not leaked and max(abs(psi[0]), abs(psi[-1])) > edge_threshold:
            leaked = True
            warnings.warn(f"wave function reached the wall (|phi| > {edge_threshold:g})",
                          BoundaryLeak, stacklevel=2)
    out = np.zeros(phi0.n, dtype=complex)
    out[1:-1] = psi
    return WaveGrid(phi0.x_min, phi0.x_max, phi0.n, out, float(t1))


# ------------------------------------------------------------------ lifted field

def kg_reduction_check(V: Expr, omega: Expr, phi: Callable, t, x, u=0.0, step: float = 1e-3,
                       params=None) -> float:
    """Max modulus of the massless wave operator of the lifted metric applied to
    ``Omega^(-1/4) e^(iu) phi(t, x)`` (operator multiplied through by ``Omega^(3/2)``).

    Derivatives in ``u`` are exact (``d/du -> i``); ``t`` and ``x``
    derivatives are second-order central differences with ``step``.
    """
    omega = ex.as_expr(omega)
    pot = ex.lambdify(V, ("x", "t"), params)
    om = ex.lambdify(omega, ("t",), params)
    droot = ex.lambdify(ex.diff(ex.sqrt(omega), "t"), ("t",), params)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)

    def field(tt, xx):
        return om(tt) ** -0.25 * np.exp(1j * u) * phi(tt, xx)

    h = step
    f = field(t, x)
    f_xx = (field(t, x + h) - 2 * f + field(t, x - h)) / h ** 2
    f_t = (field(t + h, x) - field(t - h, x)) / (2 * h)
    root = np.sqrt(om(t))
    res = root * f_xx + 2 * root * pot(x, t) * (-f) + droot(t) * (1j * f) + 2 * root * (1j * f_t)
    return float(np.max(np.abs(res)))


# ------------------------------------------------------------------ norms

def _peak(fn, lo=-60.0, hi=60.0, n=4001) -> float:
    grid = np.linspace(lo, hi, n)
    return float(grid[np.argmax(fn(grid))])


def norm_transport_check(fmap: FlatteningMap, phi_free: Callable, tau: float) -> tuple:
    """``(int |phi_free(tau, .)|^2 dxi, int |phi_V(t(tau), .)|^2 dx)`` by adaptive quadrature."""
    tau = float(tau)
    t = float(fmap.t_of_tau(tau))
    phi_v = potential_wavefunction(fmap, phi_free)
    dens_free = lambda s: np.abs(phi_free(tau, s)) ** 2  # noqa: E731
    dens_v = lambda s: np.abs(phi_v(t, s)) ** 2  # noqa: E731
    xi_c = _peak(dens_free)
    x_c = float(fmap.f1(xi_c, tau))
    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=400)

    def total(fn, centre):
        left = quad(lambda s: float(fn(s)), -np.inf, centre, **opts)[0]
        right = quad(lambda s: float(fn(s)), centre, np.inf, **opts)[0]
        return left + right

    return total(dens_free, xi_c), total(dens_v, x_c)
