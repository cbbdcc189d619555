"""Schwarzian derivative and the Hill-equation route from a frequency profile
to the conformal factor.

For ``u'' + w(t)^2 u = 0`` with ``u1(0)=0, u1'(0)=1, u2(0)=1, u2'(0)=0`` the
ratio ``Phi = u1/u2`` has Schwarzian ``2 w^2`` and ``Omega = Phi' = 1/u2^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import expr as ex
from .expr import Expr
from .numerics import DenseSolution, derivative, solve_dense


class DomainClipped(ValueError):
    """Query outside the coordinate patch bounded by zeros of ``u2``."""

    def __init__(self, message: str, boundaries: tuple):
        super().__init__(f"{message}; patch is {boundaries}")
        self.boundaries = boundaries


def schwarzian_derivative(phi: Expr, var: str = "t") -> Expr:
    """``Phi'''/Phi' - 3/2 (Phi''/Phi')^2`` as an expression."""
    d1 = ex.diff(phi, var)
    d2 = ex.diff(d1, var)
    d3 = ex.diff(d2, var)
    return ex.sub(ex.div(d3, d1),
                  ex.mul(ex.Constant(ex.Fraction(3, 2)), ex.power(ex.div(d2, d1), 2)))


def schwarzian_numeric(f: Callable, t, h: float = 0.02, accuracy: int = 10):
    """Schwarzian of a sampled function from central differences of its values."""
    d1 = derivative(f, t, h, 1, accuracy)
    d2 = derivative(f, t, h, 2, accuracy)
    d3 = derivative(f, t, h, 3, accuracy)
    return d3 / d1 - 1.5 * (d2 / d1) ** 2


def _profile(value, params=None) -> Callable:
    if value is None:
        return None
    if isinstance(value, (int, float)):
        value = ex.as_expr(value)
    if isinstance(value, Expr):
        if ex.free_symbols(value) - {"t"} - set(params or {}):
            raise ValueError(f"frequency profile must depend on t only: {value}")
        return ex.lambdify(value, ("t",), params)
    return value


@dataclass(frozen=True)
class HillSolution:
    omega_profile: object
    t_lo: float
    t_hi: float
    solution: DenseSolution
    wronskian_drift: float
    u2_zeros: tuple

    def state(self, t):
        """Rows ``u1, u1', u2, u2'``."""
        return self.solution(t)

    def u1(self, t):
        return self.solution(t)[0]

    def u2(self, t):
        return self.solution(t)[2]

    def wronskian(self, t):
        u1, du1, u2, du2 = self.solution(t)
        return u2 * du1 - u1 * du2

    @property
    def patch(self) -> tuple:
        """Largest interval around 0 inside the solved range with ``u2 > 0``."""
        below = [z for z in self.u2_zeros if z < 0]
        above = [z for z in self.u2_zeros if z > 0]
        return (max(below) if below else self.t_lo, min(above) if above else self.t_hi)


def solve_hill(omega=None, t_range=(-1.0, 1.0), tol: float = 1e-10, *, omega_sq=None,
               params=None) -> HillSolution:
    """Integrate ``u'' + w^2 u = 0`` for the two normalized solutions.

    Give either ``omega`` (expression, number or callable of t) or ``omega_sq``
    directly; the latter may change sign. ``tol`` is used as both relative and
    absolute tolerance (absolute tolerance is ``tol/100``).
    """
    if (omega is None) == (omega_sq is None):
        raise ValueError("give exactly one of omega and omega_sq")
    if omega is not None:
        w = _profile(omega, params)
        w2 = lambda t: w(t) ** 2  # noqa: E731
        profile = omega
    else:
        w2 = _profile(omega_sq, params)
        profile = omega_sq
    t_lo, t_hi = map(float, t_range)

    def rhs(t, y):
        k = w2(t)
        return [y[1], -k * y[0], y[3], -k * y[2]]

    def u2_zero(t, y):
        return y[2]

    sol = solve_dense(rhs, 0.0, [0.0, 1.0, 1.0, 0.0], t_lo, t_hi, rtol=tol, atol=tol / 100,
                      events=[u2_zero])
    grid = np.linspace(t_lo, t_hi, 2001)
    u1, du1, u2, du2 = sol(grid)
    drift = float(np.max(np.abs(u2 * du1 - u1 * du2 - 1.0)))
    zeros = tuple(float(z) for z in sol.events[0])
    return HillSolution(profile, t_lo, t_hi, sol, drift, zeros)


class PhiOmega(NamedTuple):
    phi: Callable
    omega: Callable
    domain: tuple


def phi_omega_from_hill(h: HillSolution) -> PhiOmega:
    """``Phi = u1/u2`` and ``Omega = 1/u2^2`` restricted to the patch around 0."""
    lo, hi = h.patch

    def check(t):
        t = np.asarray(t, dtype=float)
        # ends at zeros of u2 are excluded, ends of the solved range are not
        below = t <= lo if lo != h.t_lo else t < lo
        above = t >= hi if hi != h.t_hi else t > hi
        if np.any(below | above):
            raise DomainClipped("time outside the coordinate patch", (lo, hi))
        return t

    def phi(t):
        s = h.state(check(t))
        return s[0] / s[2]

    def omega(t):
        return 1.0 / h.state(check(t))[2] ** 2

    return PhiOmega(phi, omega, (lo, hi))
