"""Coordinate maps that bring the conformally rescaled lifted metric to
Minkowski form, for potentials ``V = a(t) x^2 + B(t) x + C(t)``.

A map is described by ``Omega(t)``, the new time ``tau(t) = int Omega dt`` and
the two profiles ``h(tau)``, ``p(tau)``. The spatial and null coordinates are
then fixed:

    x = xi / sqrt(Omega) + h
    u = v + xi^2 Omega_tau / (4 Omega) - sqrt(Omega) h_tau xi + p
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from . import expr as ex
from .expr import Expr
from .numerics import derivative, solve_dense
from .schwarzian import DomainClipped, solve_hill


class MapDomainError(ValueError):
    """Coordinate outside the patch on which a map is defined."""


@dataclass(frozen=True)
class PotentialSpec:
    """Quadratic-in-x potential ``a(t) x^2 + B(t) x + C(t)``."""

    a: Expr = ex.ZERO
    B: Expr = ex.ZERO
    C: Expr = ex.ZERO
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("a", "B", "C"):
            value = ex.as_expr(getattr(self, name))
            object.__setattr__(self, name, value)
            extra = ex.free_symbols(value) - {"t"} - set(self.params)
            if extra:
                raise ValueError(f"coefficient {name} may depend on t only, found {sorted(extra)}")

    @classmethod
    def parse(cls, a="0", B="0", C="0", params=None) -> "PotentialSpec":
        params = dict(params or {})
        names = list(params)
        return cls(ex.parse(str(a), names), ex.parse(str(B), names),
                   ex.parse(str(C), names), params)

    @classmethod
    def oscillator(cls, omega, params=None) -> "PotentialSpec":
        """``V = omega(t)^2 x^2 / 2``."""
        w = ex.as_expr(omega)
        return cls(ex.mul(ex.as_expr(ex.Fraction(1, 2)), ex.power(w, 2)), params=dict(params or {}))

    def potential(self) -> Expr:
        return ex.add(ex.add(ex.mul(self.a, ex.power(ex.X, 2)), ex.mul(self.B, ex.X)), self.C)

    def coefficient(self, name: str) -> Callable:
        return ex.lambdify(getattr(self, name), ("t",), self.params)

    def potential_callable(self) -> Callable:
        return ex.lambdify(self.potential(), ("x", "t"), self.params)


def _interval_check(values, lo, hi, what, closed=True):
    v = np.asarray(values, dtype=float)
    bad = (v < lo) | (v > hi) if closed else (v <= lo) | (v >= hi)
    if np.any(bad | ~np.isfinite(v)):
        raise MapDomainError(f"{what} outside ({lo}, {hi})")
    return v


@dataclass(frozen=True)
class FlatteningMap:
    """A flattening coordinate map. All callables are vectorized."""

    family: str
    parameters: dict
    omega: Callable          # Omega(t)
    domega_dt: Callable      # dOmega/dt
    tau_of_t: Callable
    t_of_tau: Callable
    h: Callable              # h(tau)
    dh: Callable             # dh/dtau
    p: Callable              # p(tau)
    t_domain: tuple
    tau_domain: tuple
    tau_sample: tuple        # comfortable interval for randomized checks

    def omega_tau(self, tau):
        """``Omega`` as a function of the new time."""
        return self.omega(self.t_of_tau(tau))

    def domega_dtau(self, tau):
        t = self.t_of_tau(tau)
        return self.domega_dt(t) / self.omega(t)

    def f1(self, xi, tau):
        om = self.omega_tau(tau)
        return np.asarray(xi) / np.sqrt(om) + self.h(tau)

    def f2(self, xi, tau):
        return np.broadcast_to(self.t_of_tau(tau), np.broadcast(xi, tau).shape) + 0.0

    def f3(self, xi, tau):
        t = self.t_of_tau(tau)
        om = self.omega(t)
        dom_tau = self.domega_dt(t) / om
        xi = np.asarray(xi)
        return xi ** 2 * dom_tau / (4 * om) - np.sqrt(om) * self.dh(tau) * xi + self.p(tau)

    def xi_of(self, x, t):
        return (np.asarray(x) - self.h(self.tau_of_t(t))) * np.sqrt(self.omega(t))

    def forward(self, t, u, x):
        """``(t, u, x) -> (tau, v, xi)``."""
        tau = self.tau_of_t(t)
        xi = self.xi_of(x, t)
        return tau, np.asarray(u) - self.f3(xi, tau), xi

    def inverse(self, tau, v, xi):
        """``(tau, v, xi) -> (t, u, x)``."""
        return self.f2(xi, tau), np.asarray(v) + self.f3(xi, tau), self.f1(xi, tau)

    def descriptor(self, n_samples: int = 11) -> dict:
        lo, hi = self.tau_sample
        taus = np.linspace(lo, hi, n_samples)
        ts = self.t_of_tau(taus)
        samples = [
            {"t": float(t), "tau": float(tau), "omega": float(o), "h": float(h), "p": float(p)}
            for t, tau, o, h, p in zip(ts, taus, self.omega(ts), self.h(taus), self.p(taus))
        ]
        return {
            "family": self.family,
            "parameters": {k: v for k, v in self.parameters.items()},
            "domain": {"t": [float(v) for v in self.t_domain],
                       "tau": [float(v) for v in self.tau_domain]},
            "samples": samples,
        }


# ---------------------------------------------------------------- closed forms

def map_ho_const(omega0: float, c1: float = 0.0, c2: float = 0.0, c3: float = 0.0) -> FlatteningMap:
    """Constant-frequency oscillator ``V = omega0^2 x^2 / 2`` on ``|t| < pi/(2 omega0)``."""
    w = float(omega0)
    if not w > 0:
        raise ValueError("omega0 must be positive")
    half = math.pi / (2 * w)

    def tau_of_t(t):
        t = _interval_check(t, -half, half, "t", closed=False)
        return np.tan(w * t) / w

    def t_of_tau(tau):
        return np.arctan(w * np.asarray(tau, dtype=float)) / w

    def omega(t):
        return 1.0 / np.cos(w * np.asarray(t, dtype=float)) ** 2

    def domega_dt(t):
        wt = w * np.asarray(t, dtype=float)
        return 2 * w * np.sin(wt) / np.cos(wt) ** 3

    def h(tau):
        tau = np.asarray(tau, dtype=float)
        return (c1 + c2 * w * tau) / np.sqrt(1 + (w * tau) ** 2)

    def dh(tau):
        tau = np.asarray(tau, dtype=float)
        return (c2 * w - c1 * w ** 2 * tau) / (1 + (w * tau) ** 2) ** 1.5

    def p(tau):
        tau = np.asarray(tau, dtype=float)
        return ((c1 ** 2 - c2 ** 2) * w ** 2 * tau - 2 * c1 * c2 * w) / (2 * (1 + (w * tau) ** 2)) + c3

    span = min(2.0, math.tan(0.4 * math.pi) / w)
    return FlatteningMap("ho_const", {"omega0": w, "c1": c1, "c2": c2, "c3": c3},
                         omega, domega_dt, tau_of_t, t_of_tau, h, dh, p,
                         (-half, half), (-math.inf, math.inf), (-span, span))


def _constant_value(e: Expr, params) -> float | None:
    if "t" in ex.free_symbols(e):
        return None
    return float(ex.evaluate(e, dict(params or {})))


def map_linear_galilean(B, params=None, h0: float = 0.0, h1: float = 0.0,
                        tau_range=(-5.0, 5.0), tol: float = 1e-12) -> FlatteningMap:
    """Linear potential ``B(t) x`` with ``Omega = 1`` and ``h'' = -B``.

    ``h(0) = h0``, ``h'(0) = h1``, ``p(0) = 0``. A constant ``B`` with zero
    constants uses exact polynomials; otherwise ``h`` and ``p`` come from one
    dense ODE solve on ``tau_range``.
    """
    B = ex.as_expr(B)
    params = dict(params or {})
    g = _constant_value(B, params)
    ident = lambda t: np.asarray(t, dtype=float) + 0.0  # noqa: E731
    one = lambda t: np.ones_like(np.asarray(t, dtype=float))  # noqa: E731
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    pars = {"B": ex.to_string(B), "h0": h0, "h1": h1}

    if g is not None and h0 == 0 and h1 == 0:
        def h(tau):
            return -0.5 * g * np.asarray(tau, dtype=float) ** 2

        def dh(tau):
            return -g * np.asarray(tau, dtype=float)

        def p(tau):
            return -g * g * np.asarray(tau, dtype=float) ** 3 / 3

        inf = (-math.inf, math.inf)
        return FlatteningMap("linear_galilean", pars, one, zero, ident, ident, h, dh, p,
                             inf, inf, (-2.0, 2.0))

    lo, hi = map(float, tau_range)
    b = ex.lambdify(B, ("t",), params)

    def rhs(tau, y):
        bt = b(tau)
        return [y[1], -bt, -0.5 * y[1] ** 2 + bt * y[0]]

    sol = solve_dense(rhs, 0.0, [h0, h1, 0.0], lo, hi, rtol=tol, atol=tol / 100)

    def inside(tau):
        return _interval_check(tau, lo, hi, "tau")

    return FlatteningMap(
        "linear_galilean", pars, one, zero, lambda t: inside(t) + 0.0, lambda tau: inside(tau) + 0.0,
        lambda tau: sol(inside(tau))[0], lambda tau: sol(inside(tau))[1],
        lambda tau: sol(inside(tau))[2], (lo, hi), (lo, hi), (0.8 * lo, 0.8 * hi))


def map_linear_mobius(B, k: float, c: float, d: float, c1: float = 0.0, c2: float = 0.0,
                      params=None, tau_min: float = 0.1, tol: float = 1e-12) -> FlatteningMap:
    """Linear potential with the inversion-type time map ``t = -k/(c^2 tau) - d/c``.

    Requires ``k > 0`` (so that ``Omega = c^2 tau^2 / k`` is positive) and uses
    the half-line ``c tau > 0``. Integration constants of the nested quadratures
    vanish as ``tau -> infinity``; with ``s = 1/tau``:

        J(s) = int_0^s B(t(s')) ds',   K(s) = int_0^s J
        h    = -(k^2/c^4) K(1/tau) - c1/tau + c2
    """
    B = ex.as_expr(B)
    params = dict(params or {})
    k, c, d = float(k), float(c), float(d)
    if c == 0:
        raise ValueError("c must be nonzero; use map_linear_galilean for c = 0")
    if not k > 0:
        raise ValueError("k must be positive for a positive conformal factor")
    sign = 1.0 if c > 0 else -1.0
    lam = k * k / c ** 4
    root_k = math.sqrt(k)
    t_inf = -d / c
    g = _constant_value(B, params)

    def sigma_of(tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau == 0):
            raise ex.DomainError("the inversion map is singular at tau = 0")
        if np.any(sign * tau <= 0):
            raise MapDomainError(f"tau must satisfy c*tau > 0 (c = {c})")
        if g is None and np.any(np.abs(tau) < tau_min):
            raise MapDomainError(f"|tau| below tau_min = {tau_min}")
        return 1.0 / tau

    if g is not None:
        def jkp(s):
            J = g * s
            K = 0.5 * g * s ** 2
            P = (-(c * c / (2 * k)) * (lam ** 2 * g * g * s ** 3 / 3 + lam * g * c1 * s ** 2 + c1 * c1 * s)
                 + (k * g / (c * c)) * (-lam * g * s ** 3 / 6 - c1 * s ** 2 / 2 + c2 * s))
            return J, K, P
    else:
        b = ex.lambdify(B, ("t",), params)

        def rhs(s, y):
            bt = b(-k * s / (c * c) + t_inf)
            hs = -lam * y[1] - c1 * s + c2
            return [bt, y[0], -(c * c / (2 * k)) * (lam * y[0] + c1) ** 2 + (k / (c * c)) * bt * hs]

        s_max = 1.0 / tau_min
        lo, hi = (0.0, s_max) if sign > 0 else (-s_max, 0.0)
        sol = solve_dense(rhs, 0.0, [0.0, 0.0, 0.0], lo, hi, rtol=tol, atol=tol / 100)

        def jkp(s):
            return tuple(sol(s))

    def tau_of_t(t):
        t = np.asarray(t, dtype=float)
        shifted = c * t + d
        if np.any(sign * shifted >= 0):
            raise MapDomainError(f"t must satisfy c*t + d < 0 on this branch (c*t+d = 0 is tau = infinity)")
        tau = -k / (c * shifted)
        sigma_of(tau)
        return tau

    def t_of_tau(tau):
        return -k * sigma_of(tau) / (c * c) + t_inf

    def omega(t):
        return k / (c * np.asarray(t, dtype=float) + d) ** 2

    def domega_dt(t):
        return -2 * k * c / (c * np.asarray(t, dtype=float) + d) ** 3

    def h(tau):
        s = sigma_of(tau)
        return -lam * jkp(s)[1] - c1 * s + c2

    def dh(tau):
        s = sigma_of(tau)
        return s * s * (lam * jkp(s)[0] + c1)

    def p(tau):
        return -jkp(sigma_of(tau))[2]

    tmin = tau_min if g is None else 0.0
    tau_domain = (tmin, math.inf) if sign > 0 else (-math.inf, -tmin)
    t_far = -k / (c * c * tau_min) + t_inf if g is None else -sign * math.inf
    t_domain = tuple(sorted((t_far, t_inf)))
    base = max(tau_min, 1.0)
    tau_sample = (base, 4 * base) if sign > 0 else (-4 * base, -base)
    pars = {"B": ex.to_string(B), "k": k, "c": c, "d": d, "c1": c1, "c2": c2}
    return FlatteningMap("linear_mobius", pars, omega, domega_dt, tau_of_t, t_of_tau,
                         h, dh, p, t_domain, tau_domain, tau_sample)


# ------------------------------------------------------------ general builder

def build_map_general(spec: PotentialSpec, t_range=(-1.0, 1.0), h0: float = 0.0,
                      h1: float = 0.0, tol: float = 1e-10) -> FlatteningMap:
    """Numerical map for an arbitrary admissible potential.

    The Hill equation with ``omega^2 = 2a`` gives ``tau = u1/u2`` and
    ``Omega = 1/u2^2``. The profile equation for ``h`` is integrated in the
    original time, where ``H(t) = h(tau(t))`` obeys ``H'' + 2a H = -B``, and
    ``P(t) = p(tau(t))`` obeys ``P' = -H'^2/2 + a H^2 + B H + C``. Initial
    data at ``t = 0``: ``h = h0``, ``dh/dtau = h1``, ``p = 0``.
    """
    hill = solve_hill(omega_sq=ex.mul(ex.as_expr(2), spec.a), t_range=t_range, tol=tol,
                      params=spec.params)
    a_fn, b_fn, c_fn = (spec.coefficient(n) for n in ("a", "B", "C"))

    def rhs(t, y):
        at, bt = a_fn(t), b_fn(t)
        return [y[1], -2 * at * y[0] - bt,
                -0.5 * y[1] ** 2 + at * y[0] ** 2 + bt * y[0] + c_fn(t)]

    forced = solve_dense(rhs, 0.0, [h0, h1, 0.0], hill.t_lo, hill.t_hi, rtol=tol, atol=tol / 100)
    lo, hi = hill.patch
    closed_lo, closed_hi = lo == hill.t_lo, hi == hill.t_hi

    def check_t(t):
        t = np.asarray(t, dtype=float)
        below = t < lo if closed_lo else t <= lo
        above = t > hi if closed_hi else t >= hi
        if np.any(below | above):
            raise DomainClipped("time outside the coordinate patch", (lo, hi))
        return t

    def tau_raw(t):
        s = hill.state(t)
        return s[0] / s[2]

    def tau_of_t(t):
        return tau_raw(check_t(t))

    def omega(t):
        return 1.0 / hill.u2(check_t(t)) ** 2

    def domega_dt(t):
        s = hill.state(check_t(t))
        return -2 * s[3] / s[2] ** 3

    width = hi - lo
    t_tab = np.linspace(lo + (0 if closed_lo else 1e-6 * width),
                        hi - (0 if closed_hi else 1e-6 * width), 4001)
    tau_tab = tau_raw(t_tab)
    tau_lo = float(tau_tab[0]) if closed_lo else -math.inf
    tau_hi = float(tau_tab[-1]) if closed_hi else math.inf

    def t_of_tau(tau):
        tau = np.asarray(tau, dtype=float)
        if np.any((tau < tau_lo) | (tau > tau_hi) | ~np.isfinite(tau)):
            raise DomainClipped(f"tau outside ({tau_lo}, {tau_hi})", (lo, hi))
        t = np.interp(tau, tau_tab, t_tab)
        for _ in range(60):
            s = hill.state(t)
            step = (s[0] / s[2] - tau) * s[2] ** 2
            t_new = np.clip(t - step, t_tab[0], t_tab[-1])
            done = np.max(np.abs(t_new - t), initial=0.0) < 1e-15 * max(1.0, width)
            t = t_new
            if done:
                break
        return t

    def h(tau):
        return forced(t_of_tau(tau))[0]

    def dh(tau):
        t = t_of_tau(tau)
        return forced(t)[1] * hill.u2(t) ** 2

    def p(tau):
        return forced(t_of_tau(tau))[2]

    sample = tuple(float(v) for v in tau_raw(np.array([0.8 * lo, 0.8 * hi])))
    pars = {"a": ex.to_string(spec.a), "B": ex.to_string(spec.B), "C": ex.to_string(spec.C),
            "h0": h0, "h1": h1, "t_range": [float(v) for v in t_range]}
    return FlatteningMap("general", pars, omega, domega_dt, tau_of_t, t_of_tau, h, dh, p,
                         (lo, hi), (tau_lo, tau_hi), sample)


def map_ho_timedep(omega, h0: float | None = None, h1: float | None = None, params=None,
                   t_range=(-1.0, 1.0), tol: float = 1e-10) -> FlatteningMap:
    """Oscillator with frequency ``omega(t)``.

    Without ``h0``/``h1`` the profile ``h`` is identically zero (``xi = x/u2``);
    giving either selects the initial-value profile with the other defaulting to 0.
    """
    zero_profile = h0 is None and h1 is None
    spec = PotentialSpec.oscillator(omega, params)
    m = build_map_general(spec, t_range, h0 or 0.0, h1 or 0.0, tol)
    pars = {"omega": ex.to_string(ex.as_expr(omega)),
            "h_choice": "zero" if zero_profile else "ivp", "h0": h0 or 0.0, "h1": h1 or 0.0,
            "t_range": [float(v) for v in t_range]}
    return replace(m, family="ho_timedep", parameters=pars)


# ------------------------------------------------------------ verification

RELATIONS = ("dxi_f1", "dtau_f2", "dxi_f2", "null_balance", "cross_term")


@dataclass(frozen=True)
class MapReport:
    residuals: dict
    n_samples: int
    tolerance: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def passed(self) -> bool:
        return self.max_residual < self.tolerance

    def to_dict(self) -> dict:
        return {"residuals": dict(self.residuals), "max_residual": self.max_residual,
                "n_samples": self.n_samples, "tolerance": self.tolerance, "passed": self.passed}


def _sample(m: FlatteningMap, n, seed, xi_range):
    rng = np.random.default_rng(seed)
    lo, hi = m.tau_sample
    return rng.uniform(*xi_range, n), rng.uniform(lo, hi, n)


def verify_map(m: FlatteningMap, spec: PotentialSpec, n_samples: int = 100, seed: int = 0,
               xi_range=(-2.0, 2.0), step: float = 1e-3, tolerance: float = 1e-6) -> MapReport:
    """Residuals of the five first-order conditions for ``d xi^2 + 2 d tau dv``.

    Derivatives of ``f1, f2, f3`` are 8th-order central differences of the
    public callables, so any construction route is checked the same way.
    """
    xi, tau = _sample(m, n_samples, seed, xi_range)
    pot = spec.potential_callable()

    def dxi(f):
        return derivative(lambda s: f(s, tau), xi, step, 1, 8)

    def dtau(f):
        return derivative(lambda s: f(xi, s), tau, step, 1, 8)

    t = m.f2(xi, tau)
    om = m.omega(t)
    v = pot(m.f1(xi, tau), t)
    f1_tau = dtau(m.f1)
    res = {
        "dxi_f1": dxi(m.f1) - 1 / np.sqrt(om),
        "dtau_f2": dtau(m.f2) - 1 / om,
        "dxi_f2": dxi(m.f2),
        "null_balance": f1_tau ** 2 + 2 / om * dtau(m.f3) - 2 * v / om ** 2,
        "cross_term": np.sqrt(om) * f1_tau + dxi(m.f3),
    }
    return MapReport({k: float(np.max(np.abs(r))) for k, r in res.items()}, n_samples, tolerance)


def profile_residuals(m: FlatteningMap, spec: PotentialSpec, n_samples: int = 50, seed: int = 0,
                      step: float = 3e-3) -> dict:
    """Max residuals of the ODE for ``h`` and the quadrature relation for ``p``.

    ``h'`` and ``h''`` are finite differences of ``m.h``; ``p'`` of ``m.p``.
    """
    rng = np.random.default_rng(seed)
    tau = rng.uniform(*m.tau_sample, n_samples)
    t = m.t_of_tau(tau)
    om = m.omega(t)
    dom = m.domega_dt(t) / om
    a, b, c = (spec.coefficient(n)(t) for n in ("a", "B", "C"))
    h = m.h(tau)
    dh = derivative(m.h, tau, step, 1, 8)
    d2h = derivative(m.h, tau, step, 2, 8)
    dp = derivative(m.p, tau, step, 1, 8)
    h_res = d2h + dom / om * dh + 2 * a * h / om ** 2 + b / om ** 2
    p_res = dp - (-0.5 * om * dh ** 2 + a * h ** 2 / om + b * h / om + c / om)
    return {"h_equation": float(np.max(np.abs(h_res))), "p_equation": float(np.max(np.abs(p_res))),
            "dh_consistency": float(np.max(np.abs(dh - m.dh(tau))))}
