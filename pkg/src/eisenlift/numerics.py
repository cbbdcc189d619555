"""Shared numerical plumbing: finite-difference stencils and dense ODE solutions."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp


class IntegratorFailure(RuntimeError):
    pass


@lru_cache(maxsize=None)
def stencil(order: int, accuracy: int = 6) -> tuple:
    """Central finite-difference weights for the ``order``-th derivative.

    Returns ``(offsets, weights)`` with the weights to be divided by ``h**order``.
    """
    half = (order + 1) // 2 + accuracy // 2 - 1
    offsets = np.arange(-half, half + 1, dtype=float)
    n = offsets.size
    vander = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    weights = np.linalg.solve(vander, rhs)
    return tuple(offsets), tuple(weights)


def derivative(f, x, h: float, order: int = 1, accuracy: int = 6):
    """Central difference derivative of ``f`` (vectorized over ``x``)."""
    offsets, weights = stencil(order, accuracy)
    x = np.asarray(x, dtype=float)
    total = 0.0
    for o, w in zip(offsets, weights):
        if w != 0.0:
            total = total + w * np.asarray(f(x + o * h))
    return total / h ** order


class DenseSolution:
    """Dense output of an IVP integrated forwards and backwards from ``t0``.

    Calling the object with an array of times returns the state with shape
    ``(n_states, len(t))``.
    """

    def __init__(self, t0, forward, backward, t_lo, t_hi, events=None):
        self.t0 = t0
        self._fwd = forward
        self._bwd = backward
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.events = events or []
        self.nfev = 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        if np.any(tt < self.t_lo - 1e-12) or np.any(tt > self.t_hi + 1e-12):
            raise ValueError(f"time outside integrated range [{self.t_lo}, {self.t_hi}]")
        out = None
        for sol, mask in ((self._fwd, tt >= self.t0), (self._bwd, tt < self.t0)):
            if sol is None or not np.any(mask):
                continue
            vals = sol(tt[mask])
            if out is None:
                out = np.empty((vals.shape[0], tt.size))
            out[:, mask] = vals
        return out[:, 0] if scalar else out


def solve_dense(rhs, t0: float, y0, t_lo: float, t_hi: float, rtol: float = 1e-10,
                atol: float = 1e-12, events=None) -> DenseSolution:
    """Integrate ``y' = rhs(t, y)`` on ``[t_lo, t_hi]`` starting at interior ``t0``.

    Uses the Dormand-Prince 8(5,3) pair with its 7th-order dense output.
    ``events`` are located on both sides; they never terminate integration.
    """
    if not t_lo <= t0 <= t_hi:
        raise ValueError("t0 must lie inside [t_lo, t_hi]")
    sols = []
    found = []
    for end in (t_hi, t_lo):
        if end == t0:
            sols.append(None)
            continue
        res = solve_ivp(rhs, (t0, end), y0, method="DOP853", dense_output=True,
                        rtol=rtol, atol=atol, events=events)
        if res.status != 0:
            raise IntegratorFailure(res.message)
        sols.append(res.sol)
        if events is not None:
            found.append(res.t_events)
    ev = []
    if events is not None:
        n = len(events) if isinstance(events, (list, tuple)) else 1
        for k in range(n):
            ev.append(np.sort(np.concatenate([f[k] for f in found])) if found else np.array([]))
    return DenseSolution(t0, sols[0], sols[1], t_lo, t_hi, ev)
