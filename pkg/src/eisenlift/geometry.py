"""Lifted metric of a one-dimensional system and its curvature tensors.

Coordinates are ordered ``(t, u, x)``. The metric is

    ds^2 = Omega(t) * (dx^2 + 2 dt du - 2 V(x, t) dt^2)

All tensors are built exactly from :mod:`eisenlift.expr` differentiation.
Vanishing is decided by evaluation at random points, never by symbolic
simplification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import ZERO, Expr, add, div, mul, neg, sub

COORDS = ("t", "u", "x")
T, U, X = range(3)

DEFAULT_BOX = {"x": (-1.0, 1.0), "t": (-1.0, 1.0)}


class OmegaDependsOnX(ValueError):
    pass


class EvaluationDomainError(ex.DomainError):
    pass


def partial(e: Expr, index: int) -> Expr:
    """Coordinate derivative; nothing depends on ``u``."""
    if index == U:
        return ZERO
    return ex.diff(e, COORDS[index])


def _sum(terms) -> Expr:
    total = ZERO
    for term in terms:
        total = add(total, term)
    return total


class TensorField:
    """Dense 3^rank array of expressions.

    ``variance`` is a string of ``"u"``/``"l"`` per index. ``symmetries`` is a
    sequence of ``(i, j, sign)``: writing a component also writes its image
    with indices ``i`` and ``j`` swapped, multiplied by ``sign``.
    """

    def __init__(self, name: str, variance: str, symmetries: Sequence[tuple] = ()):
        self.name = name
        self.variance = variance
        self.rank = len(variance)
        self.symmetries = tuple(symmetries)
        self.components = np.full((3,) * self.rank, ZERO, dtype=object)

    def __getitem__(self, idx) -> Expr:
        return self.components[idx]

    def __setitem__(self, idx, value: Expr):
        idx = tuple(idx)
        self.components[idx] = value
        for i, j, sign in self.symmetries:
            image = list(idx)
            image[i], image[j] = image[j], image[i]
            self.components[tuple(image)] = value if sign > 0 else neg(value)

    def indices(self):
        return list(np.ndindex(*self.components.shape))

    def nonzero(self) -> list:
        """Indices of components that are not structurally zero."""
        return [i for i in self.indices() if not (isinstance(self[i], ex.Constant) and self[i].value == 0)]

    def evaluate(self, points: Mapping[str, np.ndarray], params: Mapping[str, float] | None = None):
        """Values of all components, shape ``(3,)*rank + (n,)``."""
        idx = self.indices()
        fn = ex.lambdify([self[i] for i in idx], ("t", "x"), params)
        t = np.asarray(points["t"], dtype=float)
        x = np.asarray(points["x"], dtype=float)
        vals = fn(x * 0 + t, t * 0 + x)
        out = np.empty((3,) * self.rank + t.shape)
        for i, v in zip(idx, vals):
            out[i] = v
        return out


@dataclass(frozen=True)
class EisenhartMetric:
    potential: Expr
    omega: Expr
    components: tuple
    inverse: tuple
    determinant: Expr

    def g(self, i, j) -> Expr:
        return self.components[i][j]

    def ginv(self, i, j) -> Expr:
        return self.inverse[i][j]


def build_metric(V: Expr, omega: Expr = ex.ONE) -> EisenhartMetric:
    """Metric components in ``(t, u, x)`` order and the adjugate inverse."""
    if ex.depends_on(omega, "x"):
        raise OmegaDependsOnX(f"conformal factor depends on x: {omega}")
    if ex.depends_on(omega, "tau") or ex.depends_on(V, "tau"):
        raise ValueError("metric data must be expressed in (x, t)")
    g = [[ZERO] * 3 for _ in range(3)]
    g[T][T] = mul(ex.Constant(ex.Fraction(-2)), mul(omega, V))
    g[T][U] = g[U][T] = omega
    g[X][X] = omega
    cof = [[ZERO] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != i]
            c = [k for k in range(3) if k != j]
            minor = sub(mul(g[r[0]][c[0]], g[r[1]][c[1]]), mul(g[r[0]][c[1]], g[r[1]][c[0]]))
            cof[i][j] = minor if (i + j) % 2 == 0 else neg(minor)
    det = _sum(mul(g[0][j], cof[0][j]) for j in range(3))
    inv = [[div(cof[j][i], det) for j in range(3)] for i in range(3)]
    return EisenhartMetric(V, omega, tuple(map(tuple, g)), tuple(map(tuple, inv)), det)


def christoffel(m: EisenhartMetric) -> TensorField:
    """Second-kind symbols ``G[mu, nu, lam]``, symmetric in the lower pair."""
    dg = [[[partial(m.g(i, j), k) for k in range(3)] for j in range(3)] for i in range(3)]
    first = np.full((3, 3, 3), ZERO, dtype=object)
    for s in range(3):
        for n in range(3):
            for lam in range(n, 3):
                val = mul(ex.Constant(ex.Fraction(1, 2)),
                          sub(add(dg[s][lam][n], dg[s][n][lam]), dg[n][lam][s]))
                first[s, n, lam] = first[s, lam, n] = val
    gamma = TensorField("christoffel", "ull", [(1, 2, 1)])
    for mu in range(3):
        for n in range(3):
            for lam in range(n, 3):
                gamma[mu, n, lam] = _sum(mul(m.ginv(mu, s), first[s, n, lam]) for s in range(3))
    return gamma


def riemann(m: EisenhartMetric, gamma: TensorField | None = None) -> TensorField:
    """``R[mu, nu, lam, sig] = d_lam G^mu_{nu sig} - d_sig G^mu_{nu lam} + G G - G G``."""
    G = christoffel(m) if gamma is None else gamma
    R = TensorField("riemann", "ulll", [(2, 3, -1)])
    for mu in range(3):
        for n in range(3):
            for lam in range(3):
                for sig in range(lam + 1, 3):
                    val = sub(partial(G[mu, n, sig], lam), partial(G[mu, n, lam], sig))
                    val = add(val, _sum(mul(G[mu, lam, r], G[r, n, sig]) for r in range(3)))
                    val = sub(val, _sum(mul(G[mu, sig, r], G[r, n, lam]) for r in range(3)))
                    R[mu, n, lam, sig] = val
    return R


def ricci(m: EisenhartMetric, riem: TensorField | None = None) -> TensorField:
    """Contraction of the first and third Riemann indices."""
    R = riemann(m) if riem is None else riem
    Ric = TensorField("ricci", "ll")
    for n in range(3):
        for s in range(3):
            Ric[n, s] = _sum(R[mu, n, mu, s] for mu in range(3))
    return Ric


def scalar_curvature(m: EisenhartMetric, ric: TensorField | None = None) -> Expr:
    Ric = ricci(m) if ric is None else ric
    return _sum(mul(m.ginv(i, j), Ric[i, j]) for i in range(3) for j in range(3))


def cotton(m: EisenhartMetric) -> TensorField:
    """Three-dimensional Cotton tensor, antisymmetric in its last two indices."""
    G = christoffel(m)
    Ric = ricci(m, riemann(m, G))
    Rs = scalar_curvature(m, Ric)

    def nabla_ric(lam, mu, n):
        val = partial(Ric[mu, n], lam)
        val = sub(val, _sum(mul(G[r, lam, mu], Ric[r, n]) for r in range(3)))
        return sub(val, _sum(mul(G[r, lam, n], Ric[mu, r]) for r in range(3)))

    dR = [partial(Rs, k) for k in range(3)]
    quarter = ex.Constant(ex.Fraction(1, 4))
    C = TensorField("cotton", "lll", [(1, 2, -1)])
    for mu in range(3):
        for n in range(3):
            for lam in range(n + 1, 3):
                val = sub(nabla_ric(lam, mu, n), nabla_ric(n, mu, lam))
                trace = sub(mul(m.g(mu, lam), dR[n]), mul(m.g(mu, n), dR[lam]))
                C[mu, n, lam] = add(val, mul(quarter, trace))
    return C


# ---------------------------------------------------------------------------
# randomized zero testing

_FALLBACK_SCALES = (1.0, 0.5, 0.25, 0.1)
_FALLBACK_SHIFTS = (0.0, 0.37, -0.37, 1.5, -1.5, 3.0)


def sample_points(exprs: Sequence[Expr], n: int, rng: np.random.Generator,
                  box: Mapping[str, tuple] | None = None,
                  params: Mapping[str, float] | None = None,
                  positive: Sequence[Expr] = ()) -> dict:
    """Draw ``n`` points where every expression evaluates finitely.

    Expressions in ``positive`` must additionally be strictly positive. The
    requested box is tried first, then shrunk and shifted copies of it.
    Raises :class:`EvaluationDomainError` if none yields ``n`` valid points.
    """
    box = dict(DEFAULT_BOX if box is None else box)
    checks = list(exprs) + list(positive)
    fn = ex.lambdify(checks, ("t", "x"), params) if checks else None
    for shift in _FALLBACK_SHIFTS:
        for scale in _FALLBACK_SCALES:
            lo_hi = {}
            for k in ("t", "x"):
                lo, hi = box[k]
                mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * scale
                width = hi - lo
                lo_hi[k] = (mid - half + shift * width, mid + half + shift * width)
            pts = _draw(fn, len(exprs), len(checks), n, rng, lo_hi)
            if pts is not None:
                pts["box"] = lo_hi
                return pts
    raise EvaluationDomainError("no sample box with enough valid points was found")


def _draw(fn, n_finite, n_total, n, rng, box):
    t_acc, x_acc = [], []
    have = 0
    for _ in range(20):
        t = rng.uniform(*box["t"], size=4 * n)
        x = rng.uniform(*box["x"], size=4 * n)
        ok = np.ones(t.shape, dtype=bool)
        if fn is not None:
            vals = fn(t, x)
            for k, v in enumerate(vals):
                ok &= np.isfinite(v) & (np.abs(v) < 1e8)
                if k >= n_finite:
                    ok &= v > 0
        t_acc.append(t[ok])
        x_acc.append(x[ok])
        have += int(ok.sum())
        if have >= n:
            return {"t": np.concatenate(t_acc)[:n], "x": np.concatenate(x_acc)[:n]}
    return None


@dataclass
class Condition:
    name: str
    max_abs: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_abs < self.tol)


@dataclass
class FlatnessReport:
    conformally_flat: bool
    flat: bool
    conditions: list = field(default_factory=list)
    n_samples: int = 0
    box: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if self.flat:
            return "flat"
        if self.conformally_flat:
            return "conformally_flat"
        return "not_conformally_flat"


def _max_abs(fn_values) -> float:
    return float(np.max(np.abs(fn_values))) if np.size(fn_values) else 0.0


def conformal_flatness_report(V: Expr, params=None, n: int = 200, tol: float = 1e-9,
                              box=None, seed: int = 0, cross_check: bool = False) -> FlatnessReport:
    rng = np.random.default_rng(seed)
    v3 = ex.diff(ex.diff(ex.diff(V, "x"), "x"), "x")
    pts = sample_points([V, v3], n, rng, box, params)
    third = ex.lambdify(v3, ("t", "x"), params)(pts["t"], pts["x"])
    conds = [Condition("d3V/dx3", _max_abs(third), tol)]
    if cross_check:
        C = cotton(build_metric(V)).evaluate(pts, params)
        conds.append(Condition("cotton", _max_abs(C), tol))
    ok = all(c.passed for c in conds)
    return FlatnessReport(ok, False, conds, n, pts["box"])


def is_conformally_flat(V: Expr, params=None, n: int = 200, tol: float = 1e-9,
                        box=None, seed: int = 0) -> bool:
    """True iff the third x-derivative of ``V`` vanishes at ``n`` random points."""
    return conformal_flatness_report(V, params, n, tol, box, seed).conformally_flat


def flatness_residual(V: Expr, omega: Expr) -> Expr:
    """``V_xx - (Omega Omega_tt / 2 - 3 Omega_t^2 / 4) / Omega^2``."""
    om_t = ex.diff(omega, "t")
    om_tt = ex.diff(om_t, "t")
    rhs = sub(mul(ex.Constant(ex.Fraction(1, 2)), mul(omega, om_tt)),
              mul(ex.Constant(ex.Fraction(3, 4)), ex.power(om_t, 2)))
    return sub(ex.diff(ex.diff(V, "x"), "x"), div(rhs, ex.power(omega, 2)))


def flatness_report(V: Expr, omega: Expr, params=None, n: int = 200, tol: float = 1e-9,
                    riemann_tol: float = 1e-8, box=None, seed: int = 0) -> FlatnessReport:
    """Evaluate both flatness conditions and cross-check with the full Riemann tensor."""
    rng = np.random.default_rng(seed)
    om_x = ex.diff(omega, "x")
    resid = flatness_residual(V, omega)
    v3 = ex.diff(ex.diff(ex.diff(V, "x"), "x"), "x")
    pts = sample_points([V, resid, v3], n, rng, box, params, positive=[omega])
    f = ex.lambdify([om_x, resid, v3], ("t", "x"), params)
    om_x_v, resid_v, v3_v = f(pts["t"], pts["x"])
    conds = [Condition("d3V/dx3", _max_abs(v3_v), tol),
             Condition("dOmega/dx", _max_abs(om_x_v), tol),
             Condition("flatness", _max_abs(resid_v), tol)]
    conformal = conds[0].passed
    if conds[1].passed:
        R = riemann(build_metric(V, omega)).evaluate(pts, params)
        conds.append(Condition("riemann", _max_abs(R), riemann_tol))
    flat = all(c.passed for c in conds)
    return FlatnessReport(conformal, flat, conds, n, pts["box"])


def is_flat(V: Expr, omega: Expr, params=None, n: int = 200, tol: float = 1e-9,
            box=None, seed: int = 0) -> bool:
    return flatness_report(V, omega, params, n, tol, box=box, seed=seed).flat
