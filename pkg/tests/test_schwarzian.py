import math

import numpy as np
import pytest

from eisenlift import expr as ex
from eisenlift.schwarzian import (
    DomainClipped,
    phi_omega_from_hill,
    schwarzian_derivative,
    schwarzian_numeric,
    solve_hill,
)

POINTS = np.random.default_rng(7).uniform(-0.8, 0.8, 50)


def symbolic_s(text, t):
    return ex.evaluate(schwarzian_derivative(ex.parse(text)), {"t": t})


def test_mobius_has_zero_schwarzian():
    assert np.max(np.abs(symbolic_s("(2*t+1)/(t+1)", POINTS))) < 1e-10


def test_tan_has_schwarzian_two():
    np.testing.assert_allclose(symbolic_s("tan(t)", POINTS), 2.0, atol=1e-10)


def test_exp_has_schwarzian_minus_half():
    np.testing.assert_allclose(symbolic_s("exp(t)", POINTS), -0.5, atol=1e-14)


def test_stationary_point_is_a_domain_error():
    with pytest.raises(ex.DomainError):
        symbolic_s("t^2", 0.0)


@pytest.mark.parametrize("a,b,c,d", [(2, 1, 1, 3), (-1, 0.5, 0.3, 2), (0.2, -3, 1.5, 1)])
def test_mobius_invariance(a, b, c, d):
    base = ex.parse("tan(t)+t^3")
    composed = ex.div(ex.add(ex.mul(ex.as_expr(a), base), ex.as_expr(b)),
                      ex.add(ex.mul(ex.as_expr(c), base), ex.as_expr(d)))
    s0 = ex.evaluate(schwarzian_derivative(base), {"t": POINTS})
    s1 = ex.evaluate(schwarzian_derivative(composed), {"t": POINTS})
    ok = np.abs(c * np.tan(POINTS) + c * POINTS ** 3 + d) > 1e-3
    np.testing.assert_allclose(s1[ok], s0[ok], atol=1e-8)


def test_numeric_schwarzian_matches_symbolic():
    s = schwarzian_numeric(np.tan, POINTS)
    np.testing.assert_allclose(s, 2.0, atol=1e-6)


def test_unit_frequency_matches_cosine():
    h = solve_hill(1.0, (-2, 2))
    assert h.u2(math.pi / 3) == pytest.approx(0.5, abs=1e-8)
    assert h.u1(1.2) == pytest.approx(math.sin(1.2), abs=1e-8)


def test_zero_frequency_is_free():
    h = solve_hill(0.0, (-3, 3))
    t = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(h.u1(t), t, atol=1e-12)
    np.testing.assert_allclose(h.u2(t), 1.0, atol=1e-12)
    po = phi_omega_from_hill(h)
    assert po.domain == (-3.0, 3.0)
    np.testing.assert_allclose(po.phi(t), t, atol=1e-12)
    np.testing.assert_allclose(po.omega(t), 1.0, atol=1e-12)


def test_unit_frequency_gives_tan_and_sec_squared():
    po = phi_omega_from_hill(solve_hill(1.0, (-2, 2)))
    assert po.phi(0.5) == pytest.approx(math.tan(0.5), abs=1e-8)
    assert po.omega(0.5) == pytest.approx(1 / math.cos(0.5) ** 2, abs=1e-8)


def test_patch_is_bounded_by_zeros_of_cosine():
    po = phi_omega_from_hill(solve_hill(1.0, (-2, 2)))
    lo, hi = po.domain
    assert lo == pytest.approx(-math.pi / 2, abs=1e-9)
    assert hi == pytest.approx(math.pi / 2, abs=1e-9)
    with pytest.raises(DomainClipped) as info:
        po.omega(1.6)
    assert info.value.boundaries == po.domain
    with pytest.raises(DomainClipped):
        po.phi(np.array([0.0, -1.7]))


def test_numeric_schwarzian_of_hill_ratio():
    po = phi_omega_from_hill(solve_hill(1.0, (-1.5, 1.5), tol=1e-12))
    np.testing.assert_allclose(schwarzian_numeric(po.phi, POINTS), 2.0, atol=1e-6)


@pytest.mark.parametrize("omega", ["1", "1+0.3*sin(t)", "exp(-t^2)"])
def test_round_trip_recovers_twice_frequency_squared(omega):
    w = ex.parse(omega)
    po = phi_omega_from_hill(solve_hill(w, (-1.2, 1.2), tol=1e-12))
    want = 2 * np.asarray(ex.evaluate(w, {"t": POINTS})) ** 2
    np.testing.assert_allclose(schwarzian_numeric(po.phi, POINTS), want, atol=1e-6)


@pytest.mark.parametrize("omega", ["1", "3+sin(5*t)", "exp(-t^2)", "10"])
def test_wronskian_is_conserved(omega):
    h = solve_hill(ex.parse(omega), (-2, 2))
    assert h.wronskian_drift < 1e-8
    assert h.wronskian(0.0) == 1.0


def test_squared_frequency_may_change_sign():
    h = solve_hill(omega_sq=ex.parse("-1"), t_range=(-1, 1))
    assert h.u2(0.7) == pytest.approx(math.cosh(0.7), abs=1e-9)


def test_profile_depending_on_x_rejected():
    with pytest.raises(ValueError):
        solve_hill(ex.parse("x"))
    with pytest.raises(ValueError):
        solve_hill(1.0, omega_sq=1.0)


def test_callable_profile():
    h = solve_hill(lambda t: 2.0 + 0 * t, (-0.5, 0.5))
    assert h.u2(0.3) == pytest.approx(math.cos(0.6), abs=1e-9)
