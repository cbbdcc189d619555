import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from eisenlift import expr as ex
from eisenlift.flatmap import (
    PotentialSpec,
    build_map_general,
    map_ho_const,
    map_ho_timedep,
    map_linear_galilean,
    map_linear_mobius,
)
from eisenlift.quantum import (
    BoundaryLeak,
    FreePacket,
    GridMismatch,
    WaveGrid,
    crank_nicolson,
    free_wavefunction,
    kg_reduction_check,
    l2_distance,
    map_free_to_potential,
    map_potential_to_free,
    norm_transport_check,
    oscillator_ground_state,
    phase_identity_error,
    potential_wavefunction,
    richardson_slope,
    sample_series,
    schrodinger_residual,
)

P = ex.parse
PACKET = FreePacket(x0=0.3, p0=0.8, s=0.9)
BOX = (-10.0, 10.0)
LEVELS = (201, 401, 801, 1601)


def residual_study(phi, V, t, box=BOX):
    steps, res = [], []
    for n in LEVELS:
        grid = (*box, n)
        dx = (box[1] - box[0]) / (n - 1)
        res.append(schrodinger_residual(sample_series(phi, t, dx, grid), V))
        steps.append(dx)
    return steps, res


# --------------------------------------------------------------- grids

def test_wave_grid_validation():
    with pytest.raises(ValueError):
        WaveGrid(0, 1, 8, np.zeros(8), 0.0)
    with pytest.raises(ValueError):
        WaveGrid(0, 1, 16, np.zeros(15), 0.0)
    with pytest.raises(ValueError):
        WaveGrid(1, 0, 16, np.zeros(16), 0.0)


def test_mismatched_grids_are_rejected():
    a = WaveGrid.sample(PACKET, 0.0, (-5, 5, 64))
    b = WaveGrid.sample(PACKET, 0.0, (-5, 5, 65))
    with pytest.raises(GridMismatch):
        l2_distance(a, b)
    with pytest.raises(GridMismatch):
        schrodinger_residual((a, a, b), P("0"))
    with pytest.raises(GridMismatch):
        schrodinger_residual((a, a), P("0"))
    c = WaveGrid.sample(PACKET, 0.1, (-5, 5, 64))
    with pytest.raises(GridMismatch):
        schrodinger_residual((c, a, c), P("0"))


# --------------------------------------------------------------- free packet

def test_packet_peaks_at_centre():
    x = np.linspace(-5, 5, 10001)
    amp = np.abs(PACKET(0.0, x))
    assert x[np.argmax(amp)] == pytest.approx(PACKET.x0, abs=1e-3)
    assert abs(PACKET(0.0, PACKET.x0)) >= amp.max()


@pytest.mark.parametrize("tau", [0.0, 0.5, 1.0])
def test_packet_is_normalized(tau):
    total = quad(lambda s: abs(PACKET(tau, s)) ** 2, -np.inf, np.inf, epsabs=1e-13)[0]
    assert total == pytest.approx(1.0, abs=1e-8)


def test_packet_width_must_be_positive():
    with pytest.raises(ValueError):
        FreePacket(s=0.0)


def test_packet_solves_free_equation_at_second_order():
    steps, res = residual_study(PACKET, P("0"), 0.4)
    assert richardson_slope(steps, res) == pytest.approx(2.0, abs=0.2)


def test_ground_state_residual_is_second_order():
    steps, res = residual_study(oscillator_ground_state(1.0), P("0.5*x^2"), 0.2)
    assert richardson_slope(steps, res) == pytest.approx(2.0, abs=0.2)


def test_wrong_potential_is_detected():
    _, res = residual_study(PACKET, P("0.5*x^2"), 0.4)
    assert min(res) > 0.1
    assert res[-1] / res[0] > 0.9


# --------------------------------------------------------------- transport

def test_identity_map_leaves_wave_function_unchanged():
    fmap = build_map_general(PotentialSpec.parse())
    grid = (-5, 5, 101)
    a = map_free_to_potential(fmap, PACKET, 0.4, grid)
    b = WaveGrid.sample(PACKET, 0.4, grid)
    assert np.max(np.abs(a.values - b.values)) < 1e-12


@pytest.mark.parametrize("label,fmap,V,t", [
    ("niederer", map_ho_const(1.0), "0.5*x^2", 0.3),
    ("niederer_shifted", map_ho_const(1.3, 0.2, -0.3, 0.1), "0.845*x^2", 0.3),
    ("galilean", map_linear_galilean(P("1")), "x", 0.5),
    ("galilean_sine", map_linear_galilean(P("sin(t)")), "sin(t)*x", 0.5),
    ("mobius", map_linear_mobius(P("1"), 1.0, 1.0, 2.0), "x", -2.8),
    ("arnold", map_ho_timedep(P("1+0.3*sin(t)")), "0.5*(1+0.3*sin(t))^2*x^2", 0.3),
])
def test_mapped_packet_solves_target_equation(label, fmap, V, t):
    phi = potential_wavefunction(fmap, PACKET)
    steps, res = residual_study(phi, P(V), t)
    assert richardson_slope(steps, res) == pytest.approx(2.0, abs=0.2), label


@pytest.mark.parametrize("fmap", [map_ho_const(1.0, 0.3), map_linear_galilean(P("sin(t)")),
                                  map_ho_timedep(P("1+0.3*sin(t)"))])
def test_round_trip_is_identity(fmap):
    tau = 0.4
    grid = (-6, 6, 301)
    back = map_potential_to_free(fmap, potential_wavefunction(fmap, PACKET), tau, grid)
    direct = WaveGrid.sample(PACKET, tau, grid)
    assert np.max(np.abs(back.values - direct.values)) < 1e-10
    t = float(fmap.t_of_tau(tau))
    phi_v = potential_wavefunction(fmap, PACKET)
    again = potential_wavefunction(fmap, free_wavefunction(fmap, phi_v))
    x = np.linspace(-6, 6, 301)
    assert np.max(np.abs(again(t, x) - phi_v(t, x))) < 1e-10


def test_pulled_back_ground_state_solves_free_equation():
    fmap = map_ho_const(1.0)
    phi_free = free_wavefunction(fmap, oscillator_ground_state(1.0))
    # the slice at tau = 0 is the ground state itself
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(phi_free(0.0, x), np.pi ** -0.25 * np.exp(-x ** 2 / 2), atol=1e-14)
    steps, res = residual_study(phi_free, P("0"), 0.3)
    assert richardson_slope(steps, res) == pytest.approx(2.0, abs=0.2)


# --------------------------------------------------------------- phases and norms

@pytest.mark.parametrize("fmap", [map_ho_const(1.0, 0.2, 0.4, 0.3), map_linear_galilean(P("1")),
                                  map_linear_mobius(P("t"), 1.0, 1.0, 0.5, 0.1, 0.2),
                                  map_ho_timedep(P("1+0.3*sin(t)"), 0.1, 0.2)])
def test_phase_of_ratio_is_minus_f3(fmap):
    rng = np.random.default_rng(2)
    lo, hi = fmap.tau_sample
    tau, xi = rng.uniform(lo, hi, 100), rng.uniform(-2, 2, 100)
    assert phase_identity_error(fmap, PACKET, tau, xi) < 1e-9


def test_constant_field_phase_matches_closed_form():
    g = 1.0
    fmap = map_linear_galilean(P("1"))
    rng = np.random.default_rng(9)
    tau, xi = rng.uniform(-3, 3, 50), rng.uniform(-3, 3, 50)
    closed_form = g * xi * tau - g ** 2 * tau ** 3 / 3
    np.testing.assert_allclose(fmap.f3(xi, tau), closed_form, atol=1e-12)
    ratio = potential_wavefunction(fmap, PACKET)(tau, fmap.f1(xi, tau)) / PACKET(tau, xi)
    assert np.max(np.abs(np.angle(ratio * np.exp(1j * closed_form)))) < 1e-12


@pytest.mark.parametrize("fmap,tau", [(map_ho_const(1.0), 0.5),
                                      (build_map_general(PotentialSpec.parse()), 0.5),
                                      (map_linear_mobius(P("1"), 1.0, 1.0, 0.0), 1.0)])
def test_norm_is_transported_on_matched_slices(fmap, tau):
    free, pot = norm_transport_check(fmap, PACKET, tau)
    assert free == pytest.approx(1.0, abs=1e-8)
    assert pot == pytest.approx(free, abs=1e-8)


# --------------------------------------------------------------- Crank-Nicolson

def test_crank_nicolson_conserves_norm():
    phi0 = WaveGrid.sample(PACKET, 0.0, (-20, 20, 1024))
    out = crank_nicolson(phi0, P("0.5*x^2"), 0.0, 1.0, 1000)
    assert abs(out.norm - phi0.norm) < 1e-10
    assert out.time == 1.0


def test_ground_state_is_stationary():
    # the continuum ground state is stationary up to O(dx^2) under the discrete
    # Hamiltonian, so the grid has to be fine for a 1e-6 check
    phi = oscillator_ground_state(1.0)
    phi0 = WaveGrid.sample(phi, 0.0, (-10, 10, 8193))
    out = crank_nicolson(phi0, P("0.5*x^2"), 0.0, 1.0, 400)
    assert np.max(np.abs(np.abs(out.values) - np.abs(phi0.values))) < 1e-6


def test_steps_must_be_positive():
    phi0 = WaveGrid.sample(PACKET, 0.0, (-20, 20, 64))
    with pytest.raises(ValueError):
        crank_nicolson(phi0, P("0"), 0.0, 1.0, 0)


def test_boundary_leak_warns():
    phi0 = WaveGrid.sample(FreePacket(0.0, 5.0, 0.5), 0.0, (-3, 3, 256))
    with pytest.warns(BoundaryLeak):
        crank_nicolson(phi0, P("0"), 0.0, 1.0, 100)
    phi0 = WaveGrid.sample(PACKET, 0.0, (-20, 20, 256))
    with warnings.catch_warnings():
        warnings.simplefilter("error", BoundaryLeak)
        crank_nicolson(phi0, P("0"), 0.0, 0.2, 20)


@pytest.mark.parametrize("fmap,V", [
    (map_ho_const(1.0), "0.5*x^2"),
    (map_ho_timedep(P("1+0.3*sin(t)")), "0.5*(1+0.3*sin(t))^2*x^2"),
    (map_linear_galilean(P("1")), "x"),
    (map_linear_galilean(P("sin(t)")), "sin(t)*x"),
])
def test_propagation_agrees_with_mapped_solution(fmap, V):
    phi = potential_wavefunction(fmap, PACKET)
    errors = []
    for n, steps in ((512, 512), (1024, 1024), (2048, 2048)):
        grid = (-20.0, 20.0, n)
        out = crank_nicolson(WaveGrid.sample(phi, 0.0, grid), P(V), 0.0, 0.3, steps)
        errors.append(l2_distance(out, WaveGrid.sample(phi, 0.3, grid)))
    assert errors[-1] < 1e-3
    assert errors[0] > errors[1] > errors[2]


# --------------------------------------------------------------- lifted field

def kg_study(V, omega, phi, t, x):
    steps = [4e-3, 2e-3, 1e-3]
    res = [kg_reduction_check(P(V), P(omega), phi, t, x, u=0.7, step=h) for h in steps]
    return steps, res


def test_free_lift_reduces_to_free_equation():
    t = np.linspace(0.1, 0.5, 5)
    x = np.linspace(-1, 1, 5)
    steps, res = kg_study("0", "1", PACKET, t, x)
    assert richardson_slope(steps, res) == pytest.approx(2.0, abs=0.2)


def test_conformal_oscillator_lift_reduces():
    t = np.linspace(-0.5, 0.5, 5)
    x = np.linspace(-1, 1, 5)
    steps, res = kg_study("0.5*x^2", "1/cos(t)^2", oscillator_ground_state(1.0), t, x)
    assert res[-1] < 1e-5
    assert richardson_slope(steps, res) == pytest.approx(2.0, abs=0.2)


def test_wrong_frequency_does_not_reduce():
    t = np.linspace(-0.5, 0.5, 5)
    x = np.linspace(-1, 1, 5)
    _, res = kg_study("0.5*x^2", "1/cos(t)^2", oscillator_ground_state(2.0), t, x)
    assert min(res) > 0.1
