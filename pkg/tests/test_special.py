import math

import numpy as np
import pytest
import scipy.special as sps
from hypothesis import given, settings, strategies as st

from ncsms.special import (DEFAULT_PARTITION, BesselEvaluator, HankelExpansion, RadialSymbol,
                           bessel_j, dm_hat, gamma_fn, m_hat, m_hat_at_zero, m_kernel, partition,
                           rho0_bump)
from ncsms.verify import radial_quadrature_mass

R = np.linspace(0.1, 200.0, 20001)


def test_half_integer_orders_match_closed_forms():
    env = np.sqrt(2 / (np.pi * R))
    closed = {0.5: env * np.sin(R), 1.5: env * (np.sin(R) / R - np.cos(R))}
    for nu, ref in closed.items():
        rel = np.abs(bessel_j(nu, R) - ref) / np.abs(ref)
        assert rel.max() <= 1e-8, nu


@pytest.mark.parametrize("nu", [0.0, 0.25, 1.0, 2.5, 3.0, 7.5])
def test_bessel_against_library_values(nu):
    # scipy's jv is an independent implementation; compare on the envelope scale
    err = np.abs(bessel_j(nu, R) - sps.jv(nu, R)) / np.sqrt(2 / (np.pi * R))
    assert err.max() <= 1e-9


def test_bessel_small_argument_and_scalar_shape():
    assert bessel_j(0.0, 0.0) == 1.0
    assert bessel_j(1.0, 0.0) == 0.0
    assert isinstance(bessel_j(0.5, 2.0), float)
    assert bessel_j(0.5, np.ones((2, 3))).shape == (2, 3)


def test_bessel_rejects_bad_input():
    with pytest.raises(ValueError):
        BesselEvaluator(-0.75)
    with pytest.raises(ValueError):
        bessel_j(0.5, -1.0)


def test_crossover_gate_is_reported():
    ev = BesselEvaluator(2.0)
    assert ev.gate_error <= 1e-9
    with pytest.raises(ValueError):
        BesselEvaluator(2.0, series_terms=5)


@pytest.mark.parametrize("x,val", [(1, 1.0), (5, 24.0), (0.5, math.sqrt(math.pi)),
                                   (1.5, math.sqrt(math.pi) / 2), (-0.5, -2 * math.sqrt(math.pi)),
                                   (10.3, None), (0.1, None), (-2.5, None)])
def test_gamma_spot_values(x, val):
    ref = math.gamma(x) if val is None else val
    assert abs(gamma_fn(x) - ref) <= 1e-12 * abs(ref)


@pytest.mark.parametrize("x", [0, -1, -3])
def test_gamma_poles(x):
    with pytest.raises(ValueError):
        gamma_fn(x)


def test_hankel_expansion_reconstructs():
    r = np.linspace(20, 200, 500)
    for nu in (0.5, 1.0, 1.5):
        H = HankelExpansion(nu, 6)
        err = np.abs(H.reconstruct(r) - sps.jv(nu, r)) / np.sqrt(2 / (np.pi * r))
        assert err.max() <= 1e-8


def test_hankel_amplitude_derivative_by_differences():
    H = HankelExpansion(1.0, 6)
    r = np.linspace(5, 50, 50)
    e = 1e-4
    A_plus = H.amplitudes(r + e)[0]
    A_minus = H.amplitudes(r - e)[0]
    fd = (A_plus - A_minus) / (2 * e)
    assert np.max(np.abs(H.amplitude_derivatives(r)[0] - fd)) <= 1e-9


@pytest.mark.parametrize("alpha,n", [(0.5, 1), (1.0, 2), (0.5, 2), (1.0, 3), (2.0, 3), (0.3, 2)])
def test_multiplier_at_origin_matches_quadrature(alpha, n):
    exact = math.pi ** (n / 2) / math.gamma(n / 2 + alpha)
    assert abs(m_hat_at_zero(alpha, n) - exact) <= 1e-14 * exact
    assert abs(m_hat(alpha, n, 0.0) - radial_quadrature_mass(alpha, n)) <= 1e-8 * exact


def test_disc_indicator_transform():
    # alpha = 1, n = 2: kernel is the unit disc, transform J1(2 pi rho) / rho
    rho = np.linspace(0.01, 20, 2000)
    assert np.max(np.abs(m_hat(1.0, 2, rho) - sps.j1(2 * np.pi * rho) / rho)) <= 1e-10


def test_multiplier_derivative_by_differences():
    rho = np.linspace(0.05, 10, 400)
    e = 1e-5
    fd = (m_hat(1.0, 2, rho + e) - m_hat(1.0, 2, rho - e)) / (2 * e)
    assert np.max(np.abs(dm_hat(1.0, 2, rho) - fd)) <= 1e-7


def test_kernel_form():
    x = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [2.0, 0.0]])
    k = m_kernel(2.0, 2, x)
    assert np.allclose(k, [1.0, 0.75, 0.0, 0.0])
    with pytest.raises(ValueError):
        m_kernel(0.0, 2, x)


@settings(max_examples=30, deadline=None)
@given(lo=st.floats(0.5, 2.0), width=st.floats(0.5, 2.0))
def test_partition_telescopes(lo, width):
    P = partition(lo, lo + width)
    s = np.logspace(-3, 3, 300)
    tot = P.eta(s) + sum(P.phi_j(j, s) for j in range(1, 40))
    assert np.max(np.abs(tot - 1)) <= 1e-12


def test_partition_supports_and_range():
    P = DEFAULT_PARTITION
    s = np.linspace(0, 5, 5001)
    eta = P.eta(s)
    assert np.all((eta >= 0) & (eta <= 1))
    assert np.all(eta[s <= 1] == 1) and np.all(eta[s >= 2] == 0)
    assert np.all(P.phi(s)[(s <= 0.5) | (s >= 2)] == 0)
    # derivative by central differences
    e = 1e-6
    fd = (P.phi(s + e) - P.phi(s - e)) / (2 * e)
    assert np.max(np.abs(P.dphi(s) - fd)) <= 1e-5
    with pytest.raises(ValueError):
        P.phi_j(-1, s)


def test_bump_support():
    s = np.linspace(0, 3, 3001)
    b = rho0_bump(s)
    assert np.all(b[(s <= 1) | (s >= 2)] == 0)
    assert abs(rho0_bump(1.5) - 1.0) <= 1e-15 and b.max() <= 1.0 + 1e-15


def five_point(fn, t, e):
    return (-fn(t + 2 * e) + 8 * fn(t + e) - 8 * fn(t - e) + fn(t - 2 * e)) / (12 * e)


@pytest.mark.parametrize("kind,kw", [("mean", {}), ("piece", {"j": 2}), ("piece", {"j": 4}),
                                     ("halfwave", {"j": 3, "sigma": 1}),
                                     ("halfwave", {"j": 3, "sigma": 2}), ("fio", {"j": 3})])
def test_symbol_time_derivative(kind, kw):
    sym = RadialSymbol(kind, 1.0, 2, **kw)
    rho = np.linspace(0.0, 20.0, 801)
    t = 1.3
    fd = five_point(lambda s: sym(rho, s), t, 1e-4)
    scale = max(1.0, float(np.max(np.abs(sym.dt(rho, t)))))
    assert np.max(np.abs(sym.dt(rho, t) - fd)) <= 1e-6 * scale


def test_symbol_support_and_validation():
    sym = RadialSymbol("piece", 1.0, 2, 3)
    rho = np.linspace(0, 40, 4001)
    for t in (1.0, 2.0):
        assert np.all(sym(rho, t)[rho >= sym.support_radius(t)] == 0)
    assert sym.is_real and not RadialSymbol("fio", j=2).is_real
    assert sym.wbar == 1.0
    for bad in ({"kind": "nope"}, {"kind": "piece", "j": -1}, {"kind": "halfwave", "j": 0},
                {"kind": "halfwave", "j": 2, "sigma": 3}):
        with pytest.raises(ValueError):
            RadialSymbol(**bad)


def test_half_wave_split_of_symbol():
    # the two halves reassemble the dyadic piece up to the Hankel truncation
    rho = np.linspace(0.0, 64, 4001)
    for j, tol in [(2, 1e-6), (4, 1e-10)]:
        P = RadialSymbol("piece", 1.0, 2, j)(rho, 1.0)
        H = sum(RadialSymbol("halfwave", 1.0, 2, j, sigma=s)(rho, 1.0) for s in (1, 2))
        assert np.max(np.abs(P - H)) <= tol * np.max(np.abs(P))
