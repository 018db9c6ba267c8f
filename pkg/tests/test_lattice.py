import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncsms.lattice import (AliasingError, GridError, MatrixField, SpectrumField, dft_forward,
                           dft_inverse, dilate_spectrum, field_from_scalar, gaussian_field,
                           l2_mass, make_grid, random_band_limited_hermitian,
                           random_hermitian_field, sample_function)


def direct_dft(f: MatrixField) -> np.ndarray:
    """O(N^2n) sum ``sum_x exp(-2 pi i x.xi) f(x) h^n`` on the centered lattices."""
    g = f.grid
    x = g.axis()
    xi = g.freq_axis()
    E = np.exp(-2j * np.pi * np.outer(xi, x))
    v = f.values
    for a in range(g.n):
        v = np.moveaxis(np.tensordot(E, v, axes=([1], [a])), 0, a)
    return v * g.cell_volume


@pytest.mark.parametrize("n,N,L", [(1, 64, 3.0), (1, 32, 2.0), (2, 16, 4.0), (3, 8, 2.0)])
def test_fft_matches_direct_sum(n, N, L):
    g = make_grid(n, N, L)
    f = random_hermitian_field(g, 2, seed=N)
    F = dft_forward(f)
    ref = direct_dft(f)
    assert np.max(np.abs(F.values - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 3), d=st.integers(1, 3))
def test_plancherel_and_roundtrip(seed, n, d):
    g = make_grid(n, {1: 64, 2: 16, 3: 8}[n], 2.5)
    f = random_hermitian_field(g, d, seed)
    F = dft_forward(f)
    assert abs(l2_mass(F) - l2_mass(f)) <= 1e-10 * l2_mass(f)
    assert np.max(np.abs(dft_inverse(F).values - f.values)) <= 1e-12


@pytest.mark.parametrize("n", [1, 2])
def test_gaussian_is_self_dual(n):
    g = make_grid(n, 256 if n == 1 else 128, 16.0)
    F = dft_forward(gaussian_field(g, 1.0))
    target = np.exp(-np.pi * g.freq_radius() ** 2)
    assert np.max(np.abs(F.values[..., 0, 0] - target)) <= 1e-8


def test_gaussian_width_scaling():
    # exp(-pi x^2 / w^2) has transform w exp(-pi w^2 xi^2)
    g = make_grid(1, 512, 32.0)
    F = dft_forward(gaussian_field(g, 2.0))
    xi = g.freq_axis()
    assert np.max(np.abs(F.values[:, 0, 0] - 2 * np.exp(-np.pi * 4 * xi**2))) <= 1e-8


def test_grid_geometry():
    g = make_grid(2, 64, 4.0)
    assert g.h == pytest.approx(4 / 64)
    assert g.dxi == pytest.approx(1 / 4)
    assert g.nyquist == pytest.approx(8.0)
    assert g.shape == (64, 64) and g.size == 4096
    assert g.axis()[g.N // 2] == 0 and g.freq_axis()[g.N // 2] == 0


@pytest.mark.parametrize("args", [(0, 16, 1.0), (2, 1, 1.0), (2, 16, -1.0), (1, 17, 1.0)])
def test_bad_grid_rejected(args):
    with pytest.raises((GridError, ValueError)):
        make_grid(*args)


def test_fields_are_immutable_and_checked():
    g = make_grid(1, 8, 1.0)
    f = random_hermitian_field(g, 2, 0)
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 1.0
    bad = np.zeros((8, 2, 2), complex)
    bad[0, 0, 1] = 1.0
    with pytest.raises(ValueError):
        MatrixField(g, bad, hermitian=True)
    with pytest.raises(ValueError):
        MatrixField(g, np.full((8, 2, 2), np.nan))
    with pytest.raises(ValueError):
        MatrixField(g, np.zeros((8, 2, 3)))
    with pytest.raises(TypeError):
        dft_inverse(f)


def test_field_arithmetic():
    g = make_grid(1, 8, 1.0)
    a = random_hermitian_field(g, 2, 1)
    b = random_hermitian_field(g, 2, 2)
    assert np.allclose((a + b).values - b.values, a.values)
    assert np.allclose(a.scale(2.0).values, 2 * a.values)
    assert a.adjoint().hermitian_defect() == 0.0
    with pytest.raises(ValueError):
        a + SpectrumField(g, a.values)


def test_sample_function_and_scalar_helpers():
    g = make_grid(2, 8, 2.0)
    f = sample_function(g, lambda x: np.array([[x[0], 1j * x[1]], [-1j * x[1], x[0]]]),
                        hermitian=True)
    X, Y = g.coords()
    assert np.allclose(f.values[..., 0, 0], X) and np.allclose(f.values[..., 0, 1], 1j * Y)
    s = field_from_scalar(g, X, np.diag([1.0, 2.0]))
    assert s.hermitian and np.allclose(s.values[..., 1, 1], 2 * X)


@pytest.mark.parametrize("psd", [False, True])
def test_band_limited_fields(psd):
    g = make_grid(2, 32, 2.0)
    f = random_band_limited_hermitian(g, 2, 3, max_index=6, psd=psd)
    F = dft_forward(f).values
    idx = np.abs(np.arange(g.N) - g.N // 2)
    outside = (idx[:, None] >= 6) | (idx[None, :] >= 6)
    assert np.max(np.abs(F[outside])) <= 1e-12
    if psd:
        assert np.min(np.linalg.eigvalsh(f.flat())) >= -1e-12


def test_dilation_of_gaussian():
    # f(2^-k x) for a Gaussian of width w is a Gaussian of width 2^k w
    g = make_grid(1, 512, 32.0)
    F = dft_forward(gaussian_field(g, 1.0))
    for k, w in [(1, 2.0), (-1, 0.5)]:
        D = dilate_spectrum(F, k)
        ref = dft_forward(gaussian_field(g, w)).values
        assert D.discarded < 1e-10
        assert np.max(np.abs(D.spectrum.values - ref)) <= 1e-8


def test_dilation_reports_lost_mass():
    g = make_grid(1, 64, 4.0)
    F = dft_forward(random_hermitian_field(g, 1, 0))
    D = dilate_spectrum(F, 1)
    assert 0.1 < D.discarded < 1.0
    with pytest.raises(AliasingError):
        dilate_spectrum(F, 1, strict=True)
    with pytest.raises(GridError):
        dilate_spectrum(F, int(math.log2(64)))
