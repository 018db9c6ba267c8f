"""Periodic lattices, matrix-valued fields and the scaled DFT.

The continuum transform convention is

    f^(xi) = int exp(-2 pi i <x, xi>) f(x) dx,

approximated on a centered lattice of ``N`` points per axis with spacing
``h = L / N``; frequencies live on the dual centered lattice with spacing
``1 / L``.  With these choices ``dft_forward`` followed by ``dft_inverse`` is
the identity and the discrete Plancherel identity holds exactly.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft

SPATIAL = 0
FREQUENCY = 1

MAX_MATRIX_DIM = 8
HERMITIAN_TOL = 1e-12


class GridError(ValueError):
    """Invalid lattice parameters."""


class AliasingError(RuntimeError):
    """Frequency support does not fit the lattice."""


def _workers() -> int:
    env = os.environ.get("NCSMS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class GridSpec:
    """Centered periodic lattice on the box [-L/2, L/2)^n."""

    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {self.n}")
        N = self.N
        if not isinstance(N, (int, np.integer)) or N < 8 or N & (N - 1):
            raise GridError(f"N must be a power of two >= 8, got {N}")
        if not self.L > 0:
            raise GridError(f"box length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def dxi(self) -> float:
        return 1.0 / self.L

    @property
    def nyquist(self) -> float:
        """Per-axis Nyquist magnitude; the Nyquist ball has this radius."""
        return self.dxi * self.N / 2

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N ** self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @property
    def dual_volume(self) -> float:
        return self.dxi ** self.n

    def axis(self) -> np.ndarray:
        return self.h * (np.arange(self.N) - self.N // 2)

    def freq_axis(self) -> np.ndarray:
        return self.dxi * (np.arange(self.N) - self.N // 2)

    def coords(self) -> list[np.ndarray]:
        """Spatial coordinate arrays, one per axis, in ``ij`` indexing."""
        return np.meshgrid(*([self.axis()] * self.n), indexing="ij")

    def freq_coords(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.freq_axis()] * self.n), indexing="ij")

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords()))

    def freq_radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.freq_coords()))

    def to_dict(self) -> dict:
        return {"n": self.n, "N": int(self.N), "L": float(self.L)}


def make_grid(n: int, N: int, L: float) -> GridSpec:
    return GridSpec(int(n), int(N), float(L))


@dataclass(frozen=True)
class _Field:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    hermitian: bool = False

    representation = SPATIAL

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        expected = self.grid.shape
        if vals.ndim != self.grid.n + 2 or vals.shape[: self.grid.n] != expected:
            raise ValueError(
                f"values shape {vals.shape} does not match grid {expected} + (d, d)"
            )
        d = vals.shape[-1]
        if vals.shape[-2] != d or not 1 <= d <= MAX_MATRIX_DIM:
            raise ValueError(f"matrix block must be square with 1 <= d <= 8, got {vals.shape[-2:]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite entries")
        if self.hermitian:
            defect = np.max(np.abs(vals - np.conj(np.swapaxes(vals, -1, -2))), initial=0.0)
            if defect > HERMITIAN_TOL * max(1.0, np.max(np.abs(vals), initial=0.0)):
                raise ValueError(f"field marked hermitian has defect {defect:.3e}")
        if vals is self.values or vals.flags.writeable:
            vals = vals.copy() if vals is self.values else vals
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    def flat(self) -> np.ndarray:
        """Site-major view of shape ``(N**n, d, d)``."""
        return self.values.reshape(-1, self.d, self.d)

    def adjoint(self):
        return type(self)(self.grid, np.conj(np.swapaxes(self.values, -1, -2)), self.hermitian)

    def hermitian_defect(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2))), initial=0.0))

    def __add__(self, other):
        _check_compatible(self, other)
        return type(self)(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_compatible(self, other)
        return type(self)(self.grid, self.values - other.values)

    def scale(self, c):
        return type(self)(self.grid, c * self.values, self.hermitian and np.isreal(c))


class MatrixField(_Field):
    """A d x d complex matrix per lattice site, spatial representation."""

    representation = SPATIAL


class SpectrumField(_Field):
    """Frequency representation; entry k approximates f^(xi_k)."""

    representation = FREQUENCY


def _check_compatible(a, b):
    if a.grid != b.grid or a.d != b.d or type(a) is not type(b):
        raise ValueError("fields live on different grids or representations")


def _axes(grid: GridSpec) -> tuple:
    return tuple(range(grid.n))


def dft_forward(f: MatrixField) -> SpectrumField:
    """Entrywise scaled DFT approximating the continuum Fourier integral."""
    if not isinstance(f, MatrixField):
        raise TypeError("dft_forward expects a spatial MatrixField")
    g = f.grid
    ax = _axes(g)
    v = scipy.fft.ifftshift(f.values, axes=ax)
    v = scipy.fft.fftn(v, axes=ax, workers=_workers())
    v = scipy.fft.fftshift(v, axes=ax) * g.cell_volume
    return SpectrumField(g, v)


def dft_inverse(F: SpectrumField) -> MatrixField:
    if not isinstance(F, SpectrumField):
        raise TypeError("dft_inverse expects a SpectrumField")
    g = F.grid
    ax = _axes(g)
    v = scipy.fft.ifftshift(F.values, axes=ax)
    v = scipy.fft.ifftn(v, axes=ax, workers=_workers())
    v = scipy.fft.fftshift(v, axes=ax) * (g.dual_volume * g.size)
    return MatrixField(g, v)


def l2_mass(field: _Field) -> float:
    """Squared L2 norm with the representation's measure."""
    g = field.grid
    w = g.cell_volume if field.representation == SPATIAL else g.dual_volume
    return float(np.sum(np.abs(field.values) ** 2) * w)


@dataclass(frozen=True)
class Dilation:
    spectrum: SpectrumField
    discarded: float  # fraction of L2 mass that could not be represented


def _central_slices(grid: GridSpec, shrink: int) -> tuple:
    """Index slices of the central ``N / 2**shrink`` block on every axis."""
    half = grid.N // 2 >> shrink
    c = grid.N // 2
    return tuple(slice(c - half, c + half) for _ in range(grid.n))


def dilate_spectrum(F: SpectrumField, k: int, strict: bool = False) -> Dilation:
    """Spectrum of ``f_k(x) = f(2**-k x)``, i.e. ``2**(k n) F(2**k xi)``.

    For ``k > 0`` the new samples are read from every ``2**k``-th input
    frequency; lattice points whose source frequency lies off the lattice are
    zeroed.  The part of ``f`` living outside the central ``L / 2**k`` box
    wraps around the period after dilation and is reported as discarded.

    For ``k < 0`` each input frequency moves outward by ``2**|k|``; input
    frequencies landing beyond Nyquist are dropped and reported, and the
    intermediate lattice points are filled by evaluating the trigonometric
    polynomial of ``F`` (zero padding), which is exact.
    """
    g = F.grid
    k = int(k)
    kmax = int(math.log2(g.N)) - 2
    if abs(k) > kmax:
        raise GridError(f"|k| must be <= log2(N) - 2 = {kmax}")
    if k == 0:
        return Dilation(F, 0.0)
    total = l2_mass(F)
    ax = _axes(g)
    vals = F.values
    c = g.N // 2
    if k > 0:
        step = 2**k
        out = np.zeros_like(vals)
        m = np.arange(g.N) - c
        src = c + step * m
        ok = (src >= 0) & (src < g.N)
        dst_idx = np.nonzero(ok)[0]
        src_idx = src[ok]
        out_sel = np.ix_(*([dst_idx] * g.n))
        out[out_sel] = vals[np.ix_(*([src_idx] * g.n))]
        out *= 2.0 ** (k * g.n)
        f = dft_inverse(F).values
        inner = np.zeros(g.shape, dtype=bool)
        inner[_central_slices(g, k)] = True
        outside = float(np.sum(np.abs(f[~inner]) ** 2) * g.cell_volume)
        discarded = outside / total if total > 0 else 0.0
    else:
        s = -k
        inner = np.zeros(g.shape, dtype=bool)
        inner[_central_slices(g, s)] = True
        outside = float(np.sum(np.abs(vals[~inner]) ** 2) * g.dual_volume)
        discarded = outside / total if total > 0 else 0.0
        # evaluate the trigonometric polynomial on the refined frequency lattice
        f = dft_inverse(F).values * g.cell_volume
        big = g.N * 2**s
        pad = [(0, 0)] * (g.n + 2)
        lo = (big - g.N) // 2
        for a in ax:
            pad[a] = (lo, big - g.N - lo)
        fp = np.pad(f, pad)
        spec = scipy.fft.fftshift(
            scipy.fft.fftn(scipy.fft.ifftshift(fp, axes=ax), axes=ax, workers=_workers()),
            axes=ax,
        )
        cb = big // 2
        sl = tuple(slice(cb - c, cb + c) for _ in ax)
        out = spec[sl] * 2.0 ** (k * g.n)
    if strict and discarded > 1e-8:
        raise AliasingError(f"dilation by 2**{k} discards {discarded:.3e} of the L2 mass")
    return Dilation(SpectrumField(g, out), discarded)


def sample_function(g: GridSpec, generator: Callable[[np.ndarray], np.ndarray],
                    hermitian: bool = False) -> MatrixField:
    """Fill a field by calling ``generator(x)`` at each site in row-major order.

    ``x`` is a length-``n`` coordinate vector; the generator returns a d x d
    matrix (or a scalar for d = 1).
    """
    pts = np.stack([c.ravel() for c in g.coords()], axis=-1)
    first = np.atleast_2d(np.asarray(generator(pts[0]), dtype=np.complex128))
    d = first.shape[-1]
    out = np.empty((pts.shape[0], d, d), dtype=np.complex128)
    out[0] = first
    for i in range(1, pts.shape[0]):
        out[i] = generator(pts[i])
    if not np.all(np.isfinite(out)):
        raise ValueError("generator produced non-finite values")
    return MatrixField(g, out.reshape(g.shape + (d, d)), hermitian)


def field_from_scalar(g: GridSpec, scalar: np.ndarray, matrix=None) -> MatrixField:
    """``scalar(x) * matrix`` with ``matrix`` defaulting to the 1 x 1 identity."""
    m = np.eye(1) if matrix is None else np.asarray(matrix, dtype=np.complex128)
    vals = np.asarray(scalar)[..., None, None] * m
    herm = bool(np.isrealobj(scalar) and np.allclose(m, np.conj(m.T)))
    return MatrixField(g, vals, herm)


def gaussian_field(g: GridSpec, width: float, matrix=None) -> MatrixField:
    """``exp(-pi |x|^2 / width^2) * matrix``."""
    r2 = sum(c * c for c in g.coords())
    return field_from_scalar(g, np.exp(-np.pi * r2 / width**2), matrix)


def random_hermitian_field(g: GridSpec, d: int, seed: int) -> MatrixField:
    """Sitewise i.i.d. Hermitian matrices with Gaussian entries."""
    rng = np.random.default_rng(seed)
    shape = g.shape + (d, d)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return MatrixField(g, 0.5 * (z + np.conj(np.swapaxes(z, -1, -2))), hermitian=True)


def random_band_limited_hermitian(g: GridSpec, d: int, seed: int,
                                  max_index: int | None = None,
                                  psd: bool = False) -> MatrixField:
    """Random Hermitian trigonometric polynomial.

    Frequencies are restricted to ``|k| < max_index`` per axis (default
    ``N / 4``), so products of two such fields are still resolved by the
    lattice.  With ``psd=True`` the field is ``g^* g`` for a band-limited
    ``g`` of half the bandwidth, hence positive semidefinite everywhere
    in the continuum as well as on the lattice.
    """
    rng = np.random.default_rng(seed)
    kmax = g.N // 4 if max_index is None else int(max_index)
    if psd:
        kmax = max(1, kmax // 2)
    shape = g.shape + (d, d)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    idx = np.abs(np.arange(g.N) - g.N // 2)
    mask = np.ones(g.shape, dtype=bool)
    for a, grid_idx in enumerate(np.meshgrid(*([idx] * g.n), indexing="ij")):
        mask &= grid_idx < kmax
    Z = SpectrumField(g, z * mask[..., None, None])
    w = dft_inverse(Z).values
    if psd:
        v = np.conj(np.swapaxes(w, -1, -2)) @ w
    else:
        v = 0.5 * (w + np.conj(np.swapaxes(w, -1, -2)))
    v = 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))
    v /= np.max(np.abs(v))
    return MatrixField(g, v, hermitian=True)
