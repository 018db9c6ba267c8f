"""Spherical means and their dyadic pieces as Fourier multipliers on a grid.

Every operator here is a radial multiplier applied on the frequency
lattice: ``dft_inverse(s(|xi|, t) * dft_forward(f))``.  Spatial kernels
(the ``G`` kernels, ``Phi_0``, the Hardy-Littlewood and ``psi`` averages)
are produced or applied through the same transforms, so the grid is a
periodic torus throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from .lattice import (AliasingError, GridError, GridSpec, MatrixField, SpectrumField,
                      dft_forward, dft_inverse)
from .special import (DEFAULT_PARTITION, PartitionOfUnity, RadialSymbol, bessel_order,
                      m_hat_at_zero, rho0_bump)


def j_max(grid: GridSpec, t_min: float = 1.0, guard: float = 0.9) -> int:
    """Largest ``j`` with ``2^(j+1) / t_min <= guard * Nyquist``."""
    lim = guard * grid.nyquist * t_min
    if lim < 2:
        return -1
    return int(math.floor(math.log2(lim) + 1e-12)) - 1


def _check_support(grid: GridSpec, radius: float, what: str, j: int | None = None,
                   t: float | None = None):
    if radius > grid.nyquist * (1 + 1e-12):
        hint = ""
        if j is not None and t is not None:
            hint = f"; largest admissible j at t={t:g} is {j_max(grid, t, 1.0)}"
        raise AliasingError(f"{what} reaches |xi| = {radius:g} beyond Nyquist "
                            f"{grid.nyquist:g}{hint}")


def _herm(v: np.ndarray) -> np.ndarray:
    return 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))


def _multiply(F: SpectrumField, table: np.ndarray) -> SpectrumField:
    return SpectrumField(F.grid, F.values * table[..., None, None])


def _back(F: SpectrumField, hermitian: bool) -> MatrixField:
    f = dft_inverse(F)
    if hermitian:
        return MatrixField(f.grid, _herm(f.values), hermitian=True)
    return f


@lru_cache(maxsize=8)
def _radii(grid: GridSpec):
    """Distinct lattice radii and the index map back onto the lattice."""
    u, inv = np.unique(grid.freq_radius(), return_inverse=True)
    inv = inv.reshape(grid.shape)
    u.flags.writeable = False
    inv.flags.writeable = False
    return u, inv


def radial_table(grid: GridSpec, sym: RadialSymbol, t: float = 1.0,
                 derivative: bool = False) -> np.ndarray:
    """``sym`` (or ``d/dt sym``) on the frequency lattice.

    The symbol is evaluated once per distinct radius; a square lattice of
    side ``N`` has roughly ``N^2 / 12`` of them in two dimensions.
    """
    u, inv = _radii(grid)
    vals = sym.dt(u, t) if derivative else sym(u, t)
    return vals[inv]


# ---------------------------------------------------------------- plans


class OperatorPlan:
    """Symbol tables for one grid and order ``alpha``.

    Tables for the dyadic pieces and their ``t``-derivatives are computed
    for every ``(j, t)`` in ``js x ts`` when the plan is built and never
    mutated afterwards; requests outside that set are evaluated on the fly.

    Parameters
    ----------
    grid : GridSpec
    alpha : float
    js, ts : iterables
        Dyadic indices and dilation parameters to tabulate.
    partition : PartitionOfUnity
    """

    def __init__(self, grid: GridSpec, alpha: float, js: Iterable[int] = (),
                 ts: Iterable[float] = (), partition: PartitionOfUnity = DEFAULT_PARTITION):
        self.grid = grid
        self.alpha = float(alpha)
        self.partition = partition
        self.rho = grid.freq_radius()
        self.rho.flags.writeable = False
        tables = {}
        for j in js:
            sym = self.piece_symbol(j)
            for t in ts:
                _check_support(grid, sym.support_radius(t), f"dyadic piece j={j}", j, t)
                tables[("piece", j, float(t))] = self._ro(radial_table(grid, sym, t))
                tables[("dpiece", j, float(t))] = self._ro(radial_table(grid, sym, t, True))
        self._tables = tables

    @staticmethod
    def _ro(a):
        a.flags.writeable = False
        return a

    @property
    def n(self) -> int:
        return self.grid.n

    def piece_symbol(self, j: int) -> RadialSymbol:
        return RadialSymbol("piece", self.alpha, self.n, j, partition=self.partition)

    def piece_table(self, j: int, t: float) -> np.ndarray:
        tab = self._tables.get(("piece", j, float(t)))
        if tab is None:
            sym = self.piece_symbol(j)
            _check_support(self.grid, sym.support_radius(t), f"dyadic piece j={j}", j, t)
            tab = radial_table(self.grid, sym, t)
        return tab

    def dpiece_table(self, j: int, t: float) -> np.ndarray:
        tab = self._tables.get(("dpiece", j, float(t)))
        if tab is None:
            sym = self.piece_symbol(j)
            _check_support(self.grid, sym.support_radius(t), f"dyadic piece j={j}", j, t)
            tab = radial_table(self.grid, sym, t, True)
        return tab

    def cache_coherence(self) -> float:
        """Max abs difference between cached tables and direct evaluation on every site."""
        worst = 0.0
        for (kind, j, t), tab in self._tables.items():
            sym = self.piece_symbol(j)
            fresh = sym(self.rho, t) if kind == "piece" else sym.dt(self.rho, t)
            worst = max(worst, float(np.max(np.abs(fresh - tab), initial=0.0)))
        return worst

    # ----------------------------------------------------- family stacks

    def piece_stack(self, f: MatrixField, j: int, ts, derivative: bool = False,
                    F: SpectrumField | None = None) -> np.ndarray:
        """``(T, S, d, d)`` stack of dyadic pieces (or their ``t``-derivatives)."""
        F = dft_forward(f) if F is None else F
        herm = f.hermitian
        out = np.empty((len(ts), self.grid.size, f.d, f.d), np.complex128)
        for i, t in enumerate(ts):
            tab = self.dpiece_table(j, t) if derivative else self.piece_table(j, t)
            v = dft_inverse(_multiply(F, tab)).values.reshape(-1, f.d, f.d)
            out[i] = _herm(v) if herm else v
        return out


# ------------------------------------------------------------ operators


def apply_radial_multiplier(F: SpectrumField, s, t: float = 1.0) -> SpectrumField:
    """Multiply a spectrum by a radial symbol.

    ``s`` is a RadialSymbol (evaluated at ``(|xi|, t)``), a callable of
    ``|xi|``, or a precomputed table on the frequency lattice.
    """
    g = F.grid
    if isinstance(s, RadialSymbol):
        if s.kind in ("piece", "halfwave", "fio"):
            _check_support(g, s.support_radius(t), f"{s.kind} symbol (j={s.j})", s.j, t)
        table = radial_table(g, s, t)
    elif callable(s):
        table = np.asarray(s(g.freq_radius()))
    else:
        table = np.asarray(s)
    if table.shape != g.shape:
        table = np.broadcast_to(table, g.shape)
    if not np.all(np.isfinite(table)):
        raise ValueError("symbol is not finite on the lattice")
    return _multiply(F, table)


def _check_t(grid: GridSpec, t: float):
    if not t > 0:
        raise ValueError("t must be positive")
    if t < 2 * grid.h * (1 - 1e-12):
        raise GridError(f"t = {t:g} is below two grid cells (h = {grid.h:g}); refine the grid")


def spherical_mean(f: MatrixField, alpha: float, t: float) -> MatrixField:
    """``M_t^alpha f``: multiplier ``m_hat_alpha(t xi)``."""
    _check_t(f.grid, t)
    sym = RadialSymbol("mean", alpha, f.grid.n)
    return _back(apply_radial_multiplier(dft_forward(f), sym, t), f.hermitian)


def dyadic_piece(f: MatrixField, alpha: float, j: int, t: float,
                 plan: OperatorPlan | None = None) -> MatrixField:
    """``M_{j,t}^alpha f``: multiplier ``phi_j(t xi) m_hat_alpha(t xi)``."""
    plan = plan or OperatorPlan(f.grid, alpha)
    return _back(_multiply(dft_forward(f), plan.piece_table(j, t)), f.hermitian)


def dt_dyadic_piece(f: MatrixField, alpha: float, j: int, t: float,
                    plan: OperatorPlan | None = None) -> MatrixField:
    """``d/dt M_{j,t}^alpha f`` through the analytic derivative symbol."""
    plan = plan or OperatorPlan(f.grid, alpha)
    return _back(_multiply(dft_forward(f), plan.dpiece_table(j, t)), f.hermitian)


def lp_block(f: MatrixField, ell: int) -> MatrixField:
    """Littlewood-Paley block: multiplier ``phi(2^-ell |xi|)``."""
    sym = RadialSymbol("lp_block", j=int(ell))
    return _back(apply_radial_multiplier(dft_forward(f), sym), f.hermitian)


def _psd_sqrt(v: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(_herm(v))
    return (V * np.sqrt(np.clip(w, 0, None))[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def square_function(f: MatrixField, ells: Iterable[int]) -> MatrixField:
    """``(sum_ell |Delta_ell f|^2)^(1/2)`` with ``|x|^2 = x^* x`` sitewise."""
    F = dft_forward(f)
    rho = f.grid.freq_radius()
    acc = np.zeros(f.values.shape, np.complex128)
    for ell in ells:
        b = dft_inverse(_multiply(F, RadialSymbol("lp_block", j=int(ell))(rho))).values
        acc += np.conj(np.swapaxes(b, -1, -2)) @ b
    return MatrixField(f.grid, _herm(_psd_sqrt(acc)), hermitian=True)


def half_wave_piece(f: MatrixField, alpha: float, j: int, t: float, sigma: int,
                    terms: int = 6) -> MatrixField:
    """One of the two oscillatory halves of ``M_{j,t}^alpha f`` (``sigma`` in {1, 2}).

    The pieces carry ``e^{+2 pi i t|xi|}`` (sigma=1) and ``e^{-2 pi i t|xi|}``
    (sigma=2); their sum approximates ``dyadic_piece`` up to the truncation
    of the Hankel amplitudes at ``terms`` terms.
    """
    if j < 1:
        raise ValueError("half-wave pieces need j >= 1")
    sym = RadialSymbol("halfwave", alpha, f.grid.n, j, sigma=sigma, terms=terms)
    return dft_inverse(apply_radial_multiplier(dft_forward(f), sym, t))


# ----------------------------------------------------------------- FIO


def default_angular(xi_unit: np.ndarray) -> np.ndarray:
    return np.ones(xi_unit.shape[:-1])


def time_cutoff(t) -> np.ndarray:
    """Smooth cutoff, 1 on [1, 2] and 0 outside (1/2, 5/2)."""
    from .special import DEFAULT_PARTITION as P

    t = np.asarray(t, dtype=float)
    dist = np.maximum(0.0, np.maximum(1.0 - t, t - 2.0))
    return P.eta(1.0 + 2.0 * dist)


def box_cutoff(grid: GridSpec, half_width: float | None = None) -> np.ndarray:
    """Tensor bump equal to 1 on ``|x_i| <= b`` and 0 beyond ``2b`` (``b = L/8``)."""
    from .special import DEFAULT_PARTITION as P

    b = grid.L / 8 if half_width is None else half_width
    out = np.ones(grid.shape)
    for c in grid.coords():
        out = out * P.eta(np.abs(c) / b)
    return out


@dataclass(frozen=True)
class FioSpec:
    """Operator ``F_j f(x, t) = rho1(x, t) int e^{2 pi i (x.xi + t|xi|)} rho0(2^-j|xi|) a(xi) f^(xi) dxi``.

    ``angular`` is a function of the unit vector ``xi/|xi|`` (degree-zero
    homogeneity is built in).  ``rho1 = None`` means the cutoff 1;
    ``"bump"`` uses ``box_cutoff(grid) * time_cutoff(t)``.
    """

    j: int
    angular: Callable[[np.ndarray], np.ndarray] = default_angular
    rho1: str | None | Callable = "bump"
    box_half_width: float | None = None
    convention: str = "2pi"

    def __post_init__(self):
        if self.convention not in ("2pi", "unit"):
            raise ValueError("convention must be '2pi' or 'unit'")
        if self.j < 0:
            raise ValueError("j must be >= 0")

    def phase_speed(self) -> float:
        return 1.0 if self.convention == "2pi" else 1.0 / (2 * math.pi)

    def symbol(self, grid: GridSpec, t: float) -> np.ndarray:
        _check_support(grid, 2.0 ** (self.j + 1), f"FIO symbol (j={self.j})")
        rho = grid.freq_radius()
        xi = np.stack(grid.freq_coords(), axis=-1)
        unit = xi / np.where(rho > 0, rho, 1.0)[..., None]
        a = np.asarray(self.angular(unit), dtype=complex)
        phase = np.exp(2j * np.pi * self.phase_speed() * t * rho)
        return rho0_bump(rho / 2.0**self.j) * a * phase

    def cutoff(self, grid: GridSpec, t: float):
        if self.rho1 is None:
            return None
        if callable(self.rho1):
            return np.asarray(self.rho1(grid.coords(), t), dtype=float)
        if self.rho1 == "bump":
            return box_cutoff(grid, self.box_half_width) * float(time_cutoff(t))
        raise ValueError(f"unknown rho1 {self.rho1!r}")


def fio_apply(f: MatrixField, spec: FioSpec, t: float, F: SpectrumField | None = None
              ) -> MatrixField:
    F = dft_forward(f) if F is None else F
    out = dft_inverse(_multiply(F, spec.symbol(f.grid, t)))
    cut = spec.cutoff(f.grid, t)
    if cut is None:
        return out
    return MatrixField(f.grid, out.values * cut[..., None, None])


# ------------------------------------------------------------- kernels


def _scalar_field(grid: GridSpec, v: np.ndarray) -> MatrixField:
    return MatrixField(grid, v[..., None, None])


def _kernel_from_table(grid: GridSpec, table: np.ndarray) -> MatrixField:
    F = SpectrumField(grid, table.astype(complex)[..., None, None])
    k = dft_inverse(F)
    return _scalar_field(grid, k.values[..., 0, 0].real)


def kernel_field(alpha: float, j: int, t: float, grid: GridSpec) -> MatrixField:
    """``G_{j,t}``: inverse transform of ``2^(wbar j) phi_j(t xi) m_hat_alpha(t xi)``."""
    n = grid.n
    sym = RadialSymbol("piece", alpha, n, j, scale=2.0 ** (bessel_order(alpha, n) * j))
    _check_support(grid, sym.support_radius(t), f"kernel j={j}", j, t)
    return _kernel_from_table(grid, radial_table(grid, sym, t))


def kernel_phi0(alpha: float, t: float, grid: GridSpec) -> MatrixField:
    """``Phi_{0,t}``: inverse transform of ``phi_0(t xi) m_hat_alpha(t xi)``."""
    return kernel_field(alpha, 0, t, grid)


def kernel_l1(k: MatrixField) -> float:
    return float(np.sum(np.abs(k.values)) * k.grid.cell_volume)


def _convolve(f: MatrixField, kernel: np.ndarray) -> MatrixField:
    K = dft_forward(_scalar_field(f.grid, kernel.astype(complex)))
    table = K.values[..., 0, 0]
    return _back(_multiply(dft_forward(f), table), f.hermitian)


def hl_average(f: MatrixField, t: float) -> MatrixField:
    """``t^-n int_{|y| <= t} f(x - y) dy`` against the lattice-sampled indicator."""
    _check_t(f.grid, t)
    r = f.grid.radius()
    kernel = (r <= t).astype(float) / t**f.grid.n
    return _convolve(f, kernel)


def psi_kernel(grid: GridSpec, t: float) -> np.ndarray:
    """``psi_t(x) = t^-n (1 + |x|/t)^-(n+1)`` sampled on the (periodic) grid."""
    n = grid.n
    return t**-n * (1 + grid.radius() / t) ** -(n + 1)


def psi_average(f: MatrixField, t: float) -> MatrixField:
    _check_t(f.grid, t)
    return _convolve(f, psi_kernel(f.grid, t))


def psi_mass(n: int) -> float:
    """``int_{R^n} (1 + |x|)^-(n+1) dx = |S^(n-1)| / n``."""
    # radial part: int_0^inf r^(n-1) (1+r)^-(n+1) dr = B(n, 1) = 1/n
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2) / n


def mean_mass(alpha: float, n: int) -> float:
    """``int m_alpha = m_hat_alpha(0)``."""
    return m_hat_at_zero(alpha, n)


__all__ = [
    "OperatorPlan", "FioSpec", "j_max", "apply_radial_multiplier", "spherical_mean",
    "dyadic_piece", "dt_dyadic_piece", "lp_block", "square_function", "half_wave_piece",
    "fio_apply", "kernel_field", "kernel_phi0", "kernel_l1", "hl_average", "psi_kernel",
    "psi_average", "psi_mass", "mean_mass", "time_cutoff", "box_cutoff",
]
