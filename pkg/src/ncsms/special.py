"""Scalar special functions and the radial symbols built from them.

Contents: a Lanczos gamma function, Bessel ``J_nu`` by power series plus
Hankel asymptotics, the Hankel amplitude split of ``J_nu``, the smooth dyadic
partition of unity, the spherical-mean multiplier

    m_hat_alpha(rho) = pi**(1 - alpha) * rho**(-nu) * J_nu(2 pi rho),
    nu = n/2 + alpha - 1,

its spatial kernel, and ``RadialSymbol`` objects that evaluate a multiplier
together with its analytic derivative in the dilation parameter ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Lanczos approximation, g = 7, 9 coefficients
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Gamma function with reflection below 1/2.

    Raises
    ------
    ValueError
        At the poles ``x = 0, -1, -2, ...``.
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise ValueError(f"gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    if x == math.floor(x) and x <= 171:
        return float(math.factorial(int(x) - 1))
    x -= 1.0
    a = _LANCZOS[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, 9):
        a += _LANCZOS[i] / (x + i)
    return math.sqrt(2 * math.pi) * t ** (x + 0.5) * math.exp(-t) * a


def hankel_coefficients(nu: float, terms: int) -> np.ndarray:
    """``a_k(nu)`` for ``k = 0 .. terms-1`` by the product recurrence."""
    a = np.empty(terms)
    a[0] = 1.0
    mu = 4.0 * nu * nu
    for k in range(1, terms):
        a[k] = a[k - 1] * (mu - (2 * k - 1) ** 2) / (8.0 * k)
    return a


@dataclass(frozen=True)
class HankelExpansion:
    """Coefficients of ``J_nu(r) ~ r**-1/2 (e^{ir} A1(r) + e^{-ir} A2(r))``.

    The phase ``exp(-i(nu pi/2 + pi/4))`` and the factor ``(2 pi)**-1/2`` are
    absorbed into ``A1``; ``A2`` is its complex conjugate.
    """

    nu: float
    terms: int = 6

    @property
    def a(self) -> np.ndarray:
        return hankel_coefficients(self.nu, self.terms)

    @property
    def c1(self) -> np.ndarray:
        """Coefficients of ``r**-k`` in ``A1``."""
        k = np.arange(self.terms)
        phase = np.exp(-1j * (self.nu * np.pi / 2 + np.pi / 4)) / np.sqrt(2 * np.pi)
        return phase * (1j**k) * self.a

    def amplitudes(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 1):
            raise ValueError("Hankel amplitudes are only used for r >= 1")
        c = self.c1
        inv = 1.0 / r
        A1 = np.zeros(r.shape, dtype=complex)
        for ck in c[::-1]:
            A1 = A1 * inv + ck
        return A1, np.conj(A1)

    def amplitude_derivatives(self, r):
        r = np.asarray(r, dtype=float)
        c = self.c1
        inv = 1.0 / r
        dA1 = np.zeros(r.shape, dtype=complex)
        for k in range(self.terms - 1, 0, -1):
            dA1 = dA1 * inv + (-k) * c[k]
        dA1 = dA1 * inv * inv
        return dA1, np.conj(dA1)

    def reconstruct(self, r):
        r = np.asarray(r, dtype=float)
        A1, A2 = self.amplitudes(r)
        return np.real(r**-0.5 * (np.exp(1j * r) * A1 + np.exp(-1j * r) * A2))


def hankel_amplitudes(nu: float, r, terms: int = 6):
    """Return ``(A1(r), A2(r))`` of the truncated Hankel split."""
    return HankelExpansion(float(nu), int(terms)).amplitudes(r)


class BesselEvaluator:
    """``J_nu`` on ``r >= 0`` for a fixed real order ``nu > -1/2``.

    Below ``crossover_r`` the scaled power series ``r**-nu J_nu(r)`` is summed
    in extended precision; above it the Hankel expansion is used, truncated
    at its smallest term.  Construction runs a self-consistency gate: on
    ``[0.8, 1.2] * crossover_r`` the two branches must agree to ``gate_tol``
    measured against the envelope ``sqrt(2 / (pi r))`` (pointwise relative
    error is meaningless at the zeros of ``J_nu``).

    Parameters
    ----------
    nu : float
        Order, ``nu > -1/2``.
    series_terms : int
        Maximum number of power-series terms.
    crossover_r : float, optional
        Switch radius, default ``max(16, 2 nu)``.
    asymptotic_terms : int
        Maximum number of Hankel terms.
    """

    def __init__(self, nu: float, series_terms: int = 80, crossover_r: float | None = None,
                 asymptotic_terms: int = 30, gate_tol: float = 1e-9):
        nu = float(nu)
        if not nu > -0.5:
            raise ValueError(f"Bessel order must exceed -1/2, got {nu}")
        self.nu = nu
        self.series_terms = int(series_terms)
        self.crossover_r = float(max(16.0, 2.0 * nu) if crossover_r is None else crossover_r)
        self.asymptotic_terms = int(asymptotic_terms)
        self._a = hankel_coefficients(nu, self.asymptotic_terms)
        self._c0 = np.longdouble(1.0) / (np.longdouble(2.0) ** np.longdouble(nu)
                                          * np.longdouble(gamma_fn(nu + 1.0)))
        self.gate_error = self._self_consistency()
        if self.gate_error > gate_tol:
            raise ValueError(
                f"series/asymptotic mismatch {self.gate_error:.2e} at crossover "
                f"{self.crossover_r} for nu={nu}"
            )

    def series_scaled(self, r) -> np.ndarray:
        """``r**-nu J_nu(r)`` from the power series."""
        r = np.asarray(r, dtype=np.longdouble)
        q = -(r * r) / 4
        term = np.full(r.shape, self._c0, dtype=np.longdouble)
        total = term.copy()
        nu = np.longdouble(self.nu)
        for k in range(1, self.series_terms):
            term = term * q / (k * (k + nu))
            total += term
            if np.all(np.abs(term) <= np.finfo(np.longdouble).eps * np.abs(total)):
                break
        return total.astype(float)

    def asymptotic(self, r) -> np.ndarray:
        """``J_nu(r)`` from the Hankel expansion truncated at its smallest term."""
        r = np.asarray(r, dtype=float)
        K = self.asymptotic_terms
        inv = 1.0 / r
        mags = np.abs(self._a)[:, None] * inv[None, :] ** np.arange(K)[:, None]
        # optimal truncation: sum through the smallest term
        stop = np.argmin(mags, axis=0)
        keep = np.arange(K)[:, None] <= stop[None, :]
        P = np.zeros_like(r)
        Q = np.zeros_like(r)
        powk = np.ones_like(r)
        for k in range(K):
            term = np.where(keep[k], self._a[k] * powk, 0.0)
            sign = -1.0 if (k // 2) % 2 else 1.0
            if k % 2 == 0:
                P += sign * term
            else:
                Q += sign * term
            powk = powk * inv
        chi = r - (self.nu / 2 + 0.25) * np.pi
        return np.sqrt(2 / (np.pi * r)) * (P * np.cos(chi) - Q * np.sin(chi))

    def _self_consistency(self) -> float:
        r = np.linspace(0.8, 1.2, 81) * self.crossover_r
        s = self.series_scaled(r) * r**self.nu
        a = self.asymptotic(r)
        return float(np.max(np.abs(s - a) / np.sqrt(2 / (np.pi * r))))

    def scaled(self, r) -> np.ndarray:
        """``r**-nu J_nu(r)``, finite at ``r = 0``."""
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        low = r < self.crossover_r
        if np.any(low):
            out[low] = self.series_scaled(r[low])
        if np.any(~low):
            rh = r[~low]
            out[~low] = self.asymptotic(rh) * rh ** (-self.nu)
        return out

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("Bessel radius must be nonnegative")
        out = np.empty(r.shape)
        low = r < self.crossover_r
        if np.any(low):
            rl = r[low]
            out[low] = self.series_scaled(rl) * rl**self.nu
        if np.any(~low):
            out[~low] = self.asymptotic(r[~low])
        return out


@lru_cache(maxsize=64)
def bessel_evaluator(nu: float) -> BesselEvaluator:
    return BesselEvaluator(nu)


def bessel_j(nu: float, r):
    """``J_nu(r)`` for ``nu > -1/2`` and ``r >= 0``; scalar in, scalar out."""
    out = bessel_evaluator(float(nu))(np.atleast_1d(r))
    return float(out[0]) if np.ndim(r) == 0 else out.reshape(np.shape(r))


# ---------------------------------------------------------------- partition


def _g(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _dg(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    pos = u > 0
    up = u[pos]
    out[pos] = np.exp(-1.0 / up) / (up * up)
    return out


@dataclass(frozen=True)
class PartitionOfUnity:
    """Smooth dyadic partition built from ``eta`` (1 below 1, 0 above 2).

    ``phi(s) = eta(s) - eta(2 s)`` is supported in ``[1/2, 2]``;
    ``phi_j(xi) = phi(2**-j |xi|)`` for ``j >= 1`` and ``phi_0 = eta(|xi|)``.
    """

    lower: float = 1.0
    upper: float = 2.0

    def eta(self, s):
        s = np.asarray(s, dtype=float)
        w = self.upper - self.lower
        A = _g((self.upper - s) / w)
        B = _g((s - self.lower) / w)
        return np.where(s <= self.lower, 1.0, np.where(s >= self.upper, 0.0, A / np.where(A + B > 0, A + B, 1.0)))

    def deta(self, s):
        s = np.asarray(s, dtype=float)
        w = self.upper - self.lower
        u, v = (self.upper - s) / w, (s - self.lower) / w
        A, B = _g(u), _g(v)
        dA, dB = -_dg(u) / w, _dg(v) / w
        inside = (s > self.lower) & (s < self.upper)
        den = np.where(inside, A + B, 1.0)
        return np.where(inside, (dA * B - A * dB) / (den * den), 0.0)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        return self.eta(s) - self.eta(2 * s)

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        return self.deta(s) - 2 * self.deta(2 * s)

    def phi_j(self, j: int, xi):
        """``phi_j`` at radii ``|xi|`` (pass radii, not vectors)."""
        if j < 0:
            raise ValueError("phi_j needs j >= 0")
        r = np.abs(np.asarray(xi, dtype=float))
        return self.eta(r) if j == 0 else self.phi(r / 2.0**j)

    def dphi_j(self, j: int, xi):
        """Radial derivative of ``phi_j``."""
        r = np.abs(np.asarray(xi, dtype=float))
        return self.deta(r) if j == 0 else self.dphi(r / 2.0**j) / 2.0**j


def partition(lower: float = 1.0, upper: float = 2.0) -> PartitionOfUnity:
    return PartitionOfUnity(lower, upper)


DEFAULT_PARTITION = PartitionOfUnity()


def phi_j(P: PartitionOfUnity, j: int, xi):
    return P.phi_j(j, xi)


# ------------------------------------------------------------- multipliers

RHO_MIN = 1e-4


def bessel_order(alpha: float, n: int) -> float:
    return n / 2 + alpha - 1


def m_hat_at_zero(alpha: float, n: int) -> float:
    return math.pi ** (n / 2) / gamma_fn(n / 2 + alpha)


def m_hat(alpha: float, n: int, rho):
    """Spherical-mean multiplier ``m_hat_alpha`` at radii ``rho >= 0``.

    The removable singularity at the origin is handled by evaluating the
    scaled Bessel series, so small ``rho`` needs no special casing beyond
    what ``BesselEvaluator.scaled`` does.
    """
    nu = bessel_order(alpha, n)
    if not nu > -0.5:
        raise ValueError(f"order n/2 + alpha - 1 = {nu} must exceed -1/2")
    rho = np.abs(np.asarray(rho, dtype=float))
    r = 2 * np.pi * rho
    val = math.pi ** (1 - alpha) * (2 * math.pi) ** nu * bessel_evaluator(nu).scaled(r.ravel())
    val = val.reshape(rho.shape)
    return float(val) if val.ndim == 0 else val


def dm_hat(alpha: float, n: int, rho):
    """Radial derivative, ``-2 pi^2 rho m_hat_{alpha+1}(rho)``."""
    rho = np.abs(np.asarray(rho, dtype=float))
    return -2 * np.pi**2 * rho * m_hat(alpha + 1, n, rho)


def m_kernel(alpha: float, n: int, x):
    """``(1 - |x|^2)_+^(alpha-1) / Gamma(alpha)``; ``x`` has trailing axis ``n``."""
    if not alpha > 0:
        raise ValueError("the kernel form needs alpha > 0; use the multiplier instead")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError("last axis of x must have length n")
    s = 1.0 - np.sum(x * x, axis=-1)
    out = np.zeros(s.shape)
    inside = s > 0
    out[inside] = s[inside] ** (alpha - 1) / gamma_fn(alpha)
    return out


def rho0_bump(s):
    """Smooth bump supported in the open interval (1, 2), peak 1 at 3/2."""
    s = np.asarray(s, dtype=float)
    return _g(s - 1) * _g(2 - s) / math.exp(-4.0)


def drho0_bump(s):
    s = np.asarray(s, dtype=float)
    return (_dg(s - 1) * _g(2 - s) - _g(s - 1) * _dg(2 - s)) / math.exp(-4.0)


# ----------------------------------------------------------- radial symbols

KINDS = ("mean", "piece", "halfwave", "fio", "lp_block")


@dataclass(frozen=True)
class RadialSymbol:
    """Radial multiplier ``xi -> s(|xi|, t)`` with analytic ``d/dt``.

    Kinds
    -----
    mean      ``m_hat_alpha(t rho)``
    piece     ``phi_j(t rho) m_hat_alpha(t rho)``
    halfwave  ``e^{+-2 pi i t rho} phi_j(t rho) (t rho)^-(wbar+1/2) c_alpha A_sigma(2 pi t rho)``
              with ``+`` for ``sigma = 1`` and ``c_alpha = pi^(1-alpha) (2 pi)^-1/2``
    fio       ``rho0(2^-j rho) e^{2 pi i t rho}``
    lp_block  ``phi(2^-j rho)`` (independent of ``t``)
    kernel    ``2^(wbar j) phi_j(t rho) m_hat_alpha(t rho)`` is ``piece`` with ``scale``
    """

    kind: str
    alpha: float = 1.0
    n: int = 2
    j: int = 0
    sigma: int = 1
    terms: int = 6
    scale: float = 1.0
    partition: PartitionOfUnity = DEFAULT_PARTITION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown symbol kind {self.kind!r}")
        if self.kind in ("piece", "halfwave") and self.j < 0:
            raise ValueError("dyadic index must be >= 0")
        if self.kind == "halfwave":
            if self.j < 1:
                raise ValueError("half-wave pieces need j >= 1 so that the asymptotics apply")
            if self.sigma not in (1, 2):
                raise ValueError("sigma must be 1 or 2")

    @property
    def wbar(self) -> float:
        return self.n / 2 + self.alpha - 1

    @property
    def is_real(self) -> bool:
        return self.kind in ("mean", "piece", "lp_block")

    def support_radius(self, t: float) -> float:
        """Radius outside of which the symbol vanishes (``inf`` if never)."""
        if self.kind == "mean":
            return math.inf
        if self.kind in ("piece", "halfwave"):
            return 2.0 ** (self.j + 1) / t if self.j >= 1 else 2.0 / t
        return 2.0 ** (self.j + 1)

    def _cut(self, s):
        P = self.partition
        if self.kind == "lp_block":
            return P.phi(s / 2.0**self.j)
        if self.kind == "fio":
            return rho0_bump(s / 2.0**self.j)
        return P.phi_j(self.j, s)

    def __call__(self, rho, t: float = 1.0):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "mean":
            return self.scale * m_hat(self.alpha, self.n, t * rho)
        if self.kind == "lp_block":
            return self.scale * self._cut(rho)
        if self.kind == "fio":
            return self.scale * self._cut(rho) * np.exp(2j * np.pi * t * rho)
        s = t * rho
        cut = self._cut(s)
        mask = cut != 0
        dtype = float if self.kind == "piece" else complex
        out = np.zeros(rho.shape, dtype=dtype)
        sm, cm = s[mask], cut[mask]
        if self.kind == "piece":
            out[mask] = cm * m_hat(self.alpha, self.n, sm)
        else:
            out[mask] = cm * self._halfwave_core(sm, t, rho[mask])
        return self.scale * out

    def _halfwave_core(self, s, t, rho):
        H = HankelExpansion(self.wbar, self.terms)
        A1, A2 = H.amplitudes(2 * np.pi * s)
        amp = A1 if self.sigma == 1 else A2
        sign = 1.0 if self.sigma == 1 else -1.0
        c = math.pi ** (1 - self.alpha) / math.sqrt(2 * math.pi)
        return c * np.exp(sign * 2j * np.pi * s) * s ** -(self.wbar + 0.5) * amp

    def dt(self, rho, t: float = 1.0):
        """Analytic ``d/dt`` of the symbol at fixed ``rho``."""
        rho = np.asarray(rho, dtype=float)
        if self.kind == "lp_block":
            return np.zeros(rho.shape)
        if self.kind == "mean":
            return self.scale * rho * dm_hat(self.alpha, self.n, t * rho)
        if self.kind == "fio":
            return 2j * np.pi * rho * self(rho, t)
        s = t * rho
        cut = self._cut(s)
        P = self.partition
        dcut_full = P.dphi_j(self.j, s)
        mask = (cut != 0) | (dcut_full != 0)
        sm, rm, cm, dcm = s[mask], rho[mask], cut[mask], dcut_full[mask]
        if self.kind == "piece":
            out = np.zeros(rho.shape)
            m = m_hat(self.alpha, self.n, sm)
            dm = dm_hat(self.alpha, self.n, sm)
            out[mask] = rm * (dm * cm + m * dcm)
            return self.scale * out
        out = np.zeros(rho.shape, dtype=complex)
        H = HankelExpansion(self.wbar, self.terms)
        r = 2 * np.pi * sm
        A1, A2 = H.amplitudes(r)
        dA1, dA2 = H.amplitude_derivatives(r)
        amp, damp = (A1, dA1) if self.sigma == 1 else (A2, dA2)
        sign = 1.0 if self.sigma == 1 else -1.0
        c = math.pi ** (1 - self.alpha) / math.sqrt(2 * math.pi)
        q = self.wbar + 0.5
        ph = np.exp(sign * 2j * np.pi * sm)
        # d/dt of each factor, all evaluated at s = t rho
        val = ph * sm ** (-q) * amp
        dval = (sign * 2j * np.pi * rm * ph * sm ** (-q) * amp
                + ph * (-q) * rm * sm ** (-q - 1) * amp
                + ph * sm ** (-q) * 2 * np.pi * rm * damp)
        out[mask] = c * (dval * cm + val * rm * dcm)
        return self.scale * out


def mean_symbol(alpha, n):
    return RadialSymbol("mean", alpha, n)


def piece_symbol(alpha, n, j, scale=1.0):
    return RadialSymbol("piece", alpha, n, j, scale=scale)


def halfwave_symbol(alpha, n, j, sigma, terms=6):
    return RadialSymbol("halfwave", alpha, n, j, sigma=sigma, terms=terms)


def fio_symbol(j):
    return RadialSymbol("fio", j=j)


def lp_symbol(ell):
    return RadialSymbol("lp_block", j=ell)
