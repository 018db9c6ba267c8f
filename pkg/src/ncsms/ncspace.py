"""Noncommutative L_p norms of matrix fields and maximal norms of families.

A matrix field ``f`` on a lattice stands for an element of
``L_p(R^n; S_p^d)`` with norm ``(sum_x tr|f(x)|^p h^n)^(1/p)``.  For a
family ``(x_t)`` of positive fields the maximal norm is

    inf { ||a||_p : a >= x_t for all t },

and for self-adjoint families the constraint is ``-a <= x_t <= a``.  The
objective and the constraints decouple over lattice sites, so the
infimum is a collection of independent d x d semidefinite programs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _sdpkernel as _k
from .lattice import GridSpec, MatrixField

TOL_PSD = 1e-8
GAP_TOL = 1e-7
KINDS = ("positive", "selfadjoint", "general")


class SolverError(RuntimeError):
    """The barrier method failed; ``certificate`` holds the best point found."""

    def __init__(self, msg, certificate=None):
        super().__init__(msg)
        self.certificate = certificate


class InfeasibleFamily(ValueError):
    """Family does not satisfy the hypotheses of the requested solver."""


# ----------------------------------------------------------------- norms


def _is_inf(p) -> bool:
    return p == math.inf or p == "inf"


def schatten_norm(A, p) -> float:
    """Schatten p-norm of a matrix (or of each matrix in a stack)."""
    A = np.asarray(A, dtype=np.complex128)
    sv = np.linalg.svd(A, compute_uv=False)
    if _is_inf(p):
        return np.max(sv, axis=-1)
    p = float(p)
    if p < 1:
        raise ValueError("Schatten norms need p >= 1")
    return np.sum(sv**p, axis=-1) ** (1.0 / p)


def _site_singular_values(vals: np.ndarray) -> np.ndarray:
    d = vals.shape[-1]
    flat = vals.reshape(-1, d, d)
    herm = np.max(np.abs(flat - np.conj(np.swapaxes(flat, -1, -2))), initial=0.0)
    if herm <= 1e-12 * max(1.0, np.max(np.abs(flat), initial=0.0)):
        if d == 2:
            # eigenvalues s -+ r of a Hermitian 2 x 2 block
            s = 0.5 * (flat[:, 0, 0].real + flat[:, 1, 1].real)
            r = np.hypot(0.5 * (flat[:, 0, 0].real - flat[:, 1, 1].real), np.abs(flat[:, 0, 1]))
            return np.abs(np.stack([s - r, s + r], axis=-1))
        return np.abs(np.linalg.eigvalsh(flat))
    return np.linalg.svd(flat, compute_uv=False)


def trace_power_sum(vals: np.ndarray, p: float) -> float:
    """``sum_sites tr|v|^p`` with a fixed-order (pairwise) reduction."""
    sv = _site_singular_values(vals)
    return float(np.sum(np.sum(sv**p, axis=-1)))


def field_lp_norm(f: MatrixField, p) -> float:
    """``(sum_x tr|f(x)|^p h^n)^(1/p)``; ``p = inf`` gives the max operator norm."""
    sv = _site_singular_values(f.values)
    if _is_inf(p):
        return float(np.max(sv))
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((np.sum(np.sum(sv**p, axis=-1)) * f.grid.cell_volume) ** (1.0 / p))


def loewner_leq(A, B, tol: float = TOL_PSD) -> bool:
    """``A <= B`` in the Loewner order, up to ``tol`` on the smallest eigenvalue."""
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    for M in (A, B):
        if np.max(np.abs(M - np.conj(np.swapaxes(M, -1, -2))), initial=0.0) > 1e-10:
            raise ValueError("loewner_leq expects Hermitian matrices")
    D = B - A
    D = 0.5 * (D + np.conj(np.swapaxes(D, -1, -2)))
    return bool(np.min(np.linalg.eigvalsh(D)) >= -tol)


# --------------------------------------------------------------- families


class MaximalFamily:
    """Finite family ``(x_t)`` of matrix fields (or single matrices).

    Parameters
    ----------
    ts : sequence of float
        Strictly increasing index values.
    members : sequence of MatrixField or of (d, d) arrays
        Either all fields on one grid or all plain matrices.  Plain matrices
        form a one-site family with unit weight.
    kind : {"positive", "selfadjoint", "general"}
    """

    def __init__(self, ts: Sequence[float], members, kind: str = "selfadjoint",
                 validate: bool = True):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        ts = np.asarray(ts, dtype=float)
        members = list(members)
        if len(members) == 0:
            raise ValueError("a maximal family needs at least one member")
        if ts.shape != (len(members),):
            raise ValueError("one t value per member is required")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("t values must be strictly increasing")
        self.ts = ts
        self.kind = kind
        if all(isinstance(m, MatrixField) for m in members):
            grid = members[0].grid
            d = members[0].d
            for m in members:
                if m.grid != grid or m.d != d:
                    raise ValueError("members live on different grids")
            self.grid: GridSpec | None = grid
            self._fields = members
            self.stack = np.ascontiguousarray(
                np.stack([m.values.reshape(-1, d, d) for m in members]))
            self.weight = grid.cell_volume
        else:
            mats = [np.atleast_2d(np.asarray(m, dtype=np.complex128)) for m in members]
            d = mats[0].shape[-1]
            if any(m.shape != (d, d) for m in mats):
                raise ValueError("members must all be d x d matrices")
            self.grid = None
            self._fields = mats
            self.stack = np.ascontiguousarray(np.stack(mats)[:, None])
            self.weight = 1.0
        self.stack.flags.writeable = False
        if not np.all(np.isfinite(self.stack)):
            raise ValueError("family contains non-finite entries")
        self.d = d
        if validate:
            self._validate()

    @classmethod
    def from_stack(cls, ts, stack: np.ndarray, kind: str, grid: GridSpec | None = None,
                   validate: bool = True):
        """Build from a ``(T, S, d, d)`` array without per-member copies."""
        obj = cls.__new__(cls)
        ts = np.asarray(ts, dtype=float)
        if np.any(np.diff(ts) <= 0) or ts.shape != (stack.shape[0],):
            raise ValueError("t values must be strictly increasing, one per member")
        obj.ts = ts
        obj.kind = kind
        obj.grid = grid
        obj.d = stack.shape[-1]
        obj.stack = np.ascontiguousarray(stack, dtype=np.complex128)
        obj.stack.flags.writeable = False
        obj.weight = grid.cell_volume if grid is not None else 1.0
        if grid is not None and stack.shape[1] != grid.size:
            raise ValueError("stack does not match the grid")
        obj._fields = None
        if validate:
            obj._validate()
        return obj

    def _validate(self):
        if self.kind == "general":
            return
        X = self.stack
        defect = hermitian_defect(X)
        if defect > 1e-12 * max(1.0, float(np.max(np.abs(X)))):
            raise InfeasibleFamily(f"members are not Hermitian (defect {defect:.2e})")
        if self.kind == "positive":
            ev = np.empty(X.shape[:2])
            _k.min_eigs(X, ev)
            if ev.min() < -1e-10:
                raise InfeasibleFamily(f"member not positive semidefinite (min eig {ev.min():.2e})")

    @property
    def fields(self) -> list:
        if self._fields is None:
            self._fields = [self.member(i) for i in range(len(self.ts))]
        return self._fields

    def __len__(self):
        return len(self.ts)

    @property
    def sites(self) -> int:
        return self.stack.shape[1]

    def member(self, i: int):
        vals = self.stack[i]
        if self.grid is None:
            return vals[0]
        return MatrixField(self.grid, vals.reshape(self.grid.shape + (self.d, self.d)))

    def with_kind(self, kind: str):
        return MaximalFamily.from_stack(self.ts, self.stack, kind, self.grid)

    def scaled(self, c: float):
        return MaximalFamily.from_stack(self.ts, c * self.stack, self.kind, self.grid,
                                        validate=False)

    def subfamily(self, idx):
        idx = np.asarray(idx)
        return MaximalFamily.from_stack(self.ts[idx], self.stack[idx], self.kind, self.grid,
                                        validate=False)


def hermitian_defect(X: np.ndarray) -> float:
    out = 0.0
    for chunk in np.array_split(X, max(1, X.shape[0]), axis=0):
        out = max(out, float(np.max(np.abs(chunk - np.conj(np.swapaxes(chunk, -1, -2))),
                                    initial=0.0)))
    return out


@dataclass
class Dominator:
    """Certificate ``a`` with per-constraint, per-site eigenvalue slack."""

    a: np.ndarray  # (S, d, d)
    slack: np.ndarray = field(repr=False)  # (constraints, S)
    norm: float
    grid: GridSpec | None = None
    newton_steps: int = 0

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack))

    def valid(self, tol: float = TOL_PSD) -> bool:
        return self.min_slack >= -tol

    def as_field(self) -> MatrixField | np.ndarray:
        if self.grid is None:
            return self.a[0]
        d = self.a.shape[-1]
        return MatrixField(self.grid, self.a.reshape(self.grid.shape + (d, d)),
                           hermitian=False)


def _p_parts(p):
    if _is_inf(p):
        return math.inf, 0
    p = float(p)
    if p < 1:
        raise ValueError("maximal norms need p >= 1")
    return p, (int(p) if p == int(p) and p <= 16 else 0)


def _lp_of_sites(a: np.ndarray, p: float, weight: float) -> float:
    if _is_inf(p):
        return float(np.max(np.abs(np.linalg.eigvalsh(a))))
    ev = np.clip(np.linalg.eigvalsh(a), 0.0, None)
    return float((np.sum(np.sum(ev**p, axis=-1)) * weight) ** (1.0 / p))


def _threads(threads: int | None):
    import numba

    if threads is None:
        env = os.environ.get("NCSMS_THREADS")
        threads = int(env) if env else numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def _closed_form_inf(fam: MaximalFamily, sym: bool):
    X = fam.stack
    d = fam.d
    lam = 0.0
    for chunk in X:
        ev = np.linalg.eigvalsh(0.5 * (chunk + np.conj(np.swapaxes(chunk, -1, -2))))
        lam = max(lam, float(np.max(np.abs(ev) if sym else ev)))
    a = np.broadcast_to(lam * np.eye(d, dtype=np.complex128), (fam.sites, d, d)).copy()
    return lam, a


def _solve(fam: MaximalFamily, p, sym: bool, gap_tol: float, init_active: int,
           with_zero: bool, threads: int | None, max_newton: int):
    p, p_int = _p_parts(p)
    X = fam.stack
    S, d = fam.sites, fam.d
    C = X.shape[0] * (2 if sym else 1)
    if math.isinf(p):
        value, A = _closed_form_inf(fam, sym)
        steps = 0
    else:
        _threads(threads)
        A = np.zeros((S, d, d), np.complex128)
        vals = np.zeros(S)
        status = np.zeros(S, np.int64)
        work = np.zeros(S, np.int64)
        _k.solve_all(X, sym, p, p_int, gap_tol, max_newton, init_active, with_zero,
                     A, vals, status, work)
        steps = int(work.sum())
        A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
        value = float((np.sum(vals) * fam.weight) ** (1.0 / p))
    slack = np.empty((C, S))
    _k.constraint_slack(X, sym, A, slack)
    cert = Dominator(A, slack, _lp_of_sites(A, p, fam.weight), fam.grid, steps)
    if not math.isinf(p) and np.any(status != _k.OK):
        bad = int(np.count_nonzero(status != _k.OK))
        raise SolverError(f"barrier method did not converge at {bad} site(s)", cert)
    return value, cert


def maximal_norm_positive(fam: MaximalFamily, p, *, gap_tol: float = GAP_TOL,
                          init_active: int = 4, with_zero: bool = False,
                          threads: int | None = None, max_newton: int = 2000):
    """Maximal norm of a positive family: ``min ||a||_p`` over ``a >= x_t``.

    Returns ``(value, Dominator)``.  ``p = inf`` uses the closed form
    ``max_t max_x lambda_max(x_t(x))`` with ``a`` a multiple of the identity.
    ``with_zero`` adds the (implied) barrier term for ``a >= 0``.
    """
    if fam.kind != "positive":
        raise InfeasibleFamily("maximal_norm_positive needs a family of kind 'positive'")
    return _solve(fam, p, False, gap_tol, init_active, with_zero, threads, max_newton)


def maximal_norm_selfadjoint(fam: MaximalFamily, p, *, gap_tol: float = GAP_TOL,
                             init_active: int = 4, with_zero: bool = False,
                             threads: int | None = None, max_newton: int = 2000):
    """Maximal norm of a self-adjoint family: ``min ||a||_p`` over ``-a <= x_t <= a``."""
    if fam.kind == "general":
        raise InfeasibleFamily("self-adjoint solver needs Hermitian members")
    return _solve(fam, p, True, gap_tol, init_active, with_zero, threads, max_newton)


def maximal_norm_general_upper(fam: MaximalFamily, p, **kw) -> float:
    """Upper bound for a general family via its Hermitian parts.

    ``x_t = r_t + i s_t`` with ``r_t, s_t`` Hermitian; the bound is
    ``2 * (M(r) + M(s))`` with ``M`` the self-adjoint maximal norm, and just
    ``M`` of the nonzero part when the other part vanishes identically.
    """
    X = fam.stack
    XH = np.conj(np.swapaxes(X, -1, -2))
    re = 0.5 * (X + XH)
    im = (X - XH) / 2j
    parts = []
    for part in (re, im):
        if np.max(np.abs(part), initial=0.0) > 0:
            sub = MaximalFamily.from_stack(fam.ts, part, "selfadjoint", fam.grid, validate=False)
            parts.append(maximal_norm_selfadjoint(sub, p, **kw)[0])
    if not parts:
        return 0.0
    if len(parts) == 1:
        return parts[0]
    return 2.0 * (parts[0] + parts[1])


# ------------------------------------------------------ projected gradient


def _proj_psd_shift(z, c):
    """Frobenius projection of ``z`` onto ``{b : b >= c}``."""
    w, V = np.linalg.eigh(0.5 * (z - c + np.conj((z - c).T)))
    return c + (V * np.clip(w, 0, None)) @ np.conj(V.T)


def _dykstra(z, cons, iters=2000, tol=1e-13):
    x = z.copy()
    incs = [np.zeros_like(z) for _ in cons]
    for _ in range(iters):
        prev = x
        for i, c in enumerate(cons):
            u = _proj_psd_shift(x + incs[i], c)
            incs[i] = x + incs[i] - u
            x = u
        if np.max(np.abs(x - prev)) < tol:
            break
    return x


def projected_gradient_site(cons: Sequence[np.ndarray], p: float, iters: int = 4000,
                            tol: float = 1e-11):
    """Minimize ``tr(b^p)`` over ``{b >= c for c in cons}`` by projected gradient.

    Projections onto the intersection use Dykstra's algorithm.  Meant as an
    independent cross-check of the barrier solver on small problems.
    """
    cons = [0.5 * (np.asarray(c, complex) + np.conj(np.asarray(c, complex).T)) for c in cons]
    d = cons[0].shape[0]
    cons.append(np.zeros((d, d), complex))
    scale = max(np.max(np.abs(np.linalg.eigvalsh(c))) for c in cons) or 1.0
    cons = [c / scale for c in cons]
    b = _dykstra(2.0 * np.eye(d, dtype=complex), cons)
    step = 0.05
    for k in range(iters):
        w, V = np.linalg.eigh(b)
        w = np.clip(w, 0, None)
        grad = (V * (p * w ** (p - 1))) @ np.conj(V.T)
        nb = _dykstra(b - step * grad, cons)
        if np.max(np.abs(nb - b)) < tol:
            b = nb
            break
        b = nb
    ev = np.clip(np.linalg.eigvalsh(b), 0, None)
    return float(np.sum(ev**p)) * scale**p, b * scale


def maximal_norm_projected(fam: MaximalFamily, p: float, **kw) -> float:
    """Maximal norm by the projected-gradient fallback (small families only)."""
    if fam.sites * len(fam) > 4096:
        raise ValueError("projected-gradient fallback is meant for small problems")
    sym = fam.kind != "positive"
    total = 0.0
    for s in range(fam.sites):
        cons = [fam.stack[t, s] for t in range(len(fam))]
        if sym:
            cons += [-c for c in cons]
        total += projected_gradient_site(cons, p, **kw)[0]
    return (total * fam.weight) ** (1.0 / p)


# ------------------------------------------------------------ exponents


@dataclass(frozen=True)
class ParameterSet:
    """Exponent bookkeeping for dimension ``n``, integrability ``p``, order
    ``alpha`` and the L_4 local-smoothing gain ``u``."""

    n: int
    p: float
    alpha: float
    u: float
    j: int | None = None

    @property
    def wbar(self) -> float:
        return self.n / 2 + self.alpha - 1

    @property
    def s_p(self) -> float:
        if math.isinf(self.p):
            return (self.n - 1) / 2
        return (self.n - 1) * abs(0.5 - 1.0 / self.p)

    @property
    def pbar(self) -> float:
        return pbar_n(self.n)

    @property
    def theta1(self) -> float:
        return 2 - 4 / self.p

    @property
    def theta2(self) -> float:
        return 1 - 4 / self.p

    @property
    def mu(self) -> float:
        if self.p <= 4:
            return -self.wbar + (self.u - 0.25) * self.theta1
        return -self.wbar + (self.u - 0.25) * (1 - self.theta2)

    @property
    def threshold(self) -> float:
        return alpha_threshold(self.n, self.p)

    @property
    def u_floor(self) -> float:
        return u_floor(self.n)

    @property
    def alpha_boundary(self) -> float:
        """Value of ``alpha`` at which ``mu`` changes sign for this ``u``."""
        return alpha_boundary(self.n, self.p, self.u)

    def as_dict(self) -> dict:
        return {
            "n": self.n, "p": self.p, "alpha": self.alpha, "u": self.u, "j": self.j,
            "wbar": self.wbar, "s_p": self.s_p, "pbar": self.pbar,
            "theta1": self.theta1, "theta2": self.theta2, "mu": self.mu,
            "threshold": self.threshold,
        }


def pbar_n(n: int) -> float:
    if n % 2:
        return math.inf if n == 1 else 2 * (n + 1) / (n - 1)
    return 2 * (n + 2) / n


def alpha_threshold(n: int, p: float) -> float:
    """Lower bound on ``Re alpha`` for the maximal inequality at ``(n, p)``."""
    if math.isinf(p):
        return max(-0.5, -n / 2 + 1)
    return max(-(n - 3) / p - 0.5, (n - 3) / p - n / 2 + 1)


def u_floor(n: int) -> float:
    """Infimum of the L_4 local-smoothing gain, ``s_4 - 1/4 = (n - 2)/4``.

    ``u`` in ``mu`` is always the gain at ``p = 4``: the bounds for other
    ``p`` interpolate between ``p = 4`` and ``p = 2`` or ``p = inf``.
    """
    return (n - 2) / 4


def alpha_boundary(n: int, p: float, u: float) -> float:
    """Solve ``mu(alpha) = 0`` for ``alpha``."""
    theta = 2 - 4 / p if p <= 4 else (4 / p if not math.isinf(p) else 0.0)
    return 1 - n / 2 + (u - 0.25) * theta


def predicted_exponents(n: int, p: float, alpha: float, u: float | None = None,
                        j: int | None = None) -> ParameterSet:
    """Derived exponents; ``u`` defaults to its floor ``(n - 2)/4``."""
    p = math.inf if _is_inf(p) else float(p)
    if p < 2:
        raise ValueError("predicted exponents are defined for p >= 2")
    if u is None:
        u = u_floor(n)
    return ParameterSet(int(n), p, float(alpha), float(u), j)
