"""Compiled per-site log-barrier Newton solver.

Each lattice site carries the small SDP

    minimize tr(a^p)  subject to  a - c_k > 0  for every constraint matrix c_k,

with constraint matrices ``x_t`` (and ``-x_t`` in the self-adjoint case)
plus the zero matrix.  ``a`` is parameterized by ``d*d`` real coordinates
(diagonal, real and imaginary parts of the strict upper triangle).
Hessians are assembled from the four-index tensor

    W[s, p, q, r] = sum_k S_k[s, p] S_k[q, r],   S_k = (a - c_k)^-1,

since ``tr(S E_pq S E_rs) = S[s, p] S[q, r]`` for elementary matrices.
Only a working subset of constraints enters the barrier; once the path
has converged every other constraint is checked, violated ones are added
and the path is resumed from a shifted feasible point.

For ``d = 2`` the barrier and the objective are assembled in closed form
from the four real coordinates (determinant barrier, eigenvalues
``s +- r`` of ``a``), which avoids the tensor assembly entirely.
"""

import os

import numba as nb
import numpy as np

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # try OpenMP first; probing an outdated TBB only produces a warning
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

OK = 0
NOT_CONVERGED = 1

RESTART_SHIFT = 0.05
RESTART_MU = 1e-2
CHECK_EVERY = 1e-2
# Newton decrement (in units of mu) below which a stage takes one last full step
LOOSE_CENTERING = 1.0
# no 'nnan': infeasible trial points are signalled with NaN merits
_FM = {"nsz", "arcp", "contract", "afn", "reassoc"}


@nb.njit(cache=True, fastmath=_FM)
def _basis(d):
    m = d * d
    # every Hermitian basis element is a combination of at most two elementary matrices
    bp = np.zeros((m, 2), np.int64)
    bq = np.zeros((m, 2), np.int64)
    bc = np.zeros((m, 2), np.complex128)
    k = 0
    for i in range(d):
        bp[k, 0] = i
        bq[k, 0] = i
        bc[k, 0] = 1.0
        k += 1
    for i in range(d):
        for j in range(i + 1, d):
            bp[k, 0], bq[k, 0], bc[k, 0] = i, j, 1.0
            bp[k, 1], bq[k, 1], bc[k, 1] = j, i, 1.0
            k += 1
            bp[k, 0], bq[k, 0], bc[k, 0] = i, j, 1j
            bp[k, 1], bq[k, 1], bc[k, 1] = j, i, -1j
            k += 1
    return bp, bq, bc


@nb.njit(cache=True, fastmath=_FM)
def _add_params(a, step, scale, d, bp, bq, bc, out):
    for i in range(d):
        for j in range(d):
            out[i, j] = a[i, j]
    for k in range(d * d):
        for e in range(2):
            if bc[k, e] != 0:
                out[bp[k, e], bq[k, e]] += scale * step[k] * bc[k, e]


@nb.njit(cache=True, fastmath=_FM)
def _chol(A, d, L):
    """Lower Cholesky factor of Hermitian ``A``; False if not positive definite."""
    for j in range(d):
        s = A[j, j].real
        for k in range(j):
            s -= L[j, k].real ** 2 + L[j, k].imag ** 2
        if not s > 0.0:
            return False
        ljj = np.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, d):
            z = A[i, j]
            for k in range(j):
                z -= L[i, k] * np.conj(L[j, k])
            L[i, j] = z / ljj
    return True


@nb.njit(cache=True, fastmath=_FM)
def _chol_inverse(L, d, Li, S):
    """``S = (L L^H)^-1`` from the Cholesky factor; returns logdet."""
    det = 1.0
    for j in range(d):
        ljj = L[j, j].real
        det *= ljj
        Li[j, j] = 1.0 / ljj
        for i in range(j + 1, d):
            z = 0.0j
            for k in range(j, i):
                z -= L[i, k] * Li[k, j]
            Li[i, j] = z / L[i, i].real
    for i in range(d):
        for j in range(i, d):
            z = 0.0j
            for k in range(j, d):
                z += np.conj(Li[k, i]) * Li[k, j]
            S[i, j] = z
            S[j, i] = np.conj(z)
    return 2.0 * np.log(det)


@nb.njit(cache=True, fastmath=_FM)
def _objective(a, d, p, p_int, G, W, pw, want_derivs):
    """Return tr(a^p); optionally fill gradient matrix G and Hessian tensor W."""
    if p_int > 0:
        for i in range(d):
            for j in range(d):
                pw[0, i, j] = 1.0 if i == j else 0.0
        for e in range(1, p_int + 1):
            for i in range(d):
                for j in range(d):
                    z = 0.0j
                    for k in range(d):
                        z += pw[e - 1, i, k] * a[k, j]
                    pw[e, i, j] = z
        val = 0.0
        for i in range(d):
            val += pw[p_int, i, i].real
        if not want_derivs:
            return val
        for i in range(d):
            for j in range(d):
                G[i, j] = p * pw[p_int - 1, i, j]
        W[:] = 0.0
        for e in range(p_int - 1):
            f = p_int - 2 - e
            for s in range(d):
                for q in range(d):
                    A = p * pw[e, s, q]
                    for r in range(d):
                        for t in range(d):
                            W[s, q, r, t] += A * pw[f, r, t]
        return val
    # non-integer exponent: spectral calculus with Daleckii-Krein divided differences
    lam, U = np.linalg.eigh(a)
    val = 0.0
    for i in range(d):
        lam[i] = max(lam[i], 1e-300)
        val += lam[i] ** p
    if not want_derivs:
        return val
    for i in range(d):
        for j in range(d):
            z = 0.0j
            for k in range(d):
                z += U[i, k] * (p * lam[k] ** (p - 1)) * np.conj(U[j, k])
            G[i, j] = z
    W[:] = 0.0
    for a_ in range(d):
        for b_ in range(d):
            la, lb = lam[a_], lam[b_]
            if abs(la - lb) > 1e-9 * max(la, lb):
                gam = p * (la ** (p - 1) - lb ** (p - 1)) / (la - lb)
            else:
                lm = 0.5 * (la + lb)
                gam = p * (p - 1) * lm ** (p - 2)
            for s in range(d):
                for q in range(d):
                    pb = gam * U[s, b_] * np.conj(U[q, b_])
                    for r in range(d):
                        for t in range(d):
                            W[s, q, r, t] += pb * U[r, a_] * np.conj(U[t, a_])
    return val


@nb.njit(cache=True, fastmath=_FM)
def _constraint(X, sym, c, a, d, out):
    """out = a - c_k; index T*(1+sym) is the zero matrix."""
    T = X.shape[0]
    if c < T:
        for i in range(d):
            for j in range(d):
                out[i, j] = a[i, j] - X[c, i, j]
    elif sym and c < 2 * T:
        for i in range(d):
            for j in range(d):
                out[i, j] = a[i, j] + X[c - T, i, j]
    else:
        for i in range(d):
            for j in range(d):
                out[i, j] = a[i, j]


@nb.njit(cache=True, fastmath=_FM)
def _real_chol_solve(H, g, m, Lr, y, out):
    for j in range(m):
        s = H[j, j]
        for k in range(j):
            s -= Lr[j, k] * Lr[j, k]
        if not s > 0.0:
            return False
        Lr[j, j] = np.sqrt(s)
        for i in range(j + 1, m):
            z = H[i, j]
            for k in range(j):
                z -= Lr[i, k] * Lr[j, k]
            Lr[i, j] = z / Lr[j, j]
    for i in range(m):
        z = g[i]
        for k in range(i):
            z -= Lr[i, k] * y[k]
        y[i] = z / Lr[i, i]
    for i in range(m - 1, -1, -1):
        z = y[i]
        for k in range(i + 1, m):
            z -= Lr[k, i] * out[k]
        out[i] = z / Lr[i, i]
    return True



@nb.njit(cache=True, fastmath=_FM)
def _entries2(X, sym, c, a):
    """Entries of ``a - c_k`` for d = 2: (m11, m22, Re m12, Im m12)."""
    T = X.shape[0]
    sign = 0.0
    t = 0
    if c < T:
        sign, t = 1.0, c
    elif sym and c < 2 * T:
        sign, t = -1.0, c - T
    if sign == 0.0:
        return a[0, 0].real, a[1, 1].real, a[0, 1].real, a[0, 1].imag
    z = a[0, 1] - sign * X[t, 0, 1]
    return (a[0, 0].real - sign * X[t, 0, 0].real, a[1, 1].real - sign * X[t, 1, 1].real,
            z.real, z.imag)


@nb.njit(cache=True, fastmath=_FM)
def _spectral_parts(lam, p, p_int):
    """lam^p and its first two derivatives (clamped at 0 for non-integer p)."""
    if p_int > 0:
        v = lam**p_int
        d1 = p * lam ** (p_int - 1) if p_int >= 1 else 0.0
        d2 = p * (p - 1) * lam ** (p_int - 2) if p_int >= 2 else 0.0
        return v, d1, d2
    if lam <= 0.0:
        return 0.0, 0.0, 0.0
    return lam**p, p * lam ** (p - 1), p * (p - 1) * lam ** (p - 2)


@nb.njit(cache=True, fastmath=_FM)
def _value2(a, p, p_int):
    u = a[0, 0].real
    z = a[1, 1].real
    v = a[0, 1].real
    w = a[0, 1].imag
    if p_int == 2:
        return u * u + z * z + 2 * (v * v + w * w)
    s = 0.5 * (u + z)
    r = np.sqrt(0.25 * (u - z) ** 2 + v * v + w * w)
    return _spectral_parts(s + r, p, p_int)[0] + _spectral_parts(s - r, p, p_int)[0]


@nb.njit(cache=True, fastmath=_FM)
def _objective2(a, p, p_int, gr, Hx, want_derivs):
    """tr(a^p) for 2 x 2 Hermitian ``a`` in coordinates (a11, a22, Re a12, Im a12)."""
    u = a[0, 0].real
    z = a[1, 1].real
    v = a[0, 1].real
    w = a[0, 1].imag
    if p_int == 2:
        if want_derivs:
            gr[0], gr[1], gr[2], gr[3] = 2 * u, 2 * z, 4 * v, 4 * w
            Hx[:] = 0.0
            Hx[0, 0], Hx[1, 1], Hx[2, 2], Hx[3, 3] = 2.0, 2.0, 4.0, 4.0
        return u * u + z * z + 2 * (v * v + w * w)
    s = 0.5 * (u + z)
    h = 0.5 * (u - z)
    r = np.sqrt(h * h + v * v + w * w)
    P1, d11, d21 = _spectral_parts(s + r, p, p_int)
    P2, d12, d22 = _spectral_parts(s - r, p, p_int)
    val = P1 + P2
    if not want_derivs:
        return val
    # derivatives in (s, h, v, w), then chain rule to (u, z, v, w)
    f_s = d11 + d12
    f_ss = d21 + d22
    small = r <= 1e-6 * abs(s)
    if small or r == 0.0:
        f_sr = 0.0
        f_rr = f_ss
        f_r_over_r = f_ss
        qh0 = qh1 = qh2 = 0.0
        f_r = 0.0
    else:
        f_r = d11 - d12
        f_sr = d21 - d22
        f_rr = f_ss
        f_r_over_r = f_r / r
        qh0, qh1, qh2 = h / r, v / r, w / r
    gy = np.empty(4)
    gy[0] = f_s
    gy[1], gy[2], gy[3] = f_r * qh0, f_r * qh1, f_r * qh2
    Hy = np.empty((4, 4))
    Hy[0, 0] = f_ss
    qh = (qh0, qh1, qh2)
    for i in range(3):
        Hy[0, i + 1] = f_sr * qh[i]
        Hy[i + 1, 0] = Hy[0, i + 1]
        for j in range(3):
            e = 1.0 if i == j else 0.0
            Hy[i + 1, j + 1] = f_rr * qh[i] * qh[j] + f_r_over_r * (e - qh[i] * qh[j])
    # y = J x with s = (u+z)/2, h = (u-z)/2
    gr[0] = 0.5 * (gy[0] + gy[1])
    gr[1] = 0.5 * (gy[0] - gy[1])
    gr[2] = gy[2]
    gr[3] = gy[3]
    Jm = np.zeros((4, 4))
    Jm[0, 0], Jm[0, 1], Jm[1, 0], Jm[1, 1] = 0.5, 0.5, 0.5, -0.5
    Jm[2, 2], Jm[3, 3] = 1.0, 1.0
    for i in range(4):
        for j in range(4):
            acc = 0.0
            for k in range(4):
                if Jm[k, i] == 0.0:
                    continue
                for l in range(4):
                    acc += Jm[k, i] * Hy[k, l] * Jm[l, j]
            Hx[i, j] = acc
    return val

@nb.njit(cache=True, fastmath=_FM)
def _merit(a, X, sym, active, nact, d, p, p_int, mu, M, L, G, W, pw):
    """Barrier merit f + mu * sum(-logdet); nan if infeasible."""
    bar = 0.0
    if d == 2:
        for e in range(nact):
            m11, m22, x, y = _entries2(X, sym, active[e], a)
            D = m11 * m22 - x * x - y * y
            if not (m11 > 0.0 and D > 0.0):
                return np.nan
            bar -= np.log(D)
        return _value2(a, p, p_int) + mu * bar
    for e in range(nact):
        _constraint(X, sym, active[e], a, d, M)
        if not _chol(M, d, L):
            return np.nan
        det = 1.0
        for j in range(d):
            det *= L[j, j].real
        bar -= 2.0 * np.log(det)
    return _objective(a, d, p, p_int, G, W, pw, False) + mu * bar


@nb.njit(cache=True, fastmath=_FM)
def _assemble(X, sym, active, nact, d, p, p_int, mu, a, bp, bq, bc, M, L, Li, S, Ssum,
              G, W, Wb, pw, H, g, gB):
    """Newton system at ``a``: H, g = -(grad f + mu grad B), gB = grad B.

    Returns (feasible, merit).
    """
    m = d * d
    val = _objective(a, d, p, p_int, G, W, pw, True)
    Ssum[:] = 0.0
    Wb[:] = 0.0
    bar = 0.0
    for e in range(nact):
        _constraint(X, sym, active[e], a, d, M)
        if not _chol(M, d, L):
            return False, 0.0
        bar -= _chol_inverse(L, d, Li, S)
        for s in range(d):
            for q in range(d):
                Ssum[s, q] += S[s, q]
                z = S[s, q]
                for r in range(d):
                    for t in range(d):
                        Wb[s, q, r, t] += z * S[r, t]
    F = val + mu * bar
    for k in range(m):
        z = 0.0
        zb = 0.0
        for e in range(2):
            c = bc[k, e]
            if c != 0:
                pp, qq = bp[k, e], bq[k, e]
                z += (c * G[qq, pp]).real
                zb -= (c * Ssum[qq, pp]).real
        g[k] = -(z + mu * zb)
        gB[k] = zb
        for l in range(k, m):
            h = 0.0
            for e in range(2):
                c1 = bc[k, e]
                if c1 == 0:
                    continue
                pp, qq = bp[k, e], bq[k, e]
                for f in range(2):
                    c2 = bc[l, f]
                    if c2 == 0:
                        continue
                    rr, ss = bp[l, f], bq[l, f]
                    h += (c1 * c2 * (W[ss, pp, qq, rr] + mu * Wb[ss, pp, qq, rr])).real
            H[k, l] = h
            H[l, k] = h
    return True, F


@nb.njit(cache=True, fastmath=_FM)
def _assemble2(X, sym, active, nact, p, p_int, mu, a, gr, Hx, H, g, gB):
    """Closed-form Newton system for d = 2 in coordinates (a11, a22, Re a12, Im a12).

    With D = det(a - c_k) = m11 m22 - x^2 - y^2, the barrier term -log D has
    gradient -grad D / D and Hessian -hess D / D + grad D grad D^T / D^2.
    """
    val = _objective2(a, p, p_int, gr, Hx, True)
    for k in range(4):
        gB[k] = 0.0
        for l in range(4):
            H[k, l] = 0.0
    bar = 0.0
    for e in range(nact):
        m11, m22, x, y = _entries2(X, sym, active[e], a)
        D = m11 * m22 - x * x - y * y
        if not (m11 > 0.0 and D > 0.0):
            return False, 0.0
        bar -= np.log(D)
        iD = 1.0 / D
        d0, d1, d2, d3 = m22 * iD, m11 * iD, -2.0 * x * iD, -2.0 * y * iD
        gB[0] -= d0
        gB[1] -= d1
        gB[2] -= d2
        gB[3] -= d3
        H[0, 0] += d0 * d0
        H[0, 1] += d0 * d1 - iD
        H[0, 2] += d0 * d2
        H[0, 3] += d0 * d3
        H[1, 1] += d1 * d1
        H[1, 2] += d1 * d2
        H[1, 3] += d1 * d3
        H[2, 2] += d2 * d2 + 2.0 * iD
        H[2, 3] += d2 * d3
        H[3, 3] += d3 * d3 + 2.0 * iD
    for k in range(4):
        g[k] = -(gr[k] + mu * gB[k])
        for l in range(k, 4):
            h = Hx[k, l] + mu * H[k, l]
            H[k, l] = h
            H[l, k] = h
    return True, val + mu * bar


@nb.njit(cache=True, fastmath=_FM)
def _center(X, sym, active, nact, d, p, p_int, mu, tol, tight, max_steps, a,
            bp, bq, bc, M, L, Li, S, Ssum, G, W, Wb, pw, H, g, gB, step, Lr, y, trial):
    """Newton centering at fixed ``mu``.

    Stops when the Newton decrement satisfies ``dec <= tol * mu`` (loose) or
    ``dec <= tol * (1 + |F|)`` when ``tight``.  Returns (ok, steps).  On
    success ``Lr`` holds the Cholesky factor of the Hessian at ``a`` and
    ``gB`` the barrier gradient there, which the path predictor reuses.
    """
    m = d * d
    steps = 0
    gr = np.empty(4)
    Hx = np.empty((4, 4))
    while True:
        if d == 2:
            ok2, F = _assemble2(X, sym, active, nact, p, p_int, mu, a, gr, Hx, H, g, gB)
        else:
            ok2, F = _assemble(X, sym, active, nact, d, p, p_int, mu, a, bp, bq, bc, M, L,
                               Li, S, Ssum, G, W, Wb, pw, H, g, gB)
        if not ok2:
            return False, steps
        if not _real_chol_solve(H, g, m, Lr, y, step):
            return False, steps
        dec = 0.0
        for k in range(m):
            dec += g[k] * step[k]
        if not dec >= 0.0:
            return False, steps
        limit = tol * (1.0 + abs(F)) if tight else tol * mu
        done = dec <= limit
        if done and not tight:
            # nearly centered: take the full Newton step without re-assembling
            _add_params(a, step, 1.0, d, bp, bq, bc, trial)
            Ft = _merit(trial, X, sym, active, nact, d, p, p_int, mu, M, L, G, W, pw)
            if Ft == Ft and Ft <= F:
                for i in range(d):
                    for j in range(d):
                        a[i, j] = trial[i, j]
            return True, steps + 1
        if done:
            return True, steps
        if steps >= max_steps:
            return False, steps
        s_len = 1.0
        accepted = False
        for ls in range(60):
            _add_params(a, step, s_len, d, bp, bq, bc, trial)
            Ft = _merit(trial, X, sym, active, nact, d, p, p_int, mu, M, L, G, W, pw)
            if Ft == Ft and Ft <= F - 0.25 * s_len * dec:
                accepted = True
                break
            s_len *= 0.5
        steps += 1
        if not accepted:
            # no progress possible in floating point; the point is as centered as it gets
            return tight, steps
        for i in range(d):
            for j in range(d):
                a[i, j] = trial[i, j]


@nb.njit(cache=True, fastmath=_FM)
def _predict(X, sym, active, nact, d, p, p_int, mu, a, bp, bq, bc, M, L, G, W,
             pw, gB, step, Lr, y, trial):
    """Move ``a`` along the central-path tangent from ``mu`` to ``0.2 mu``.

    On the path ``grad f + mu grad B = 0``, so ``da/dmu = -H^-1 grad B``.
    The step is halved until it is feasible and does not increase the merit
    at the new ``mu``; if no such step exists ``a`` is left unchanged.
    """
    m = d * d
    for i in range(m):
        z = gB[i]
        for k in range(i):
            z -= Lr[i, k] * y[k]
        y[i] = z / Lr[i, i]
    for i in range(m - 1, -1, -1):
        z = y[i]
        for k in range(i + 1, m):
            z -= Lr[k, i] * step[k]
        step[i] = z / Lr[i, i]
    mu_new = 0.2 * mu
    F0 = _merit(a, X, sym, active, nact, d, p, p_int, mu_new, M, L, G, W, pw)
    s_len = 0.8 * mu
    for ls in range(30):
        _add_params(a, step, s_len, d, bp, bq, bc, trial)
        Ft = _merit(trial, X, sym, active, nact, d, p, p_int, mu_new, M, L, G, W, pw)
        if Ft == Ft and Ft <= F0:
            for i in range(d):
                for j in range(d):
                    a[i, j] = trial[i, j]
            return
        s_len *= 0.5


@nb.njit(cache=True, fastmath=_FM)
def _upper_lmax(X, sym, c, d):
    """Cheap upper bound on the largest eigenvalue of the k-th constraint matrix."""
    T = X.shape[0]
    sign = 1.0
    t = c
    if c >= T:
        sign = -1.0
        t = c - T
    tr = 0.0
    for i in range(d):
        tr += X[t, i, i].real
    mean = sign * tr / d
    fro = 0.0
    for i in range(d):
        for j in range(d):
            z = X[t, i, j]
            if i == j:
                z = z - tr / d
            fro += z.real ** 2 + z.imag ** 2
    return mean + np.sqrt(fro * (d - 1) / d)


@nb.njit(cache=True, fastmath=_FM)
def _expand(X, sym, d, a, inset, active, nact, M, L):
    """Add every constraint outside the working set that ``a`` violates.

    Returns (new nact, largest violation).
    """
    C = inset.shape[0]
    worst = 0.0
    for c in range(C):
        if inset[c]:
            continue
        _constraint(X, sym, c, a, d, M)
        if not _chol(M, d, L):
            lmin = np.linalg.eigvalsh(M)[0]
            worst = max(worst, -lmin)
            active[nact] = c
            inset[c] = True
            nact += 1
    return nact, worst


@nb.njit(cache=True, fastmath=_FM)
def solve_site(X, sym, d, p, p_int, gap_tol, max_newton, init_active, with_zero, a):
    """Active-set barrier solve at one site.

    ``X`` has shape (T, d, d) and is already normalized so that every member
    has Frobenius norm at most one.  The working set starts with the
    ``init_active`` constraints of largest eigenvalue bound; the remaining
    constraints are checked every two decades of ``mu`` and at the end.
    Returns (status, newton steps, tr(a^p), size of the working set).
    """
    T = X.shape[0]
    C = T * (2 if sym else 1)
    m = d * d
    bp, bq, bc = _basis(d)
    M = np.zeros((d, d), np.complex128)
    L = np.zeros((d, d), np.complex128)
    Li = np.zeros((d, d), np.complex128)
    S = np.zeros((d, d), np.complex128)
    Ssum = np.zeros((d, d), np.complex128)
    G = np.zeros((d, d), np.complex128)
    W = np.zeros((d, d, d, d), np.complex128)
    Wb = np.zeros((d, d, d, d), np.complex128)
    pw = np.zeros((max(p_int, 1) + 1, d, d), np.complex128)
    H = np.zeros((m, m))
    g = np.zeros(m)
    gB = np.zeros(m)
    step = np.zeros(m)
    Lr = np.zeros((m, m))
    y = np.zeros(m)
    trial = np.zeros((d, d), np.complex128)

    bound = np.empty(C)
    for c in range(C):
        bound[c] = _upper_lmax(X, sym, c, d)
    order = np.argsort(-bound, kind="mergesort")
    active = np.empty(C + 1, np.int64)
    inset = np.zeros(C, np.bool_)
    nact = 0
    if with_zero:
        active[nact] = C  # zero matrix: a >= 0
        nact += 1
    for e in range(min(init_active, C)):
        active[nact] = order[e]
        inset[order[e]] = True
        nact += 1

    for i in range(d):
        for j in range(d):
            a[i, j] = 2.0 if i == j else 0.0
    mu = 1.0
    next_check = CHECK_EVERY
    total = 0
    val = 0.0
    while True:
        ok, st = _center(X, sym, active, nact, d, p, p_int, mu, LOOSE_CENTERING, False,
                         max_newton - total, a, bp, bq, bc, M, L, Li, S, Ssum,
                         G, W, Wb, pw, H, g, gB, step, Lr, y, trial)
        total += st
        val = _objective(a, d, p, p_int, G, W, pw, False)
        if not ok:
            return NOT_CONVERGED, total, val, nact
        final = mu * d * nact < gap_tol * (1.0 + val)
        if final:
            ok, st = _center(X, sym, active, nact, d, p, p_int, mu, 1e-14, True,
                             max_newton - total, a, bp, bq, bc, M, L, Li, S, Ssum,
                             G, W, Wb, pw, H, g, gB, step, Lr, y, trial)
            total += st
            val = _objective(a, d, p, p_int, G, W, pw, False)
            if not ok:
                return NOT_CONVERGED, total, val, nact
        if final or mu < next_check:
            grown, worst = _expand(X, sym, d, a, inset, active, nact, M, L)
            if grown > nact:
                nact = grown
                for i in range(d):
                    a[i, i] += worst + RESTART_SHIFT
                mu = max(mu, RESTART_MU)
                continue
            if final:
                return OK, total, val, nact
            next_check *= CHECK_EVERY
        _predict(X, sym, active, nact, d, p, p_int, mu, a, bp, bq, bc, M, L, G, W,
                 pw, gB, step, Lr, y, trial)
        mu *= 0.2


@nb.njit(cache=True, parallel=True, fastmath=_FM)
def solve_all(X, sym, p, p_int, gap_tol, max_newton, init_active, with_zero, A, values,
              status, work):
    """Solve every site; ``X`` has shape (T, S, d, d), ``A`` (S, d, d).

    ``X`` holds the raw members; each site is normalized by its largest
    Frobenius norm before solving and rescaled afterwards.
    """
    T, S, d = X.shape[0], X.shape[1], X.shape[2]
    for s in nb.prange(S):
        scale = 0.0
        for t in range(T):
            fro = 0.0
            for i in range(d):
                for j in range(d):
                    z = X[t, s, i, j]
                    fro += z.real ** 2 + z.imag ** 2
            scale = max(scale, np.sqrt(fro))
        if scale == 0.0:
            for i in range(d):
                for j in range(d):
                    A[s, i, j] = 0.0
            values[s] = 0.0
            status[s] = OK
            work[s] = 0
            continue
        Xs = np.empty((T, d, d), np.complex128)
        for t in range(T):
            for i in range(d):
                for j in range(d):
                    Xs[t, i, j] = X[t, s, i, j] / scale
        a = np.zeros((d, d), np.complex128)
        st, steps, val, nact = solve_site(Xs, sym, d, p, p_int, gap_tol, max_newton,
                                          init_active, with_zero, a)
        for i in range(d):
            for j in range(d):
                A[s, i, j] = a[i, j] * scale
        values[s] = val * scale**p
        status[s] = st
        work[s] = steps


@nb.njit(cache=True)
def _min_eig(M, d):
    if d == 1:
        return M[0, 0].real
    if d == 2:
        a = M[0, 0].real
        c = M[1, 1].real
        b = M[0, 1]
        h = 0.5 * (a - c)
        return 0.5 * (a + c) - np.sqrt(h * h + b.real * b.real + b.imag * b.imag)
    return np.linalg.eigvalsh(M)[0]


@nb.njit(cache=True, parallel=True)
def constraint_slack(X, sym, A, out):
    """``out[k, s]`` = smallest eigenvalue of ``A[s] - c_k[s]``.

    Rows ``0..T-1`` hold ``A - x_t``; with ``sym`` rows ``T..2T-1`` hold
    ``A + x_t``.  Input matrices are symmetrized first.
    """
    T, S, d = X.shape[0], X.shape[1], X.shape[2]
    for s in nb.prange(S):
        M = np.empty((d, d), np.complex128)
        for k in range(T * (2 if sym else 1)):
            t = k if k < T else k - T
            sign = 1.0 if k < T else -1.0
            for i in range(d):
                for j in range(d):
                    u = A[s, i, j] - sign * X[t, s, i, j]
                    v = A[s, j, i] - sign * X[t, s, j, i]
                    M[i, j] = 0.5 * (u + np.conj(v))
            out[k, s] = _min_eig(M, d)


@nb.njit(cache=True, parallel=True)
def min_eigs(X, out):
    """Smallest eigenvalue of each symmetrized matrix of a (K, S, d, d) stack."""
    K, S, d = X.shape[0], X.shape[1], X.shape[2]
    for s in nb.prange(S):
        M = np.empty((d, d), np.complex128)
        for k in range(K):
            for i in range(d):
                for j in range(d):
                    M[i, j] = 0.5 * (X[k, s, i, j] + np.conj(X[k, s, j, i]))
            out[k, s] = _min_eig(M, d)
