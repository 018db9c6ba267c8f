"""Experiment harness: decay exponents, inequality checks and convergence.

Each decay experiment builds, for every dyadic scale ``j``, the family
``{M_{j,t}^alpha f_j : t in [1, 2] sampled}``, measures its maximal norm
and fits ``log2(norm)`` against ``j``.  The verdicts compare the fitted
slope with the predicted exponent plus a slack; constants are never
compared since none are available.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .lattice import (GridSpec, MatrixField, SpectrumField, dft_forward, dft_inverse,
                      gaussian_field, make_grid, random_band_limited_hermitian,
                      random_hermitian_field)
from .meansop import (FioSpec, OperatorPlan, fio_apply, hl_average, j_max, kernel_field,
                      kernel_l1, kernel_phi0, psi_average, spherical_mean)
from .ncspace import (MaximalFamily, field_lp_norm, maximal_norm_positive,
                      maximal_norm_selfadjoint, predicted_exponents)
from .special import m_hat_at_zero

CSV_COLUMNS = ("config_hash", "n", "d", "alpha", "p", "j", "T", "norm", "seconds")
REPORT_SCHEMA = "ncsms.report/1"
VERDICT_SCHEMA = "ncsms.verdict/1"
TEST_FUNCTIONS = ("white-band", "gaussian", "matrix-random", "zero")


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return format(x, ".17g")
    return str(x)


def _p_json(p):
    return "inf" if math.isinf(p) else p


@dataclass
class ExperimentConfig:
    """Parameters of a decay-type experiment.

    ``j_lo``/``j_hi`` bound the rows (``j_hi = None`` means the grid's
    ``j_max`` at ``t_lo``); slopes are fitted on ``j >= fit_from``.
    """

    n: int = 2
    N: int = 512
    L: float = 1.75
    alpha: float = 1.0
    p: float = 2.0
    d: int = 2
    j_lo: int = 2
    j_hi: int | None = None
    fit_from: int = 2
    T: int = 17
    t_lo: float = 1.0
    t_hi: float = 2.0
    test_function: str = "white-band"
    seed: int = 7
    width: float | None = None
    slack: float = 0.2
    gap_tol: float = 1e-7
    u: float | None = None
    record_timings: bool = False

    def __post_init__(self):
        if isinstance(self.p, str):
            self.p = math.inf if self.p == "inf" else float(self.p)
        self.p = float(self.p)
        if self.test_function not in TEST_FUNCTIONS:
            raise ValueError(f"test_function must be one of {TEST_FUNCTIONS}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 < self.t_lo <= self.t_hi:
            raise ValueError("need 0 < t_lo <= t_hi")
        jm = j_max(self.grid, self.t_lo)
        if self.j_hi is None:
            self.j_hi = jm
        if self.j_hi > jm:
            raise ValueError(f"j_hi = {self.j_hi} exceeds the grid's j_max = {jm}")
        if self.j_lo < 0 or self.j_lo > self.j_hi:
            raise ValueError("need 0 <= j_lo <= j_hi")

    @property
    def grid(self) -> GridSpec:
        return make_grid(self.n, self.N, self.L)

    @property
    def ts(self) -> np.ndarray:
        if self.T == 1:
            return np.array([self.t_lo])
        return np.linspace(self.t_lo, self.t_hi, self.T)

    @property
    def js(self) -> list[int]:
        return list(range(self.j_lo, self.j_hi + 1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p"] = _p_json(self.p)
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ------------------------------------------------------- test functions


def white_band_field(grid: GridSpec, d: int, seed, lo: float, hi: float,
                     p: float = 2.0) -> MatrixField:
    """Hermitian field with i.i.d. Gaussian spectrum on ``lo <= |xi| <= hi``.

    Normalized to unit ``L_p`` norm (``p = inf``: unit max operator norm).
    """
    rng = np.random.default_rng(seed)
    shape = grid.shape + (d, d)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    rho = grid.freq_radius()
    mask = (rho >= lo) & (rho <= hi)
    w = dft_inverse(SpectrumField(grid, z * mask[..., None, None])).values
    v = 0.5 * (w + np.conj(np.swapaxes(w, -1, -2)))
    f = MatrixField(grid, v, hermitian=True)
    nrm = field_lp_norm(f, p)
    if nrm == 0:
        raise ValueError("band contains no lattice frequencies")
    return MatrixField(grid, v / nrm, hermitian=True)


def _seed(cfg: ExperimentConfig, j: int):
    return np.random.SeedSequence([cfg.seed, j])


def input_field(cfg: ExperimentConfig, j: int) -> MatrixField:
    """Input field used at scale ``j``."""
    g = cfg.grid
    if cfg.test_function == "white-band":
        return white_band_field(g, cfg.d, _seed(cfg, j), 2.0 ** (j - 2), 2.0 ** (j + 1), cfg.p)
    if cfg.test_function == "gaussian":
        rng = np.random.default_rng(cfg.seed)
        z = rng.standard_normal((cfg.d, cfg.d)) + 1j * rng.standard_normal((cfg.d, cfg.d))
        width = cfg.width if cfg.width is not None else g.L / 8
        return gaussian_field(g, width, 0.5 * (z + z.conj().T))
    if cfg.test_function == "matrix-random":
        return random_hermitian_field(g, cfg.d, cfg.seed)
    return MatrixField(g, np.zeros(g.shape + (cfg.d, cfg.d)), hermitian=True)


# ------------------------------------------------------------- reports


def fit_slope(js: Sequence[float], values: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log2(values)`` against ``js`` and its standard error."""
    x = np.asarray(js, dtype=float)
    y = np.log2(np.asarray(values, dtype=float))
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("need at least two distinct j values to fit a slope")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    if len(x) > 2:
        resid = y - (ym + slope * (x - xm))
        se = math.sqrt(float(np.sum(resid**2)) / (len(x) - 2) / sxx)
    else:
        se = 0.0
    return slope, se


@dataclass
class ExponentReport:
    """Rows ``(j, norm, seconds)``, fitted slope, prediction and verdict."""

    rows: list
    fitted: float | None
    predicted: float
    slack: float
    verdict: str
    fit_from: int = 2
    stderr: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def fit_rows(self):
        return [r for r in self.rows if r["j"] >= self.fit_from and not r.get("skipped")]

    def refit(self) -> float:
        rows = self.fit_rows()
        return fit_slope([r["j"] for r in rows], [r["norm"] for r in rows])[0]

    def verdict_json(self) -> dict:
        return {"schema": VERDICT_SCHEMA, "predicted": self.predicted, "fitted": self.fitted,
                "slack": self.slack, "pass": self.passed, "verdict": self.verdict}

    def to_json(self) -> dict:
        return {"schema": REPORT_SCHEMA, "rows": self.rows, "fitted": self.fitted,
                "stderr": self.stderr, "predicted": self.predicted, "slack": self.slack,
                "verdict": self.verdict, "fit_from": self.fit_from, "metadata": self.metadata}

    def to_csv(self, record_timings: bool = False) -> str:
        cfg = self.metadata.get("config", {})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            secs = _fmt(r["seconds"]) if record_timings else ""
            w.writerow([self.metadata.get("config_hash", ""), cfg.get("n", ""),
                        cfg.get("d", ""), _fmt(float(cfg.get("alpha", "nan"))),
                        _fmt(float(cfg.get("p", "nan"))), r["j"], cfg.get("T", ""),
                        _fmt(r["norm"]), secs])
        return buf.getvalue()


def _verdict(rows, fit_from, predicted, slack):
    use = [r for r in rows if r["j"] >= fit_from and not r.get("skipped")]
    if all(r["norm"] == 0 for r in rows):
        return None, None, "degenerate input"
    if len(use) < 2 or any(r["norm"] <= 0 for r in use):
        return None, None, "insufficient rows"
    slope, se = fit_slope([r["j"] for r in use], [r["norm"] for r in use])
    return slope, se, "pass" if slope <= predicted + slack else "fail"


def piece_family(f: MatrixField, plan: OperatorPlan, j: int, ts, kind="selfadjoint"
                 ) -> MaximalFamily:
    stack = plan.piece_stack(f, j, ts)
    return MaximalFamily.from_stack(ts, stack, kind, f.grid, validate=False)


def maximal_value(fam: MaximalFamily, p: float, gap_tol: float = 1e-7) -> float:
    if fam.kind == "positive":
        return maximal_norm_positive(fam, p, gap_tol=gap_tol)[0]
    return maximal_norm_selfadjoint(fam, p, gap_tol=gap_tol)[0]


def decay_experiment(cfg: ExperimentConfig, progress: Callable | None = None,
                     predicted: float | None = None) -> ExponentReport:
    """Maximal norms of the dyadic-piece families over ``j`` and the fitted exponent.

    The predicted slope is ``mu`` from the exponent bookkeeping (``-wbar``
    at ``p = 2`` and ``p = inf``).  Solver failures propagate with the
    completed rows attached as ``exc.partial_rows``.
    """
    ps = predicted_exponents(cfg.n, max(cfg.p, 2.0), cfg.alpha, cfg.u)
    pred = ps.mu if predicted is None else predicted
    plan = OperatorPlan(cfg.grid, cfg.alpha)
    rows = []
    ts = cfg.ts
    for j in cfg.js:
        t0 = time.perf_counter()
        f = input_field(cfg, j)
        if not np.any(f.values):
            norm = 0.0
        else:
            fam = piece_family(f, plan, j, ts)
            try:
                norm = maximal_value(fam, cfg.p, cfg.gap_tol)
            except Exception as exc:
                exc.partial_rows = rows
                raise
        rows.append({"j": j, "norm": norm, "seconds": time.perf_counter() - t0,
                     "skipped": j < cfg.fit_from})
        if progress:
            progress(rows[-1])
    slope, se, verdict = _verdict(rows, cfg.fit_from, pred, cfg.slack)
    meta = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(),
            "exponents": ps.as_dict(), "kind": "decay"}
    return ExponentReport(rows, slope, pred, cfg.slack, verdict, cfg.fit_from, se, meta)


# ------------------------------------------------------- p = 4 and FIO


def spacetime_norms(f: MatrixField, spec: FioSpec, t_nodes: np.ndarray) -> dict:
    """``L_2``, ``L_4`` and ``L_inf`` norms of ``F_j f`` over space x time.

    Time integration is the Riemann sum on uniform ``t_nodes``.
    """
    F = dft_forward(f)
    dt = float(t_nodes[1] - t_nodes[0]) if len(t_nodes) > 1 else 1.0
    s2 = s4 = 0.0
    sup = 0.0
    for t in t_nodes:
        v = fio_apply(f, spec, float(t), F).values.reshape(-1, f.d, f.d)
        # Gram matrices avoid a per-site SVD: tr|v|^2 = tr G, tr|v|^4 = ||G||_F^2
        G = np.conj(np.swapaxes(v, -1, -2)) @ v
        tr = np.einsum("sii->s", G).real
        s2 += float(np.sum(tr))
        s4 += float(np.sum(np.abs(G) ** 2))
        if f.d == 2:
            top = 0.5 * (tr + np.sqrt((G[:, 0, 0].real - G[:, 1, 1].real) ** 2
                                      + 4 * np.abs(G[:, 0, 1]) ** 2))
        else:
            top = np.linalg.eigvalsh(G)[:, -1]
        sup = max(sup, math.sqrt(max(float(top.max(initial=0.0)), 0.0)))
    w = f.grid.cell_volume * dt
    return {"L2": math.sqrt(s2 * w), "L4": (s4 * w) ** 0.25, "Linf": sup,
            "measure": len(t_nodes) * dt * f.grid.L**f.grid.n}


def fio_probe(cfg: ExperimentConfig, nodes: int = 33) -> dict:
    """Fit the growth exponent ``u_hat`` of ``||F_j f_j||_{L_4(x,t)} / ||f_j||_4``.

    ``f_j`` is the scale-``j`` input normalized in ``L_4``.  Per scale the
    Hoelder sandwich ``||g||_4 <= ||g||_2^(1/2) ||g||_inf^(1/2)`` is checked as
    an internal consistency test of the space-time quadrature.
    """
    t_nodes = np.linspace(0.5, 2.5, nodes)
    rows = []
    for j in cfg.js:
        f = input_field(cfg, j)
        spec = FioSpec(j)
        nrm = spacetime_norms(f, spec, t_nodes)
        f4 = field_lp_norm(f, 4)
        ratio = nrm["L4"] / f4 if f4 > 0 else 0.0
        holder = nrm["L4"] <= math.sqrt(nrm["L2"] * nrm["Linf"]) * (1 + 1e-12)
        rows.append({"j": j, "ratio": ratio, "L2": nrm["L2"], "L4": nrm["L4"],
                     "Linf": nrm["Linf"], "holder_ok": bool(holder)})
    use = [r for r in rows if r["j"] >= cfg.fit_from and r["ratio"] > 0]
    if len(use) >= 2:
        u_hat, se = fit_slope([r["j"] for r in use], [r["ratio"] for r in use])
    else:
        u_hat, se = math.nan, math.nan
    return {"u_hat": u_hat, "stderr": se, "rows": rows,
            "consistent": bool(all(r["holder_ok"] for r in rows)
                               and (math.isnan(u_hat) or u_hat + 2 * se + 0.05 >= 0))}


def p4_experiment(cfg: ExperimentConfig, u_report: dict | None = None,
                  progress: Callable | None = None) -> ExponentReport:
    """Decay experiment at ``p = 4`` judged against ``-wbar + u_hat - 1/4``."""
    cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "p": 4.0})
    probe = fio_probe(cfg) if u_report is None else u_report
    u_hat = probe["u_hat"]
    wbar = cfg.n / 2 + cfg.alpha - 1
    pred = -wbar + (u_hat - 0.25)
    rep = decay_experiment(cfg, progress, predicted=pred)
    rep.metadata["kind"] = "p4"
    rep.metadata["u_hat"] = u_hat
    rep.metadata["u_hat_stderr"] = probe["stderr"]
    rep.metadata["probe_rows"] = probe["rows"]
    rep.metadata["probe_consistent"] = probe["consistent"]
    return rep


# ------------------------------------------------------- kernel bounds


def kernel_l1_experiment(alpha: float, js: Iterable[int], ts: Iterable[float],
                         grid: GridSpec) -> dict:
    """``||G_{j,t}||_1 / ||G_{1,1}||_1`` over ``j`` and ``t``."""
    base = kernel_l1(kernel_field(alpha, 1, 1.0, grid))
    table = {}
    for t in ts:
        for j in js:
            table[(j, float(t))] = kernel_l1(kernel_field(alpha, j, t, grid)) / base
    return {"base": base, "ratios": table, "sup": max(table.values())}


def phi0_envelope(alpha: float, grid: GridSpec, ts=(0.5, 1.0, 2.0), power: int = 4) -> dict:
    """Constants ``C_t = max |Phi_{0,t}(x)| t^n (1 + |x|/t)^power``.

    The constant fitted at ``t = 1`` must serve every ``t`` within a factor 2.
    """
    r = grid.radius()
    consts = {}
    for t in ts:
        k = kernel_phi0(alpha, t, grid).values[..., 0, 0].real
        consts[float(t)] = float(np.max(np.abs(k) * t**grid.n * (1 + r / t) ** power))
    c1 = consts.get(1.0, next(iter(consts.values())))
    ratios = {t: c / c1 for t, c in consts.items()}
    return {"C": c1, "constants": consts, "ratios": ratios,
            "pass": all(0.5 <= q <= 2.0 for q in ratios.values())}


# ---------------------------------------------- pointwise inequalities


def _abs_power(x: np.ndarray, m: int) -> np.ndarray:
    """``|x|^(2m) = (x^* x)^m`` sitewise."""
    a = np.conj(np.swapaxes(x, -1, -2)) @ x
    out = a
    for _ in range(m - 1):
        out = out @ a
    return out


def _d_abs_power(x: np.ndarray, dx: np.ndarray, m: int) -> np.ndarray:
    """Derivative of ``(x^* x)^m`` along ``dx``."""
    xh = np.conj(np.swapaxes(x, -1, -2))
    a = xh @ x
    da = np.conj(np.swapaxes(dx, -1, -2)) @ x + xh @ dx
    pw = [np.broadcast_to(np.eye(x.shape[-1]), x.shape)]
    for _ in range(m - 1):
        pw.append(pw[-1] @ a)
    out = np.zeros_like(a)
    for k in range(m):
        out = out + pw[k] @ da @ pw[m - 1 - k]
    return out


def simpson_nodes(a: float, b: float, nodes: int = 65) -> tuple[np.ndarray, np.ndarray]:
    if nodes % 2 == 0 or nodes < 3:
        raise ValueError("composite Simpson needs an odd node count >= 3")
    s = np.linspace(a, b, nodes)
    w = np.ones(nodes)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return s, w * (b - a) / (nodes - 1) / 3


def ftc_check(f: MatrixField, alpha: float, j: int, t: float, m: int, nodes: int = 65,
              plan: OperatorPlan | None = None) -> dict:
    """Compare ``|x_t|^(2m) - |x_1|^(2m)`` with Simpson's rule for ``int_1^t d/ds |x_s|^(2m)``.

    ``x_s = M_{j,s}^alpha f``; the error is the global relative Frobenius error.
    """
    plan = plan or OperatorPlan(f.grid, alpha)
    s, w = simpson_nodes(1.0, t, nodes)
    X = plan.piece_stack(f, j, s)
    D = plan.piece_stack(f, j, s, derivative=True)
    lhs = _abs_power(X[-1], m) - _abs_power(X[0], m)
    rhs = np.zeros_like(lhs)
    for k in range(len(s)):
        rhs += w[k] * _d_abs_power(X[k], D[k], m)
    err = float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), 1e-300))
    return {"j": j, "m": m, "t": t, "rel_error": err}


def sobolev_bound_check(f: MatrixField, alpha: float, j: int, m: int, T: int = 17,
                        nodes: int = 65, plan: OperatorPlan | None = None,
                        gap_tol: float = 1e-7) -> dict:
    """Check the maximal bound for ``x_t = M_{j,t}^alpha f`` on ``t in [1, 2]``.

    LHS: self-adjoint maximal ``L_{2m}`` norm over ``T`` samples, raised to
    ``2m``.  RHS: ``||x_1||^{2m} + 2m ||x||^{2m-1}_{L_{2m}(B)} ||d_t x||_{L_{2m}(B)}``
    with the ``B`` norms integrating ``t`` over ``[1, 2]`` by Simpson's rule.
    """
    plan = plan or OperatorPlan(f.grid, alpha)
    p = 2 * m
    h = f.grid.cell_volume
    if not np.any(f.values):
        return {"lhs": 0.0, "rhs": 0.0, "margin": 0.0, "pass": True, "degenerate": True}
    ts = np.linspace(1.0, 2.0, T) if T > 1 else np.array([1.0])
    fam = piece_family(f, plan, j, ts)
    lhs = maximal_norm_selfadjoint(fam, p, gap_tol=gap_tol)[0] ** p
    s, w = simpson_nodes(1.0, 2.0, nodes)
    X = plan.piece_stack(f, j, s)
    D = plan.piece_stack(f, j, s, derivative=True)

    def trp(v):
        ev = np.linalg.eigvalsh(v)
        return float(np.sum(np.abs(ev) ** p)) * h

    x_b = sum(w[k] * trp(X[k]) for k in range(len(s))) ** (1 / p)
    dx_b = sum(w[k] * trp(D[k]) for k in range(len(s))) ** (1 / p)
    rhs = trp(X[0]) + p * x_b ** (p - 1) * dx_b
    return {"j": j, "m": m, "lhs": lhs, "rhs": rhs, "margin": rhs - lhs,
            "pass": rhs - lhs >= -1e-9 * max(1.0, rhs), "degenerate": False}


def dyadic_block_index(t: float) -> int:
    """``k`` with ``t in [2^-k, 2^(-k+1))``."""
    return int(math.floor(-math.log2(t))) + 1


def dyadic_split_check(fam: MaximalFamily, p: float, gap_tol: float = 1e-7) -> dict:
    """``||sup+_t x_t||_p^p <= sum_k ||sup+_{t in I_k} x_t||_p^p``."""
    if fam.kind == "general":
        raise ValueError("split check needs a positive or self-adjoint family")
    total = maximal_value(fam, p, gap_tol) ** p
    blocks = {}
    for i, t in enumerate(fam.ts):
        blocks.setdefault(dyadic_block_index(t), []).append(i)
    parts = {k: maximal_value(fam.subfamily(idx), p, gap_tol) ** p
             for k, idx in sorted(blocks.items())}
    rhs = sum(parts.values())
    return {"lhs": total, "rhs": rhs, "blocks": parts, "margin": rhs - total,
            "pass": rhs - total >= -1e-6 * max(1.0, rhs)}


def envelope_domination_check(f_builder: Callable[[GridSpec], MatrixField],
                              grids: Sequence[GridSpec], ts: Sequence[float],
                              p: float = 2.0, gap_tol: float = 1e-7) -> dict:
    """Maximal norms of ``{psi_t * f}`` and ``{A_t f}`` over two resolutions.

    ``A_t`` is the Hardy-Littlewood average.  Reports the ratios to
    ``||f||_p`` and their drift between the resolutions (pass: <= 1.5).
    """
    out = []
    for g in grids:
        f = f_builder(g)
        fn = field_lp_norm(f, p)
        if fn == 0:
            out.append({"N": g.N, "psi": 0.0, "hl": 0.0})
            continue
        stacks = {}
        for name, op in (("psi", psi_average), ("hl", hl_average)):
            st = np.stack([op(f, t).values.reshape(-1, f.d, f.d) for t in ts])
            st = 0.5 * (st + np.conj(np.swapaxes(st, -1, -2)))
            fam = MaximalFamily.from_stack(ts, st, "positive", g, validate=False)
            stacks[name] = maximal_norm_positive(fam, p, gap_tol=gap_tol)[0] / fn
        out.append({"N": g.N, **stacks})
    if len(out) < 2 or out[0]["psi"] == 0:
        return {"rows": out, "drift": 1.0, "pass": True}
    drift = max(max(a[k], b[k]) / min(a[k], b[k])
                for a, b in zip(out, out[1:]) for k in ("psi", "hl"))
    return {"rows": out, "drift": drift, "pass": drift <= 1.5}


def square_lemma_defect(f: MatrixField, alpha: float, t: float,
                        mass: float | None = None) -> float:
    """Smallest eigenvalue over sites of ``mass * M_t(|f|^2) - |M_t f|^2``.

    ``mass`` defaults to ``int m_alpha = m_hat_alpha(0)``.
    """
    mass = m_hat_at_zero(alpha, f.grid.n) if mass is None else mass
    sq = MatrixField(f.grid, _abs_power(f.values, 1), hermitian=False)
    sq = MatrixField(f.grid, 0.5 * (sq.values + np.conj(np.swapaxes(sq.values, -1, -2))),
                     hermitian=True)
    a = spherical_mean(sq, alpha, t).values
    b = spherical_mean(f, alpha, t).values
    D = mass * a - _abs_power(b, 1)
    D = 0.5 * (D + np.conj(np.swapaxes(D, -1, -2)))
    return float(np.min(np.linalg.eigvalsh(D.reshape(-1, f.d, f.d))))


# ------------------------------------------------------------ convergence


def convergence_experiment(f: MatrixField, alpha: float, ts: Sequence[float]) -> dict:
    """``e(t) = max_x ||M_t f(x) / m_hat_alpha(0) - f(x)||_op`` along ``ts``.

    The means are divided by their mass ``m_hat_alpha(0)`` so that the
    limit ``t -> 0`` is ``f`` itself.
    """
    mass = m_hat_at_zero(alpha, f.grid.n)
    errs = []
    for t in ts:
        M = spherical_mean(f, alpha, t).values / mass - f.values
        errs.append(field_lp_norm(MatrixField(f.grid, M), math.inf))
    order = np.argsort(-np.asarray(ts))
    e_sorted = [errs[i] for i in order]
    monotone = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(e_sorted, e_sorted[1:]))
    return {"ts": [float(t) for t in ts], "errors": errs, "monotone": monotone,
            "final": errs[int(order[-1])]}


# ---------------------------------------------------------- exponents


def admissibility_table(n: int, ps: Iterable[float], u: float | None = None) -> list[dict]:
    """Threshold on ``alpha`` and the sign-change point of ``mu`` for each ``p``."""
    rows = []
    for p in ps:
        ps_ = predicted_exponents(n, p, 0.0, u)
        rows.append({"n": n, "p": _p_json(ps_.p), "threshold": ps_.threshold,
                     "mu_boundary": ps_.alpha_boundary, "s_p": ps_.s_p, "pbar": ps_.pbar,
                     "u": ps_.u})
    return rows


def radial_quadrature_mass(alpha: float, n: int) -> float:
    """``int_{|y|<=1} (1-|y|^2)^(alpha-1) dy / Gamma(alpha)`` by adaptive quadrature."""
    surf = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    if alpha == 0:
        raise ValueError("alpha = 0 has no integrable kernel form")
    # substitute r = sin(theta) to remove the endpoint singularity
    fn = lambda th: math.sin(th) ** (n - 1) * math.cos(th) ** (2 * alpha - 1)  # noqa: E731
    val, _ = integrate.quad(fn, 0, math.pi / 2, epsabs=0.0, epsrel=1e-12, limit=200)
    return surf * val / math.gamma(alpha)
