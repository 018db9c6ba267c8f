import math

import numpy as np
import pytest
from scipy import integrate

from ncsms.lattice import (MatrixField, field_from_scalar, gaussian_field, make_grid,
                           random_band_limited_hermitian)
from ncsms.meansop import OperatorPlan, dyadic_piece
from ncsms.ncspace import MaximalFamily, field_lp_norm, maximal_norm_positive
from ncsms.special import m_hat_at_zero
from ncsms.verify import (CSV_COLUMNS, ExperimentConfig, ExponentReport, admissibility_table,
                          convergence_experiment, decay_experiment, dyadic_block_index,
                          dyadic_split_check, envelope_domination_check, fio_probe, fit_slope,
                          ftc_check, input_field, kernel_l1_experiment, p4_experiment,
                          phi0_envelope, piece_family, simpson_nodes, sobolev_bound_check,
                          square_lemma_defect)

from .oracles import random_psd

SMALL = dict(N=128, L=1.75, T=5, j_lo=2, j_hi=4)


# ------------------------------------------------------------- configs


def test_config_defaults_and_hash():
    cfg = ExperimentConfig()
    assert cfg.js == [2, 3, 4, 5, 6] and cfg.T == 17 and cfg.slack == 0.2
    assert len(cfg.config_hash()) == 12
    assert cfg.config_hash() == ExperimentConfig.from_dict(cfg.to_dict()).config_hash()
    assert cfg.config_hash() != ExperimentConfig(seed=8).config_hash()
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="j_max"):
        ExperimentConfig(j_hi=7)
    with pytest.raises(ValueError):
        ExperimentConfig(test_function="square")
    assert ExperimentConfig(p="inf").p == math.inf


def test_white_band_input_is_normalized_and_banded():
    cfg = ExperimentConfig(**SMALL, p=4.0)
    f = input_field(cfg, 3)
    assert f.hermitian and field_lp_norm(f, 4) == pytest.approx(1.0)
    from ncsms.lattice import dft_forward
    F = dft_forward(f).values
    rho = cfg.grid.freq_radius()
    outside = (rho < 2.0 ** 1) | (rho > 2.0 ** 4)
    assert np.max(np.abs(F[outside])) <= 1e-12 * np.max(np.abs(F))


def test_fit_slope():
    js = [2, 3, 4, 5]
    slope, se = fit_slope(js, [2.0 ** (-1.5 * j + 3) for j in js])
    assert slope == pytest.approx(-1.5, abs=1e-14) and se == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_slope([2, 2], [1, 2])


# ------------------------------------------------------ decay experiments


def test_zero_input_is_degenerate():
    rep = decay_experiment(ExperimentConfig(**SMALL, test_function="zero"))
    assert rep.verdict == "degenerate input" and rep.fitted is None
    assert all(r["norm"] == 0 for r in rep.rows)


@pytest.mark.parametrize("gap_tol,rel", [(1e-7, False), (1e-10, True)])
def test_singleton_family_is_member_norm(gap_tol, rel):
    cfg = ExperimentConfig(**{**SMALL, "T": 1}, p=2.0, gap_tol=gap_tol)
    rep = decay_experiment(cfg)
    plan = OperatorPlan(cfg.grid, cfg.alpha)
    for row in rep.rows:
        piece = dyadic_piece(input_field(cfg, row["j"]), cfg.alpha, row["j"], 1.0, plan)
        scale = row["norm"] if rel else 1.0
        assert abs(row["norm"] - field_lp_norm(piece, 2)) <= 1e-8 * scale


@pytest.mark.parametrize("p", [2.0, math.inf])
@pytest.mark.parametrize("c", [3.7, 0.01, 32.0])
def test_slope_invariant_under_scaling(p, c):
    cfg = ExperimentConfig(**SMALL, p=p)
    plan = OperatorPlan(cfg.grid, cfg.alpha)
    from ncsms.verify import maximal_value
    norms = {1.0: [], c: []}
    for j in cfg.js:
        f = input_field(cfg, j)
        for k in norms:
            fam = piece_family(f.scale(k), plan, j, cfg.ts)
            norms[k].append(maximal_value(fam, p))
    s1 = fit_slope(cfg.js, norms[1.0])[0]
    sc = fit_slope(cfg.js, norms[c])[0]
    assert abs(s1 - sc) <= 1e-10


def test_report_refit_and_serialization():
    cfg = ExperimentConfig(**SMALL, p=2.0)
    rep = decay_experiment(cfg)
    assert abs(rep.refit() - rep.fitted) <= 1e-12
    assert rep.verdict_json()["pass"] == rep.passed
    assert rep.to_json()["schema"].startswith("ncsms.report")
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 1 + len(cfg.js)
    assert lines[1].split(",")[0] == cfg.config_hash()
    assert lines[1].endswith(",")  # timings are opt-in
    assert not rep.to_csv(record_timings=True).splitlines()[1].endswith(",")


def test_csv_is_reproducible():
    cfg = ExperimentConfig(**SMALL, p=2.0, seed=3)
    a = decay_experiment(cfg).to_csv()
    b = decay_experiment(ExperimentConfig.from_dict(cfg.to_dict())).to_csv()
    assert a.encode() == b.encode()


def test_report_verdict_logic():
    rows = [{"j": j, "norm": 2.0 ** -j, "seconds": 0.0} for j in range(2, 6)]
    from ncsms.verify import _verdict
    assert _verdict(rows, 2, -1.0, 0.2)[2] == "pass"
    assert _verdict(rows, 2, -1.5, 0.2)[2] == "fail"
    assert _verdict(rows[:1], 2, -1.0, 0.2)[2] == "insufficient rows"
    rep = ExponentReport(rows, -1.0, -1.0, 0.2, "pass")
    assert rep.passed and rep.refit() == pytest.approx(-1.0)


def test_partial_rows_on_failure(monkeypatch):
    import ncsms.verify as V

    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    cfg = ExperimentConfig(**SMALL)
    calls = {"n": 0}
    real = V.maximal_value

    def flaky(*a, **k):
        calls["n"] += 1
        return real(*a, **k) if calls["n"] < 2 else boom()

    monkeypatch.setattr(V, "maximal_value", flaky)
    with pytest.raises(RuntimeError) as info:
        V.decay_experiment(cfg)
    assert len(info.value.partial_rows) == 1


def test_fio_probe_and_p4_on_small_grid():
    cfg = ExperimentConfig(**SMALL, p=4.0)
    probe = fio_probe(cfg, nodes=9)
    assert all(r["holder_ok"] for r in probe["rows"])
    assert probe["consistent"]
    rep = p4_experiment(cfg, probe)
    assert rep.predicted == pytest.approx(-1.0 + probe["u_hat"] - 0.25)
    assert rep.metadata["kind"] == "p4"


# ------------------------------------------------ inequality checkers


def test_simpson_nodes():
    s, w = simpson_nodes(1.0, 2.0, 65)
    assert np.sum(w * s**3) == pytest.approx((16 - 1) / 4, rel=1e-14)
    with pytest.raises(ValueError):
        simpson_nodes(0, 1, 4)


@pytest.mark.parametrize("m", [1, 2])
@pytest.mark.parametrize("j", [2, 3])
def test_ftc_identity(m, j):
    g = make_grid(2, 64, 2.0)
    f = random_band_limited_hermitian(g, 2, 10 * m + j)
    assert ftc_check(f, 1.0, j, 1.25, m)["rel_error"] <= 1e-3


@pytest.mark.parametrize("seed", range(3))
def test_sobolev_bound(seed):
    g = make_grid(2, 64, 2.0)
    f = random_band_limited_hermitian(g, 2, seed)
    rep = sobolev_bound_check(f, 1.0, 2, 1, T=9)
    assert rep["margin"] >= 0 and rep["pass"]


def test_sobolev_bound_degenerate_cases():
    g = make_grid(2, 32, 2.0)
    zero = MatrixField(g, np.zeros(g.shape + (2, 2)), hermitian=True)
    assert sobolev_bound_check(zero, 1.0, 1, 1)["degenerate"]
    f = random_band_limited_hermitian(g, 2, 1)
    # one sample at t = 1: the left side is ||x_1||^2 and the bound is immediate
    rep = sobolev_bound_check(f, 1.0, 1, 1, T=1)
    x1 = field_lp_norm(dyadic_piece(f, 1.0, 1, 1.0), 2) ** 2
    assert rep["lhs"] == pytest.approx(x1, rel=1e-6) and rep["margin"] >= 0


def test_dyadic_blocks():
    assert dyadic_block_index(1.0) == 1 and dyadic_block_index(0.75) == 1
    assert dyadic_block_index(0.5) == 2 and dyadic_block_index(0.3) == 2
    assert dyadic_block_index(0.2) == 3


def test_split_single_block_is_equality():
    rng = np.random.default_rng(0)
    fam = MaximalFamily.from_stack([0.6, 0.7, 0.9], random_psd(rng, 3, 4, 2), "positive")
    rep = dyadic_split_check(fam, 2)
    assert rep["lhs"] == pytest.approx(rep["rhs"], rel=1e-12)


def test_split_commuting_family():
    rng = np.random.default_rng(1)
    ts = [0.15, 0.2, 0.3, 0.45, 0.6, 0.9]
    diag = rng.uniform(0, 1, (6, 5, 2))
    X = np.zeros((6, 5, 2, 2), complex)
    X[..., [0, 1], [0, 1]] = diag
    fam = MaximalFamily.from_stack(ts, X, "positive")
    rep = dyadic_split_check(fam, 2)
    blocks = [[0, 1], [2, 3], [4, 5]]
    ref = sum(np.sum(diag[b].max(axis=0) ** 2) for b in blocks)
    assert rep["rhs"] == pytest.approx(ref, rel=1e-6)
    assert rep["lhs"] == pytest.approx(np.sum(diag.max(axis=0) ** 2), rel=1e-6)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_split_random_psd(p):
    rng = np.random.default_rng(p)
    ts = [0.15, 0.2, 0.3, 0.45, 0.6, 0.9]
    for _ in range(5):
        fam = MaximalFamily.from_stack(ts, random_psd(rng, 6, 4, 2), "positive")
        rep = dyadic_split_check(fam, p)
        assert rep["margin"] >= -1e-6 and rep["pass"]


def test_envelope_constant_input():
    # constant PSD f: each family is a multiple of f, so the ratios are masses
    grids = [make_grid(2, 64, 16.0), make_grid(2, 128, 16.0)]
    mat = np.array([[2.0, 1.0], [1.0, 1.0]])
    build = lambda g: field_from_scalar(g, np.ones(g.shape), mat)  # noqa: E731
    rep = envelope_domination_check(build, grids, [1.0, 2.0], p=2)
    half = 8.0
    box = max(integrate.dblquad(lambda y, x: t**-2 * (1 + math.hypot(x, y) / t) ** -3,
                                -half, half, -half, half, epsabs=1e-10)[0] for t in (1.0, 2.0))
    for row in rep["rows"]:
        assert row["psi"] == pytest.approx(box, rel=5e-2)
        assert row["hl"] == pytest.approx(math.pi, rel=5e-2)
    assert rep["pass"]


def test_envelope_spike_is_resolution_stable():
    def spike(g):
        return gaussian_field(g, 0.25, np.diag([1.0, 0.5]))
    grids = [make_grid(2, 64, 8.0), make_grid(2, 128, 8.0)]
    rep = envelope_domination_check(spike, grids, [0.5, 1.0, 2.0], p=2)
    assert rep["pass"] and rep["drift"] <= 1.5
    zero = envelope_domination_check(lambda g: MatrixField(g, np.zeros(g.shape + (1, 1))),
                                     grids, [1.0])
    assert zero["pass"]


@pytest.mark.parametrize("n,N", [(2, 64), (3, 16)])
@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_square_lemma(n, N, alpha):
    g = make_grid(n, N, 4.0)
    for seed in range(5):
        f = random_band_limited_hermitian(g, 2, seed)
        assert square_lemma_defect(f, alpha, 1.0) >= -1e-8


def test_square_lemma_sphere_constant():
    g = make_grid(2, 64, 4.0)
    f = random_band_limited_hermitian(g, 2, 0)
    surface = 2 * math.pi
    assert surface >= m_hat_at_zero(0.0, 2)
    assert square_lemma_defect(f, 0.0, 1.0, mass=surface) >= -1e-8


def test_convergence_of_normalized_means():
    g = make_grid(2, 1024, 8.0)
    f = gaussian_field(g, 1.0, np.array([[1.0, 0.5j], [-0.5j, 2.0]]))
    ts = [2.0**-k for k in range(7)]
    rep = convergence_experiment(f, 1.0, ts)
    assert rep["monotone"] and rep["final"] < 1e-2
    # second-order decay: halving t divides the error by about 4
    e = rep["errors"]
    assert 3.5 <= e[-2] / e[-1] <= 4.5


def test_convergence_constant_field_is_exact():
    g = make_grid(2, 64, 8.0)
    f = field_from_scalar(g, np.ones(g.shape), np.eye(2))
    rep = convergence_experiment(f, 0.5, [1.0, 0.5])
    assert max(rep["errors"]) <= 1e-14


def test_convergence_rough_field_is_slower():
    g = make_grid(2, 256, 8.0)
    X, Y = g.coords()
    rough = field_from_scalar(g, np.sign(np.sin(2 * np.pi * X)) * np.sign(np.sin(2 * np.pi * Y)))
    smooth = gaussian_field(g, 1.0)
    ts = [1.0, 0.5, 0.25]
    assert (convergence_experiment(rough, 1.0, ts)["final"]
            > convergence_experiment(smooth, 1.0, ts)["final"])


def test_admissibility_table():
    rows = admissibility_table(3, [2.0, math.inf])
    assert rows[0]["threshold"] == -0.5 and rows[1]["threshold"] == -0.5
    assert rows[1]["p"] == "inf"
    assert admissibility_table(2, [4.0])[0]["threshold"] == -0.25


def test_kernel_experiments():
    g = make_grid(2, 512, 8.0)
    rep = kernel_l1_experiment(1.0, range(1, 5), (1.0, 1.5, 2.0), g)
    assert rep["sup"] <= 10 and rep["ratios"][(1, 1.0)] == pytest.approx(1.0)
    env = phi0_envelope(1.0, make_grid(2, 256, 32.0))
    assert env["pass"]
