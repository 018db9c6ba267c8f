"""Fast built-in invariant suite behind ``ncsms selftest``.

Each check is small enough to run in well under a minute in total; the
full pytest suite covers the same ground at larger sizes.
"""

from __future__ import annotations

import math
import time

import numpy as np


def _checks():
    from .lattice import (dft_forward, dft_inverse, gaussian_field, l2_mass, make_grid,
                          random_band_limited_hermitian, random_hermitian_field)
    from .meansop import OperatorPlan, dyadic_piece, half_wave_piece, spherical_mean
    from .ncspace import (MaximalFamily, maximal_norm_positive, maximal_norm_selfadjoint,
                          pbar_n, predicted_exponents)
    from .special import (DEFAULT_PARTITION, bessel_j, gamma_fn, m_hat, m_hat_at_zero)
    from .verify import ftc_check, radial_quadrature_mass, square_lemma_defect

    def plancherel():
        g = make_grid(2, 32, 4.0)
        f = random_hermitian_field(g, 3, 1)
        F = dft_forward(f)
        back = dft_inverse(F)
        return max(abs(l2_mass(f) - l2_mass(F)) / l2_mass(f),
                   float(np.max(np.abs(back.values - f.values)))) < 1e-10

    def gaussian_selfdual():
        g = make_grid(1, 256, 32.0)
        F = dft_forward(gaussian_field(g, 1.0))
        xi = g.freq_axis()
        return float(np.max(np.abs(F.values[:, 0, 0] - np.exp(-np.pi * xi**2)))) < 1e-8

    def bessel_closed_forms():
        r = np.linspace(0.1, 200, 4001)
        s = np.sqrt(2 / (np.pi * r))
        e1 = np.abs(bessel_j(0.5, r) - s * np.sin(r)) / np.abs(s * np.sin(r)).clip(1e-300)
        ok = np.abs(s * np.sin(r)) > 1e-3
        return bool(np.max(e1[ok]) < 1e-8) and abs(gamma_fn(5) - 24) < 1e-12

    def m_hat_origin():
        return all(abs(m_hat(a, n, 0.0) - radial_quadrature_mass(a, n)) < 1e-8 * m_hat_at_zero(a, n)
                   for a in (0.5, 1.0, 2.0) for n in (1, 2, 3))

    def partition_sum():
        s = np.logspace(-3, 3, 500)
        tot = sum(DEFAULT_PARTITION.phi(s / 2.0**j) for j in range(-20, 21))
        return float(np.max(np.abs(tot - 1))) < 1e-12

    def dyadic_reassembly():
        g = make_grid(2, 128, 4.0)
        f = random_band_limited_hermitian(g, 2, 3, max_index=6)
        plan = OperatorPlan(g, 1.0)
        tot = sum(dyadic_piece(f, 1.0, j, 1.0, plan).values for j in range(0, 4))
        return float(np.max(np.abs(tot - spherical_mean(f, 1.0, 1.0).values))) < 1e-10

    def half_wave_split():
        g = make_grid(2, 256, 3.0)
        f = random_band_limited_hermitian(g, 1, 5, max_index=120)
        P = dyadic_piece(f, 1.0, 4, 1.0).values
        H = half_wave_piece(f, 1.0, 4, 1.0, 1).values + half_wave_piece(f, 1.0, 4, 1.0, 2).values
        return float(np.linalg.norm(P - H) / np.linalg.norm(P)) < 1e-4

    def commuting_family():
        fam = MaximalFamily([0, 1], [np.diag([1.0, 0]), np.diag([0, 1.0])], "positive")
        vals = [maximal_norm_positive(fam, p)[0] for p in (1, 2, math.inf)]
        return np.allclose(vals, [2, math.sqrt(2), 1], atol=1e-6)

    def certificate_slack():
        rng = np.random.default_rng(0)
        z = rng.standard_normal((5, 50, 2, 2)) + 1j * rng.standard_normal((5, 50, 2, 2))
        x = 0.5 * (z + np.conj(np.swapaxes(z, -1, -2)))
        fam = MaximalFamily.from_stack(np.arange(5.0), x, "selfadjoint")
        v, cert = maximal_norm_selfadjoint(fam, 2)
        return cert.valid() and abs(cert.norm - v) <= 1e-6 * v

    def square_lemma():
        g = make_grid(2, 64, 8.0)
        f = random_band_limited_hermitian(g, 2, 11, max_index=8)
        return all(square_lemma_defect(f, a, 1.0) >= -1e-8 for a in (0.0, 0.5, 1.0))

    def ftc_identity():
        g = make_grid(2, 64, 2.0)
        f = random_band_limited_hermitian(g, 2, 4)
        return ftc_check(f, 1.0, 2, 1.25, 1)["rel_error"] <= 1e-3

    def exponent_arithmetic():
        return (abs(predicted_exponents(3, 2, 0).threshold + 0.5) < 1e-15
                and abs(predicted_exponents(2, 4, 0).threshold + 0.25) < 1e-15
                and pbar_n(2) == 4 and pbar_n(3) == 4)

    return [
        ("transform roundtrip and Plancherel", plancherel),
        ("Gaussian self-duality", gaussian_selfdual),
        ("Bessel closed forms and Gamma", bessel_closed_forms),
        ("multiplier value at the origin", m_hat_origin),
        ("partition of unity telescopes", partition_sum),
        ("dyadic pieces reassemble the mean", dyadic_reassembly),
        ("half-wave split", half_wave_split),
        ("commuting family closed forms", commuting_family),
        ("certificate slack", certificate_slack),
        ("square lemma", square_lemma),
        ("FTC identity", ftc_identity),
        ("exponent arithmetic", exponent_arithmetic),
    ]


def run_selftest(emit=print) -> bool:
    ok_all = True
    for name, fn in _checks():
        t0 = time.perf_counter()
        try:
            ok = bool(fn())
            note = ""
        except Exception as exc:  # a crash is a failed check, not an abort
            ok, note = False, f" ({type(exc).__name__}: {exc})"
        ok_all &= ok
        emit(f"{'PASS' if ok else 'FAIL'}  {name}  [{time.perf_counter() - t0:.2f}s]{note}")
    return ok_all
