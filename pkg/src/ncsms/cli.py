"""Command-line entry point ``ncsms``.

Exit codes: 0 success, 1 usage error, 2 a verdict or inequality check
failed, 3 numerical failure (solver, aliasing, grid resolution).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_VERDICT, EXIT_NUMERICAL = 0, 1, 2, 3
CLI_SCHEMA = "ncsms.cli/1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _pval(s: str) -> float:
    return math.inf if s.lower() in ("inf", "infinity") else float(s)


def _hash(obj: dict) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _emit(obj: dict, out: str | None = None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    return str(o)


def _clean(obj):
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ------------------------------------------------------------ arguments

_EXPERIMENT_FLAGS = {
    # flag: (config key, type)
    "n": ("n", int), "grid": ("N", int), "L": ("L", float), "alpha": ("alpha", float),
    "p": ("p", _pval), "d": ("d", int), "jmin": ("j_lo", int), "jmax": ("j_hi", int),
    "fit_from": ("fit_from", int), "T": ("T", int), "seed": ("seed", int),
    "slack": ("slack", float), "test_function": ("test_function", str),
    "width": ("width", float), "u": ("u", float), "gap_tol": ("gap_tol", float),
}


def _add_experiment_flags(sp):
    for flag, (_, typ) in _EXPERIMENT_FLAGS.items():
        sp.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    sp.add_argument("--record-timings", action="store_true", default=None)


def _add_common(sp):
    sp.add_argument("--config", help="JSON file with defaults; explicit flags win")
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--out", default=None)


def _load_config_file(path):
    if not path:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError("config file must hold a JSON object")
    obj.pop("schema", None)
    return obj


def _merged(args, keys: dict) -> dict:
    """Config file values overridden by explicitly given flags.

    ``keys`` maps flag names to config keys; unknown config keys are errors.
    """
    base = _load_config_file(getattr(args, "config", None))
    allowed = set(keys.values()) | {"record_timings"}
    unknown = set(base) - allowed
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for flag, key in keys.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    if getattr(args, "record_timings", None):
        base["record_timings"] = True
    return base


def _simple_keys(*names):
    return {n: n for n in names}


# ------------------------------------------------------------ commands


def _experiment_config(args):
    from .verify import ExperimentConfig

    cfg = _merged(args, {k: v[0] for k, v in _EXPERIMENT_FLAGS.items()})
    try:
        return ExperimentConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _write_report(rep, cfg, args):
    csv_text = rep.to_csv(record_timings=cfg.record_timings)
    if args.out:
        Path(args.out).write_text(csv_text)
        vpath = args.verdict or str(Path(args.out).with_suffix(".verdict.json"))
    else:
        sys.stdout.write(csv_text)
        vpath = args.verdict
    verdict = _clean({**rep.verdict_json(), "config_hash": cfg.config_hash()})
    if rep.metadata.get("u_hat") is not None:
        verdict["u_hat"] = _clean(rep.metadata["u_hat"])
        verdict["u_hat_stderr"] = _clean(rep.metadata["u_hat_stderr"])
    if vpath:
        Path(vpath).write_text(json.dumps(verdict, indent=2, sort_keys=True) + "\n")
    print(json.dumps(verdict, sort_keys=True))
    if rep.verdict == "degenerate input":
        return EXIT_OK
    return EXIT_OK if rep.passed else EXIT_VERDICT


def cmd_decay(args):
    from .verify import decay_experiment

    cfg = _experiment_config(args)
    print(f"config_hash {cfg.config_hash()}")
    rep = decay_experiment(cfg)
    return _write_report(rep, cfg, args)


def cmd_p4(args):
    from .verify import ExperimentConfig, p4_experiment

    cfg = _experiment_config(args)
    cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "p": 4.0})
    print(f"config_hash {cfg.config_hash()}")
    rep = p4_experiment(cfg)
    return _write_report(rep, cfg, args)


def cmd_kernel_l1(args):
    from .lattice import make_grid
    from .verify import kernel_l1_experiment

    c = _merged(args, _simple_keys("alpha", "n", "grid", "L", "jmax", "ts", "bound"))
    c = {"alpha": 1.0, "n": 2, "grid": 4096, "L": 8.0, "jmax": 6, "ts": [1.0, 1.5, 2.0],
         "bound": 10.0, **c}
    print(f"config_hash {_hash(c)}")
    g = make_grid(c["n"], c["grid"], c["L"])
    res = kernel_l1_experiment(c["alpha"], range(1, c["jmax"] + 1), c["ts"], g)
    ok = res["sup"] <= c["bound"]
    _emit(_clean({"schema": CLI_SCHEMA, "config_hash": _hash(c), "base_l1": res["base"],
                  "ratios": [{"j": j, "t": t, "ratio": r} for (j, t), r in res["ratios"].items()],
                  "sup_ratio": res["sup"], "bound": c["bound"], "pass": ok}), args.out)
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_phi0(args):
    from .lattice import make_grid
    from .verify import phi0_envelope

    c = _merged(args, _simple_keys("alpha", "n", "grid", "L"))
    c = {"alpha": 1.0, "n": 2, "grid": 256, "L": 32.0, **c}
    print(f"config_hash {_hash(c)}")
    res = phi0_envelope(c["alpha"], make_grid(c["n"], c["grid"], c["L"]))
    _emit(_clean({"schema": CLI_SCHEMA, "config_hash": _hash(c), **res}), args.out)
    return EXIT_OK if res["pass"] else EXIT_VERDICT


def cmd_maximal_norm(args):
    from .fieldio import load_family, write_mfld
    from .ncspace import (maximal_norm_general_upper, maximal_norm_positive,
                          maximal_norm_selfadjoint)

    c = _merged(args, _simple_keys("family", "p", "gap_tol"))
    if "family" not in c:
        raise UsageError("maximal-norm needs --family FILE")
    p = _pval(str(c.get("p", 2.0)))
    c["p"] = "inf" if math.isinf(p) else p
    print(f"config_hash {_hash(c)}")
    fam = load_family(c["family"])
    kw = {"gap_tol": c.get("gap_tol", 1e-7), "threads": args.threads}
    out = {"schema": CLI_SCHEMA, "config_hash": _hash(c), "kind": fam.kind, "p": c["p"],
           "members": len(fam), "d": fam.d}
    if fam.kind == "general":
        out["upper_bound"] = maximal_norm_general_upper(fam, p, **kw)
    else:
        solve = maximal_norm_positive if fam.kind == "positive" else maximal_norm_selfadjoint
        value, cert = solve(fam, p, **kw)
        out.update(value=value, certificate_norm=cert.norm, min_slack=cert.min_slack,
                   certificate_valid=cert.valid())
        if args.cert_out and fam.grid is not None:
            write_mfld(args.cert_out, cert.as_field())
    _emit(_clean(out), args.out)
    return EXIT_OK


def cmd_sobolev(args):
    from .lattice import make_grid, random_band_limited_hermitian
    from .verify import sobolev_bound_check

    c = _merged(args, _simple_keys("alpha", "n", "grid", "L", "j", "m", "seed", "d", "T"))
    c = {"alpha": 1.0, "n": 2, "grid": 64, "L": 2.0, "j": 2, "m": 1, "seed": 0, "d": 2,
         "T": 17, **c}
    print(f"config_hash {_hash(c)}")
    g = make_grid(c["n"], c["grid"], c["L"])
    f = random_band_limited_hermitian(g, c["d"], c["seed"])
    res = sobolev_bound_check(f, c["alpha"], c["j"], c["m"], c["T"])
    _emit(_clean({"schema": CLI_SCHEMA, "config_hash": _hash(c), **res}), args.out)
    return EXIT_OK if res["pass"] else EXIT_VERDICT


def random_psd_family(d: int, sites: int, ts, seed: int):
    from .ncspace import MaximalFamily

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((len(ts), sites, d, d)) + 1j * rng.standard_normal(
        (len(ts), sites, d, d))
    x = z @ np.conj(np.swapaxes(z, -1, -2)) / d
    return MaximalFamily.from_stack(ts, x, "positive")


def cmd_split(args):
    from .fieldio import load_family
    from .verify import dyadic_split_check

    c = _merged(args, _simple_keys("family", "p", "seed", "d", "sites"))
    c = {"p": 2.0, "seed": 0, "d": 2, "sites": 16, **c}
    p = _pval(str(c["p"]))
    c["p"] = "inf" if math.isinf(p) else p
    print(f"config_hash {_hash(c)}")
    if "family" in c:
        fam = load_family(c["family"])
    else:
        ts = np.concatenate([np.linspace(2.0**-k, 2.0 ** (-k + 1), 5, endpoint=False)
                             for k in (3, 2, 1)])
        fam = random_psd_family(c["d"], c["sites"], np.sort(ts), c["seed"])
    res = dyadic_split_check(fam, p)
    _emit(_clean({"schema": CLI_SCHEMA, "config_hash": _hash(c), **res}), args.out)
    return EXIT_OK if res["pass"] else EXIT_VERDICT


def cmd_envelope(args):
    from .lattice import gaussian_field, make_grid
    from .verify import envelope_domination_check

    c = _merged(args, _simple_keys("n", "grid", "L", "p", "seed", "d", "width"))
    c = {"n": 2, "grid": 64, "L": 16.0, "p": 2.0, "seed": 0, "d": 2, "width": 1.0, **c}
    print(f"config_hash {_hash(c)}")
    rng = np.random.default_rng(c["seed"])
    z = rng.standard_normal((c["d"], c["d"])) + 1j * rng.standard_normal((c["d"], c["d"]))
    mat = z @ z.conj().T
    grids = [make_grid(c["n"], c["grid"], c["L"]), make_grid(c["n"], 2 * c["grid"], c["L"])]
    res = envelope_domination_check(lambda g: gaussian_field(g, c["width"], mat), grids,
                                    [0.5, 1.0, 2.0], _pval(str(c["p"])))
    _emit(_clean({"schema": CLI_SCHEMA, "config_hash": _hash(c), **res}), args.out)
    return EXIT_OK if res["pass"] else EXIT_VERDICT


def cmd_converge(args):
    from .lattice import gaussian_field, make_grid
    from .verify import convergence_experiment

    c = _merged(args, _simple_keys("alpha", "n", "grid", "L", "width", "steps"))
    c = {"alpha": 1.0, "n": 2, "grid": 1024, "L": 8.0, "width": 1.0, "steps": 7, **c}
    print(f"config_hash {_hash(c)}")
    g = make_grid(c["n"], c["grid"], c["L"])
    mat = np.array([[1.0, 0.5j], [-0.5j, 2.0]])
    f = gaussian_field(g, c["width"], mat)
    ts = [2.0**-k for k in range(c["steps"])]
    res = convergence_experiment(f, c["alpha"], ts)
    ok = res["monotone"] and res["final"] < 1e-2
    _emit(_clean({"schema": CLI_SCHEMA, "config_hash": _hash(c), **res, "pass": ok}), args.out)
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_fio(args):
    from .fieldio import read_mfld, write_mfld
    from .lattice import make_grid
    from .meansop import FioSpec, fio_apply
    from .ncspace import field_lp_norm
    from .verify import white_band_field

    c = _merged(args, _simple_keys("j", "t", "n", "grid", "L", "seed", "d", "input"))
    c = {"j": 3, "t": 1.5, "n": 2, "grid": 256, "L": 2.0, "seed": 0, "d": 1, **c}
    print(f"config_hash {_hash(c)}")
    if "input" in c:
        f = read_mfld(c["input"])
    else:
        g = make_grid(c["n"], c["grid"], c["L"])
        f = white_band_field(g, c["d"], c["seed"], 2.0 ** (c["j"] - 2), 2.0 ** (c["j"] + 1))
    out = fio_apply(f, FioSpec(c["j"]), c["t"])
    if args.field_out:
        write_mfld(args.field_out, out)
    res = {"schema": CLI_SCHEMA, "config_hash": _hash(c),
           **{f"L{p}": field_lp_norm(out, p) for p in (2, 4)},
           "input_L2": field_lp_norm(f, 2), "input_L4": field_lp_norm(f, 4)}
    _emit(_clean(res), args.out)
    return EXIT_OK


def cmd_bessel(args):
    from .special import bessel_j

    c = _merged(args, _simple_keys("nu", "r"))
    if "nu" not in c or "r" not in c:
        raise UsageError("bessel needs --nu and --r")
    print(f"config_hash {_hash(c)}")
    try:
        val = float(bessel_j(c["nu"], c["r"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"J_{c['nu']:g}({c['r']:g}) = {val!r}")
    return EXIT_OK


def cmd_admissible(args):
    from .verify import admissibility_table

    c = _merged(args, _simple_keys("n", "p", "u"))
    if "n" not in c:
        raise UsageError("admissible needs --n")
    ps = c.get("p") or [2.0, 4.0, math.inf]
    ps = [_pval(str(p)) for p in (ps if isinstance(ps, list) else [ps])]
    c["p"] = ["inf" if math.isinf(p) else p for p in ps]
    print(f"config_hash {_hash(c)}")
    try:
        rows = admissibility_table(c["n"], ps, c.get("u"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for r in rows:
        print(f"n={r['n']} p={r['p']} threshold={r['threshold']:g} "
              f"mu_boundary={r['mu_boundary']:g}")
    if args.out:
        Path(args.out).write_text(json.dumps(_clean({"schema": CLI_SCHEMA, "rows": rows}),
                                             indent=2) + "\n")
    return EXIT_OK


def cmd_selftest(args):
    from .selftest import run_selftest

    print(f"config_hash {_hash({'selftest': True})}")
    return EXIT_OK if run_selftest(print) else EXIT_VERDICT


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ncsms", description="Matrix-valued spherical means laboratory")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    for name, fn, helptext in (("decay", cmd_decay, "maximal-norm decay exponent"),
                               ("p4", cmd_p4, "p = 4 decay with the FIO gain probe")):
        sp = sub.add_parser(name, help=helptext)
        _add_common(sp)
        _add_experiment_flags(sp)
        sp.add_argument("--verdict", default=None, help="verdict JSON path")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("kernel-l1", help="L1 norms of the G kernels")
    _add_common(sp)
    for f, t in (("alpha", float), ("n", int), ("grid", int), ("L", float), ("jmax", int),
                 ("bound", float)):
        sp.add_argument("--" + f, type=t, default=None)
    sp.add_argument("--ts", type=float, nargs="+", default=None)
    sp.set_defaults(func=cmd_kernel_l1)

    sp = sub.add_parser("phi0-envelope", help="decay envelope of the j = 0 kernel")
    _add_common(sp)
    for f, t in (("alpha", float), ("n", int), ("grid", int), ("L", float)):
        sp.add_argument("--" + f, type=t, default=None)
    sp.set_defaults(func=cmd_phi0)

    sp = sub.add_parser("maximal-norm", help="maximal norm of a family JSON")
    _add_common(sp)
    sp.add_argument("--family", default=None)
    sp.add_argument("--p", type=_pval, default=None)
    sp.add_argument("--gap-tol", dest="gap_tol", type=float, default=None)
    sp.add_argument("--cert-out", default=None, help="write the dominator as .mfld")
    sp.set_defaults(func=cmd_maximal_norm)

    sp = sub.add_parser("sobolev-check", help="maximal bound via the t-derivative")
    _add_common(sp)
    for f, t in (("alpha", float), ("n", int), ("grid", int), ("L", float), ("j", int),
                 ("m", int), ("seed", int), ("d", int), ("T", int)):
        sp.add_argument("--" + f, type=t, default=None)
    sp.set_defaults(func=cmd_sobolev)

    sp = sub.add_parser("split-check", help="dyadic splitting of the t-range")
    _add_common(sp)
    sp.add_argument("--family", default=None)
    for f, t in (("p", _pval), ("seed", int), ("d", int), ("sites", int)):
        sp.add_argument("--" + f, type=t, default=None)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("envelope-check", help="psi-envelope vs Hardy-Littlewood averages")
    _add_common(sp)
    for f, t in (("n", int), ("grid", int), ("L", float), ("p", _pval), ("seed", int),
                 ("d", int), ("width", float)):
        sp.add_argument("--" + f, type=t, default=None)
    sp.set_defaults(func=cmd_envelope)

    sp = sub.add_parser("converge", help="normalized means as t -> 0")
    _add_common(sp)
    for f, t in (("alpha", float), ("n", int), ("grid", int), ("L", float),
                 ("width", float), ("steps", int)):
        sp.add_argument("--" + f, type=t, default=None)
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("fio", help="apply the model FIO to a field")
    _add_common(sp)
    for f, t in (("j", int), ("t", float), ("n", int), ("grid", int), ("L", float),
                 ("seed", int), ("d", int)):
        sp.add_argument("--" + f, type=t, default=None)
    sp.add_argument("--input", default=None, help=".mfld input field")
    sp.add_argument("--field-out", default=None, help=".mfld output field")
    sp.set_defaults(func=cmd_fio)

    sp = sub.add_parser("bessel", help="evaluate J_nu(r)")
    _add_common(sp)
    sp.add_argument("--nu", type=float, default=None)
    sp.add_argument("--r", type=float, default=None)
    sp.set_defaults(func=cmd_bessel)

    sp = sub.add_parser("admissible", help="admissibility threshold for alpha")
    _add_common(sp)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--p", type=_pval, nargs="+", default=None)
    sp.add_argument("--u", type=float, default=None)
    sp.set_defaults(func=cmd_admissible)

    sp = sub.add_parser("selftest", help="run the built-in invariant suite")
    _add_common(sp)
    sp.set_defaults(func=cmd_selftest)
    return ap


def run(argv=None) -> int:
    from .lattice import AliasingError, GridError
    from .ncspace import InfeasibleFamily, SolverError

    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        if args.threads is not None:
            os.environ["NCSMS_THREADS"] = str(max(1, args.threads))
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, AliasingError, GridError, InfeasibleFamily, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileNotFoundError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
