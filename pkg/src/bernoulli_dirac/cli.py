"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
3 a numerical contract was violated (norm drift, boundary contamination,
Chebyshev order overflow).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import checks, io
from .dynamics import (
    BoundaryContaminationError,
    ChebyshevOrderError,
    NumericalContractError,
    Propagator,
    evolve,
    laplace_moment_energy,
    laplace_moment_time,
    mass_comparison,
    moment_series,
    radius_bound,
    safe_window,
)
from .model import DiracParams, LatticeWindow, PotentialSpec, build_dirac, delta_state, sample_realization
from .spectral import decay_fit, eigensolve, greens_column, greens_transfer_residual, nonrel_limit_error, wegner_estimate
from .transfer import (
    classify,
    critical_window_supremum,
    lyapunov,
    predict_localization,
    single_step,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _int(s) -> int:
    """Integer that also accepts ``1e6`` style input."""
    v = float(s)
    if v != int(v):
        raise argparse.ArgumentTypeError(f"{s!r} is not an integer")
    return int(v)


def _complex(s) -> complex:
    return complex(str(s).replace(" ", "").replace("i", "j"))


def _physics(p: argparse.ArgumentParser, V: float = 0.5, m: float = 0.0) -> None:
    p.add_argument("--m", type=float, default=m, help="mass (default %(default)s)")
    p.add_argument("--c", type=float, default=1.0, help="speed of light (default %(default)s)")
    p.add_argument("--V", type=float, default=V, help="Bernoulli amplitude (default %(default)s)")
    p.add_argument("--p", type=float, default=0.5, help="probability of +V (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default %(default)s)")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of option values; flags override it")
    p.add_argument("--out", type=Path, help=f"output directory (default ${io.OUTPUT_ENV} if set)")
    p.add_argument("--plot-data", action="store_true", help="also write a two-column gnuplot data file")


def _provenance(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "out", "plot_data"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _out_dir(args) -> Optional[Path]:
    if args.out is not None:
        return args.out
    return io.default_output_dir() if os.environ.get(io.OUTPUT_ENV) else None


def _emit_csv(args, name: str, columns, rows, plot: Optional[tuple] = None) -> None:
    prov = _provenance(args)
    for line in io.provenance_lines(prov):
        print(line)
    print(",".join(columns))
    for row in rows:
        vals = [row[c] for c in columns] if isinstance(row, dict) else row
        print(",".join(io.format_value(v) for v in vals))
    out = _out_dir(args)
    if out is not None:
        io.write_csv(out / f"{name}.csv", columns, rows, prov)
        if args.plot_data and plot is not None:
            io.write_plot_data(out / f"{name}.dat", plot[0], plot[1], prov)


def _params(args) -> tuple[DiracParams, PotentialSpec]:
    return DiracParams(args.m, args.c), PotentialSpec.bernoulli(args.V, args.p)


# subcommands


def cmd_lyapunov(args) -> int:
    params, spec = _params(args)
    rows = []
    for E in args.E:
        est = lyapunov(E, params, spec, args.steps, args.realizations, args.seed)
        rows.append({"E": E, "V": args.V, "m": args.m, "c": args.c, "p": args.p, "gamma": est.gamma,
                     "stderr": est.stderr, "steps": est.steps, "realizations": est.realizations,
                     "seed": args.seed})
    _emit_csv(args, "lyapunov", io.LYAPUNOV_COLUMNS, rows,
              ([r["E"] for r in rows], [r["gamma"] for r in rows]))
    return EXIT_OK


def cmd_classify(args) -> int:
    pred = predict_localization(args.E, args.V, args.m, args.c)
    params = DiracParams(args.m, args.c)
    plus = classify(single_step(args.E, args.V, params))
    minus = classify(single_step(args.E, -args.V, params))
    print(f"verdict: {pred.verdict.value}" + (f" ({pred.reason})" if pred.reason else ""))
    print(f"detail: {pred.detail}")
    print(f"site +V: {plus.value}")
    print(f"site -V: {minus.value}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    params, spec = _params(args)
    window = LatticeWindow.centered(args.L)
    real = sample_realization(spec, window, args.seed)
    dec = eigensolve(build_dirac(params, real))
    recs = []
    for j in range(len(dec)):
        E, st = dec.pair(j)
        fit = decay_fit(st)
        recs.append({"realization_seed": list(real.seed_record), "index": j, "eigenvalue": E,
                     "center": fit.center, "decay_rate": fit.rate, "fit_quality": fit.fit_quality})
    prov = _provenance(args)
    print(io.canonical_json({"provenance": prov}))
    for r in recs:
        print(io.canonical_json(r))
    out = _out_dir(args)
    if out is not None:
        io.write_eigen_jsonl(out / "spectrum.jsonl", recs, prov)
        if args.plot_data:
            io.write_plot_data(out / "spectrum.dat", [r["eigenvalue"] for r in recs],
                               [r["decay_rate"] for r in recs], prov)
    return EXIT_OK


def cmd_greens(args) -> int:
    params, spec = _params(args)
    window = LatticeWindow.centered(args.L)
    op = build_dirac(params, sample_realization(spec, window, args.seed))
    col = greens_column(op, args.z, args.source)
    rows = [(int(n), abs(col.values[i, 0]), abs(col.values[i, 1])) for i, n in enumerate(window.sites)]
    _emit_csv(args, "greens", ("n", "abs_G_plus", "abs_G_minus"), rows,
              ([r[0] for r in rows], [np.hypot(r[1], r[2]) for r in rows]))
    print(f"# recursion residual: {io.format_value(greens_transfer_residual(op, args.z))}")
    return EXIT_OK


def _dynamics_window(args, params, spec, t_end) -> LatticeWindow:
    if args.L is not None:
        return LatticeWindow.centered(args.L)
    return safe_window(radius_bound(params, spec), t_end)


def cmd_evolve(args) -> int:
    params, spec = _params(args)
    window = _dynamics_window(args, params, spec, args.t)
    real = sample_realization(spec, window, args.seed)
    prop = Propagator.chebyshev(build_dirac(params, real))
    psi = evolve(prop, delta_state(window), args.t)
    dens = psi.site_density()
    _emit_csv(args, "evolve", ("n", "density"), list(zip(window.sites.tolist(), dens)),
              (window.sites, dens))
    return EXIT_OK


def cmd_moments(args) -> int:
    params, spec = _params(args)
    window = _dynamics_window(args, params, spec, args.t_max)
    real = sample_realization(spec, window, args.seed)
    prop = Propagator.chebyshev(build_dirac(params, real))
    times = np.linspace(0.0, args.t_max, args.points)
    s = moment_series(prop, delta_state(window), args.q, times)
    _emit_csv(args, "moments", io.MOMENT_COLUMNS, list(zip(times, s.values)), (times, s.values))
    if s.boundary_flag:
        raise BoundaryContaminationError("probability reached the window edge; enlarge --L")
    return EXIT_OK


def cmd_laplace(args) -> int:
    params, spec = _params(args)
    window = LatticeWindow.centered(args.N)
    op = build_dirac(params, sample_realization(spec, window, args.seed))
    prop = Propagator.chebyshev(op)
    rows = []
    for T in args.T:
        a_t = laplace_moment_time(prop, delta_state(window), args.q, T, check_boundary=False).value
        a_e = laplace_moment_energy(op, args.q, T).value
        rows.append({"T": T, "A_time": a_t, "A_energy": a_e,
                     "rel_diff": abs(a_t - a_e) / abs(a_e) if a_e else 0.0})
    _emit_csv(args, "laplace", io.LAPLACE_COLUMNS, rows,
              ([r["T"] for r in rows], [r["A_time"] for r in rows]))
    return EXIT_OK


def cmd_nonrel(args) -> int:
    if args.m <= 0:
        raise UsageError("nonrel-limit needs --m > 0")
    spec = PotentialSpec.bernoulli(args.V, args.p)
    real = sample_realization(spec, LatticeWindow.centered(args.N), args.seed)
    rows = [(cv, nonrel_limit_error(cv, args.m, args.z, real)) for cv in args.c_values]
    _emit_csv(args, "nonrel", ("c", "error"), rows, ([r[0] for r in rows], [r[1] for r in rows]))
    return EXIT_OK


def cmd_compare(args) -> int:
    spec = PotentialSpec.bernoulli(args.V, args.p)
    big = DiracParams(max(args.m, args.m_prime), args.c)
    window = safe_window(radius_bound(big, spec), max(args.T))
    real = sample_realization(spec, window, args.seed)
    res = mass_comparison(args.m, args.m_prime, args.c, real, args.q, args.T)
    rows = list(zip(res.T.tolist(), res.sup_diff.tolist()))
    _emit_csv(args, "compare_mass", ("T", "sup_diff"), rows, (res.T, res.sup_diff))
    return EXIT_OK


def cmd_wegner(args) -> int:
    params, spec = _params(args)
    rows = []
    for L in args.L:
        w = wegner_estimate(args.E, L, args.theta, args.tau, params, spec, args.realizations, args.seed)
        rows.append({"L": L, "probability": w.probability, "stderr": w.stderr,
                     "exact": w.exact, "threshold": w.threshold})
    _emit_csv(args, "wegner", ("L", "probability", "stderr", "exact", "threshold"), rows,
              ([r["L"] for r in rows], [r["probability"] for r in rows]))
    return EXIT_OK


def cmd_critical_window(args) -> int:
    params, spec = _params(args)
    real = sample_realization(spec, LatticeWindow(0, args.N - 1), args.seed)
    sup = critical_window_supremum(real, args.N, args.lam, params, args.V, sign=args.sign)
    _emit_csv(args, "critical_window", ("N", "lam", "supremum"), [(args.N, args.lam, sup)])
    return EXIT_OK


def _run_checks(fns: Sequence[Callable[[], checks.CheckResult]]) -> int:
    ok = True
    for fn in fns:
        res = fn()
        for line in res.lines:
            print(f"  {line}")
        print(res.summary())
        ok &= res.passed
    return EXIT_OK if ok else EXIT_FAIL


def _ballistic_preset() -> checks.CheckResult:
    return checks.check_ballistic_ceiling(checks.disorder_moment_exponents())


PRESETS: dict[str, tuple[str, Sequence[Callable]]] = {
    "check:theorem-3.2": ("zero/positive exponents and saturation of moments at m=1",
                          (checks.check_lyapunov_signatures, checks.check_localization)),
    "check:theorem-3.4": ("vanishing exponent at the critical pairs", (checks.check_critical_pairs,)),
    "check:theorem-3.5": ("growth of the Laplace-averaged moment at m=0", (checks.check_delocalization,)),
    "check:theorem-3.6": ("moments grow at most ballistically", (_ballistic_preset,)),
    "check:theorem-2.1": ("resolvent convergence to the Schrodinger limit", (checks.check_nonrel_limit,)),
    "check:theorem-6.1": ("moment curves of nearby masses", (checks.check_mass_comparison,)),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bernoulli-dirac",
                                     description="Discrete Dirac operator with Bernoulli potential.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("lyapunov", help="Monte Carlo Lyapunov exponent")
    _physics(p)
    _common(p)
    p.add_argument("--E", type=float, nargs="+", required=True)
    p.add_argument("--steps", type=_int, default=10**6)
    p.add_argument("--realizations", type=_int, default=16)
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("classify", help="predicted zero/positive exponent and matrix classes")
    _physics(p)
    _common(p)
    p.add_argument("--E", type=float, required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("spectrum", help="eigenvalues and decay fits on a box")
    _physics(p)
    _common(p)
    p.add_argument("--L", type=_int, default=200)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("greens", help="Green's function column at complex energy")
    _physics(p)
    _common(p)
    p.add_argument("--L", type=_int, default=60)
    p.add_argument("--z", type=_complex, default=1j)
    p.add_argument("--source", type=int, default=0)
    p.set_defaults(func=cmd_greens)

    p = sub.add_parser("evolve", help="site density of the evolved delta_0^+ state")
    _physics(p)
    _common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--L", type=_int, default=None, help="box size (default: boundary-safe)")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("moments", help="position moment M^(q)(t)")
    _physics(p)
    _common(p)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--t-max", type=float, default=100.0)
    p.add_argument("--points", type=_int, default=201)
    p.add_argument("--L", type=_int, default=None, help="box size (default: boundary-safe)")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("laplace", help="Laplace-averaged moment by the time and energy routes")
    _physics(p)
    _common(p)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--T", type=float, nargs="+", default=[4.0])
    p.add_argument("--N", type=_int, default=64)
    p.set_defaults(func=cmd_laplace)

    p = sub.add_parser("nonrel-limit", help="distance to the nonrelativistic resolvent")
    _physics(p, V=1.0, m=1.0)
    _common(p)
    p.add_argument("--c-values", type=float, nargs="+", default=[8.0, 16.0, 32.0, 64.0])
    p.add_argument("--z", type=_complex, default=1j)
    p.add_argument("--N", type=_int, default=60)
    p.set_defaults(func=cmd_nonrel)

    p = sub.add_parser("compare-mass", help="moment difference between two masses")
    _physics(p, m=1e-3)
    _common(p)
    p.add_argument("--m-prime", type=float, default=0.0)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--T", type=float, nargs="+", default=[5.0, 10.0, 20.0, 40.0])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("wegner", help="probability of a box eigenvalue near E")
    _physics(p, V=1.0, m=1.0)
    _common(p)
    p.add_argument("--E", type=float, default=0.2)
    p.add_argument("--L", type=_int, nargs="+", default=[20, 40, 80])
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--realizations", type=_int, default=2000)
    p.set_defaults(func=cmd_wegner)

    p = sub.add_parser("critical-window", help="transfer-matrix supremum near a critical energy")
    _physics(p)
    _common(p)
    p.add_argument("--N", type=_int, default=1000)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--sign", type=int, choices=(1, -1), default=1)
    p.set_defaults(func=cmd_critical_window)

    for name, (help_text, fns) in PRESETS.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=lambda args, fns=fns: _run_checks(fns))
    return parser


def _config_path(argv: Sequence[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv`` with values from ``--config`` as defaults, so explicit flags win."""
    path = _config_path(argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if path is None or command not in subparsers:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    subparser = subparsers[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        act = actions.get(dest)
        if act is None or dest in ("help", "config", "func"):
            raise UsageError(f"unknown config key {key!r} for {command}")
        conv = act.type or (lambda x: x)
        try:
            if act.nargs in ("+", "*"):
                vals = value if isinstance(value, list) else [value]
                defaults[dest] = [conv(v) for v in vals]
            else:
                defaults[dest] = conv(value)
        except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"bad value for {key!r}: {value!r}") from exc
        act.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalContractError, BoundaryContaminationError, ChebyshevOrderError) as exc:
        print(f"numerical contract violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
