"""Command-line front end.

Subcommands::

    fuio check SYSTEM                      feasibility gates
    fuio synth SYSTEM --poles ...          observer JSON
    fuio sim OBSERVER SCENARIO             CSV + error summary
    fuio demo bilinear|paper-ltv|paper-mimo
    fuio oracle-compare SYSTEM OBSERVER SCENARIO

Exit codes: 0 success, 1 usage or parse error, 2 infeasible design,
3 numerical failure or divergence.  ``FUIO_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import cases
from .errors import DimensionError, DivergenceError, ExprEvalError, ExprSyntaxError, InfeasibleDesign
from .io import FileFormatError, csv_text, dump_json, load_observer, load_scenario, load_system
from .ltv_gpebo import ReducedLtvSystem, frozen_stability_scan, functional_matrix_ltv, reduce_to_w
from .sim_engine import (
    compare_oracle,
    run_bilinear_demo,
    run_ltv_scenario,
    run_mimo_scenario,
)
from .system_model import (
    LtiSystem,
    apply_r_override,
    build_N,
    build_P,
    check_detectability,
    compute_relative_degrees,
    numerical_rank,
    unobservable_modes,
    validate_lti,
)
from .uio_synth import (
    POLE_TOL,
    FunctionalObserverRealization,
    compute_G,
    compute_M,
    design_uio,
    normalize_poles,
    spectrum_error,
)

log = logging.getLogger("fuio")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3
DEMOS = ("bilinear", "paper-ltv", "paper-mimo")
LTV_SCAN_DT = 1e-2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


def parse_poles(text):
    if text is None:
        return None
    try:
        vals = [complex(s.strip().replace(" ", "")) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"cannot parse poles {text!r}") from None
    if not vals:
        raise UsageError("empty pole list")
    return tuple(v.real if v.imag == 0 else v for v in vals)


def parse_int_list(text):
    if text is None:
        return None
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}") from None


def _json_num(v):
    v = complex(v)
    if v.imag != 0:
        return [v.real, v.imag]
    return v.real if math.isfinite(v.real) else str(v.real)


def _emit(args, report, lines):
    if args.json:
        sys.stdout.write(json.dumps(report, indent=2) + "\n")
    else:
        for line in lines:
            print(line)


def _write_csv(args, res, decimation=1):
    if args.csv:
        Path(args.csv).write_text(csv_text(res, decimation), encoding="utf-8")
        log.info("wrote %s", args.csv)


def _profile(sysfile, args):
    prof = compute_relative_degrees(sysfile.system, args.zero_tol)
    override = args.r_override or sysfile.r_override
    if override:
        prof = apply_r_override(prof, override)
    return prof


def _summary(res, label="err"):
    met = res.metrics()
    final = np.abs(res.err[-1])
    report = {
        "final_error": [float(v) for v in final],
        "final_error_norm": met.final_norm,
        "decay_rate": _json_num(met.decay_rate),
        "time_to_threshold": met.time_to_threshold,
        "threshold": met.threshold,
        "samples": int(len(res.t)),
    }
    lines = [
        f"final |{label}_i|: " + ", ".join(f"{v:.3e}" for v in final),
        f"final |{label}|_inf = {met.final_norm:.3e}, decay rate = {met.decay_rate:.3f} 1/s",
        f"time to |{label}| < {met.threshold:g}: "
        + ("never" if met.time_to_threshold is None else f"{met.time_to_threshold:.3f} s"),
    ]
    return report, lines


def _scenario_value(args, scen, key, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return scen.get(key, default)


def _check_dt(dt, t_final):
    if not dt > 0:
        raise UsageError(f"dt must be positive, got {dt}")
    if not t_final > 0:
        raise UsageError(f"t_final must be positive, got {t_final}")


# ---------------------------------------------------------------------------
# check


def _check_lti(sysfile, args):
    plant = sysfile.system
    rep = validate_lti(plant)
    report = {"type": "lti", "n": rep.n, "m": rep.m, "l": rep.l, "rank_B": rep.rank_B,
              "warnings": list(rep.warnings)}
    reasons = []
    lines = [f"LTI system: n={rep.n}, m={rep.m}, l={rep.l}, rank(B)={rep.rank_B}"]
    lines += [f"warning: {w}" for w in rep.warnings]
    prof = _profile(sysfile, args)
    report["r"] = list(prof.r)
    report["r_exact"] = list(prof.exact)
    lines.append(f"relative degrees r = {list(prof.r)}"
                 + ("" if all(prof.exact) else " (override)"))
    N = build_N(plant, prof)
    rank_N = numerical_rank(N, args.rank_tol)
    report["rank_N"] = rank_N
    lines.append(f"rank(N) = {rank_N}, rank(B) = {rep.rank_B}")
    try:
        G = compute_G(plant.B, N, args.rank_tol)
    except InfeasibleDesign as exc:
        reasons.append(str(exc))
        G = None
    report["detectable_AC"] = check_detectability(plant.A, plant.C)
    lines.append(f"(A, C) detectable: {report['detectable_AC']}")
    if G is not None:
        M = compute_M(plant.A, G, build_P(plant, prof))
        fixed = unobservable_modes(M, plant.C)
        report["fixed_modes"] = [_json_num(v) for v in fixed]
        report["detectable_MC"] = check_detectability(M, plant.C)
        lines.append(f"(M, C) detectable: {report['detectable_MC']}"
                     + (f"; fixed observer modes {[complex(round(v.real, 9), round(v.imag, 9)) for v in fixed]}"
                        if fixed else ""))
        if not report["detectable_MC"]:
            reasons.append("(M, C) is not detectable: the observer error cannot be made stable")
    report["feasible"] = not reasons
    report["reasons"] = reasons
    lines += [f"infeasible: {r}" for r in reasons]
    lines.append("feasible" if not reasons else "NOT feasible")
    return report, lines


def _check_ltv(sysfile, args):
    sys_ = sysfile.system
    red = reduce_to_w(sys_)
    t_final = args.t_final if args.t_final is not None else 20.0
    grid = np.arange(0.0, t_final + 0.5 * LTV_SCAN_DT, LTV_SCAN_DT)
    scan = frozen_stability_scan(red, grid)
    report = {
        "type": "ltv_chain", "n": sys_.n, "beta": red.beta,
        "c": list(sys_.coefficient_texts()),
        "frozen_margin": scan.margin, "t_argmin": scan.t_argmin,
        "scan_grid": [0.0, t_final, LTV_SCAN_DT], "note": scan.note,
    }
    reasons = [] if scan.stable else ["frozen-time companion matrix is not Hurwitz somewhere on the grid"]
    report["feasible"] = not reasons
    report["reasons"] = reasons
    lines = [
        f"LTV chain: n={sys_.n}, beta={red.beta}",
        f"frozen margin = {scan.margin:.5f} (at t = {scan.t_argmin:.3f}) over [0, {t_final:g}]",
        f"note: {scan.note}",
    ]
    lines += [f"infeasible: {r}" for r in reasons]
    lines.append("feasible" if not reasons else "NOT feasible")
    return report, lines


def cmd_check(args):
    sysfile = load_system(args.system)
    if sysfile.kind == "lti":
        report, lines = _check_lti(sysfile, args)
    else:
        report, lines = _check_ltv(sysfile, args)
    _emit(args, report, lines)
    return EXIT_OK if report["feasible"] else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# synth


def _synth_lti(sysfile, args):
    plant = sysfile.system
    poles = parse_poles(args.poles)
    if poles is None:
        raise UsageError("--poles is required for an LTI system")
    prof = _profile(sysfile, args)
    design = design_uio(plant, prof, poles, mode=args.mode, rank_tol=args.rank_tol,
                        pole_tol=args.pole_tol)
    real = design.realization
    obs = real.to_dict()
    obs["M"] = design.gains.M.tolist()
    obs["mode"] = args.mode
    achieved = sorted(np.linalg.eigvals(real.F), key=lambda v: (v.real, v.imag))
    resid = list(design.condition.residuals)
    report = {
        "r": list(prof.r),
        "mode": args.mode,
        "requested_poles": [_json_num(p) for p in normalize_poles(poles)],
        "achieved_spectrum": [_json_num(v) for v in achieved],
        "spectrum_error": spectrum_error(real.F, poles),
        "QAiB_residuals": [float(v) for v in resid],
        "q": real.q,
    }
    lines = [
        f"r = {list(prof.r)}, mode = {args.mode}, Q is {real.q} x {real.n}",
        "achieved spectrum: " + ", ".join(f"{v:.6g}" for v in achieved),
        f"max pole error = {report['spectrum_error']:.3e}",
        "|Q A^i B|_inf residuals: " + (", ".join(f"{v:.3e}" for v in resid) or "(none)"),
    ]
    return obs, report, lines


def _synth_ltv(sysfile, args):
    red = reduce_to_w(sysfile.system)
    obs = red.to_dict()
    obs["Q"] = functional_matrix_ltv(sysfile.system.n, red.beta).tolist()
    report = {"beta": red.beta, "order": red.order}
    lines = [f"copy observer of order {red.order} (beta = {red.beta})"]
    return obs, report, lines


def cmd_synth(args):
    sysfile = load_system(args.system)
    if sysfile.kind == "lti":
        obs, report, lines = _synth_lti(sysfile, args)
    else:
        obs, report, lines = _synth_ltv(sysfile, args)
    if args.output:
        dump_json(obs, args.output)
        lines.append(f"observer written to {args.output}")
        _emit(args, report, lines)
    elif args.json:
        sys.stdout.write(dump_json({"observer": obs, "report": report}))
    else:
        for line in lines:
            print(line)
        sys.stdout.write(dump_json(obs))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sim


def _scenario_system(args, scen):
    ref = args.system_override or scen.get("system")
    if ref is None:
        raise UsageError("scenario has no 'system' entry; pass --system")
    base = None if args.system_override else scen.get("_base")
    return load_system(ref, base)


def _run_uio(plant, real, scen, t_final, dt):
    f = scen.get("f")
    if f is None:
        raise UsageError("scenario lacks the unknown input 'f'")
    x0 = scen.get("x0")
    if x0 is None:
        raise UsageError("scenario lacks 'x0'")
    z0 = scen.get("z0", "zero")
    if z0 == "zero":
        return run_mimo_scenario(plant, real, f, x0, None, t_final, dt)
    if z0 == "match":
        xhat0 = scen.get("xhat0", [0.0] * plant.n)
        return run_mimo_scenario(plant, real, f, x0, None, t_final, dt, xhat0=xhat0)
    if isinstance(z0, list):
        return run_mimo_scenario(plant, real, f, x0, z0, t_final, dt)
    raise UsageError(f"z0 must be 'zero', 'match' or a vector, got {z0!r}")


def _run_ltv(sysfile, red, scen, t_final, dt):
    sys_ = sysfile.system
    if red.beta != reduce_to_w(sys_).beta:
        raise DimensionError("observer and system disagree on beta")
    return run_ltv_scenario(sysfile.plant_A, sysfile.plant_B, sys_, scen.get("u", "0"),
                            scen.get("x0"), scen.get("xi0"), t_final, dt)


def cmd_sim(args):
    observer = load_observer(args.observer)
    scen = load_scenario(args.scenario)
    sysfile = _scenario_system(args, scen)
    t_final = float(_scenario_value(args, scen, "t_final", 10.0))
    dt = float(_scenario_value(args, scen, "dt", 1e-3))
    _check_dt(dt, t_final)
    decimation = int(scen.get("decimation", 1))
    if isinstance(observer, FunctionalObserverRealization):
        if sysfile.kind != "lti":
            raise UsageError("a UIO observer needs an LTI system")
        res = _run_uio(sysfile.system, observer, scen, t_final, dt)
    elif isinstance(observer, ReducedLtvSystem):
        if sysfile.kind != "ltv_chain":
            raise UsageError("a GPEBO observer needs an ltv_chain system")
        if scen.get("x0") is None:
            raise UsageError("scenario lacks 'x0'")
        res = _run_ltv(sysfile, observer, scen, t_final, dt)
    else:  # pragma: no cover
        raise UsageError("unknown observer")
    _write_csv(args, res, decimation)
    report, lines = _summary(res)
    report.update({"t_final": t_final, "dt": dt})
    _emit(args, report, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# demo


def _demo_mimo(args):
    sysfile = load_system(cases.mimo_system_dict())
    prof = apply_r_override(compute_relative_degrees(sysfile.system, args.zero_tol),
                            args.r_override or sysfile.r_override)
    poles = parse_poles(args.poles) or cases.MIMO_POLES
    design = design_uio(sysfile.system, prof, poles, mode=args.mode, rank_tol=args.rank_tol,
                        pole_tol=args.pole_tol)
    scen = cases.mimo_scenario_dict()
    t_final = args.t_final or scen["t_final"]
    dt = args.dt or scen["dt"]
    _check_dt(dt, t_final)
    res = run_mimo_scenario(sysfile.system, design.realization, scen["f"], scen["x0"], None,
                            t_final, dt)
    report, lines = _summary(res)
    g_err = float(np.abs(design.gains.G - cases.MIMO_G_PUBLISHED).max())
    m_err = float(np.abs(design.gains.M - cases.MIMO_M_PUBLISHED).max())
    report.update({"G_deviation_from_published": g_err, "M_deviation_from_published": m_err,
                   "spectrum_error": spectrum_error(design.gains.F, poles)})
    lines = [f"|G - G_published| = {g_err:.1e}, |M - M_published| = {m_err:.1e}",
             f"pole error = {report['spectrum_error']:.2e}"] + lines
    return res, report, lines


def _demo_ltv(args):
    sysfile = load_system(cases.ltv_system_dict())
    scen = cases.ltv_scenario_dict()
    t_final = args.t_final or scen["t_final"]
    dt = args.dt or scen["dt"]
    _check_dt(dt, t_final)
    res = run_ltv_scenario(sysfile.plant_A, sysfile.plant_B, sysfile.system, scen["u"], scen["x0"],
                           None, t_final, dt)
    scan = frozen_stability_scan(reduce_to_w(sysfile.system),
                                 np.arange(0.0, 20.0 + 0.5 * LTV_SCAN_DT, LTV_SCAN_DT))
    report, lines = _summary(res)
    ident = float(res.extras["identity_residual"].max())
    phi = res.extras["phi_norm"]
    report.update({"beta": res.extras["beta"], "identity_residual": ident,
                   "frozen_margin": scan.margin, "phi_norm_final": float(phi[-1]),
                   "phi_norm_max": float(phi.max())})
    lines = [f"beta = {res.extras['beta']}, frozen margin = {scan.margin:.5f}",
             f"max |(w - xi) - Phi (w0 - xi0)| = {ident:.2e}",
             f"|Phi|_2: max {phi.max():.3f}, final {phi[-1]:.2e}"] + lines
    return res, report, lines


def _demo_bilinear(args):
    kw = {}
    if args.poles:
        kw["k_poles"] = parse_poles(args.poles)
    t_final = args.t_final or 10.0
    dt = args.dt or 1e-3
    _check_dt(dt, t_final)
    res = run_bilinear_demo(t_final=t_final, dt=dt, **kw)
    report, lines = _summary(res)
    norms = np.linalg.norm(res.err, axis=1)
    drop = float(np.log10(norms[0] / norms[-1])) if norms[-1] > 0 else math.inf
    report.update({"initial_error_norm": float(norms[0]), "orders_of_magnitude": _json_num(drop),
                   "max_state_norm": float(np.abs(res.x).max())})
    lines = [f"|e(0)| = {norms[0]:.3e}, |e(T)| = {norms[-1]:.3e} ({drop:.1f} orders)"] + lines
    return res, report, lines


def cmd_demo(args):
    runner = {"paper-mimo": _demo_mimo, "paper-ltv": _demo_ltv, "bilinear": _demo_bilinear}[args.name]
    res, report, lines = runner(args)
    report["demo"] = args.name
    _write_csv(args, res)
    _emit(args, report, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle-compare


def cmd_oracle_compare(args):
    sysfile = load_system(args.system)
    if sysfile.kind != "lti":
        raise UsageError("oracle-compare needs an LTI system")
    real = load_observer(args.observer)
    if not isinstance(real, FunctionalObserverRealization):
        raise UsageError("oracle-compare needs a UIO observer file")
    scen = load_scenario(args.scenario)
    t_final = float(_scenario_value(args, scen, "t_final", 10.0))
    dt = float(args.dt if args.dt is not None else 1e-4)
    _check_dt(dt, t_final)
    f = scen.get("f")
    if f is None or scen.get("x0") is None:
        raise UsageError("scenario needs 'f' and 'x0'")
    plant: LtiSystem = sysfile.system
    cmp = compare_oracle(plant, real, f, scen["x0"], scen.get("xhat0"), t_final, dt)
    ok = cmp.max_deviation <= args.tol
    report = {
        "max_deviation": cmp.max_deviation,
        "t_worst": cmp.t_worst,
        "linear_law_error": cmp.linear_law_error,
        "tolerance": args.tol,
        "t_final": t_final,
        "dt": dt,
        "pass": bool(ok),
    }
    lines = [
        f"max |Q xhat_oracle - xbar_hat|_inf = {cmp.max_deviation:.3e} at t = {cmp.t_worst:.4f}",
        f"oracle error vs expm(F t) law: {cmp.linear_law_error:.3e}",
        ("PASS" if ok else "FAIL") + f" (tolerance {args.tol:g})",
    ]
    _emit(args, report, lines)
    return EXIT_OK if ok else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# parser


def _add_common(p, *, sim=True, design=True):
    p.add_argument("--json", action="store_true", help="machine-readable report on stdout")
    if design:
        p.add_argument("--r-override", type=parse_int_list, metavar="R1,R2,...",
                       help="relative degrees to use instead of the structural ones")
        p.add_argument("--mode", choices=("full", "reduced"), default="full")
        p.add_argument("--poles", metavar="P1,P2,...", help="observer poles, complex as -1+2j")
        p.add_argument("--zero-tol", type=float, default=1e-9)
        p.add_argument("--rank-tol", type=float, default=None)
        p.add_argument("--pole-tol", type=float, default=POLE_TOL)
    if sim:
        p.add_argument("--t-final", dest="t_final", type=float, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--csv", metavar="PATH")


def build_parser():
    parser = _Parser(prog="fuio", description="Functional unknown-input observer toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="validate a system file and report feasibility")
    p.add_argument("system")
    _add_common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", help="synthesize an observer")
    p.add_argument("system")
    p.add_argument("-o", "--output", metavar="PATH", help="observer JSON path")
    _add_common(p, sim=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sim", help="simulate a plant and an observer")
    p.add_argument("observer")
    p.add_argument("scenario")
    p.add_argument("--system", dest="system_override", metavar="PATH",
                   help="system file, overriding the scenario's 'system' entry")
    _add_common(p, design=False)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("demo", help="run a built-in demonstration")
    p.add_argument("name", choices=DEMOS)
    _add_common(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("oracle-compare", help="compare the realization with the derivative-fed observer")
    p.add_argument("system")
    p.add_argument("observer")
    p.add_argument("scenario")
    p.add_argument("--tol", type=float, default=1e-6)
    _add_common(p, design=False)
    p.set_defaults(func=cmd_oracle_compare)
    return parser


def _join_value_flags(argv):
    # let "--poles -4,-5" through: argparse would read "-4,-5" as an option
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--poles", "--r-override"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    level = os.environ.get("FUIO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_join_value_flags(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ExprSyntaxError, FileFormatError, DimensionError, FileNotFoundError,
            IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"fuio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleDesign as exc:
        print(f"fuio: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DivergenceError, ExprEvalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"fuio: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"fuio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
