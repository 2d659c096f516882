"""Command-line entry point: ``muskat-lab {modulus,verify-lemmas,simulate,symbol-check}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSERT = 3

FIXTURE_XIS = (0.25, 1.0, 1.5)
KISELEV_BAND = (1.50, 1.60)


def _emit(args, payload: dict, lines: list[str]) -> None:
    if args.json:
        json.dump(payload, sys.stdout, indent=2, default=_jsonable)
        sys.stdout.write("\n")
    else:
        sys.stdout.write("\n".join(lines) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _err(msg: str) -> int:
    sys.stderr.write(f"muskat-lab: error: {msg}\n")
    return EXIT_USAGE


def set_threads(requested: int | None) -> int | None:
    """Apply --threads, falling back to MUSKAT_LAB_THREADS."""
    n = requested
    if n is None:
        env = os.environ.get("MUSKAT_LAB_THREADS")
        if env:
            n = int(env)
    if n is None:
        return None
    import numba

    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# -- modulus ------------------------------------------------------------------


def cmd_modulus(args) -> int:
    from .modulus import DomainError, Modulus, omega_of

    try:
        m = Modulus.from_L(args.L)
    except DomainError as exc:
        return _err(str(exc))
    if args.samples < 1:
        return _err("--samples must be >= 1")
    c = m.clock
    ts = np.linspace(0.0, c.tstar, args.samples)
    js = m.j(ts)
    om = omega_of(m, ts, 1.0)
    payload = {
        "L": m.L,
        "nu": m.nu,
        "t1": c.t1,
        "t2": c.t2,
        "tstar": c.tstar,
        "table": [{"t": float(t), "j": float(j), "omega_r1": float(o)} for t, j, o in zip(ts, js, om)],
    }
    lines = [
        f"# L = {m.L!r}",
        f"# nu = {m.nu!r}",
        f"# t1 = {c.t1!r}",
        f"# t2 = {c.t2!r}",
        f"# tstar = {c.tstar!r}",
        "t,j,omega_r1",
    ]
    lines += [f"{t!r},{float(j)!r},{float(o)!r}" for t, j, o in zip(ts.tolist(), js, om)]
    _emit(args, payload, lines)
    return EXIT_OK


# -- verify-lemmas ------------------------------------------------------------


def cmd_verify_lemmas(args) -> int:
    from .lemma_oracles import (
        construct_crossing_profile,
        crossing_bound_chain,
        dissipation_bound,
        kiselev_integral_constant,
        verify_monotonicity,
    )
    from .modulus import DomainError, Modulus

    try:
        m = Modulus.from_L(args.L)
    except DomainError as exc:
        return _err(str(exc))
    if args.resolution < 2 or args.xi_grid < 1:
        return _err("--resolution must be >= 2 and --xi-grid >= 1")

    checks = []  # asserted
    diagnostics = []

    mono = verify_monotonicity(args.L, args.resolution)
    tgt = (m.L, m.nu, m.nu)
    arg = mono.quotient_argmin
    at_corner = all(abs(a - b) <= 1e-6 * max(1.0, abs(b)) for a, b in zip(arg, tgt))
    checks.append({"name": "monotonicity_gap", "value": mono.min_gap, "limit": -1e-12, "passed": mono.min_gap >= -1e-12})
    checks.append({"name": "monotonicity_argmin", "value": list(arg), "expected": list(tgt), "passed": at_corner})

    kc = kiselev_integral_constant()
    checks.append({"name": "kiselev_constant", "value": kc, "band": list(KISELEV_BAND), "passed": KISELEV_BAND[0] < kc < KISELEV_BAND[1]})

    xis = [(i + 1) / args.xi_grid for i in range(args.xi_grid)]
    worst = None
    fails = 0
    for xi in xis:
        rep = dissipation_bound(m, 0.0, xi)
        fails += not rep.holds
        if worst is None or rep.margin < worst.margin:
            worst = rep
    checks.append(
        {
            "name": "dissipation_unconditional",
            "xi_count": len(xis),
            "failures": fails,
            "worst_xi": worst.xi,
            "worst_margin": worst.margin,
            "passed": fails == 0,
        }
    )
    for t in (0.0, m.clock.t1):
        near_knot = [1.5, 1.9, 1.99, 2.01, 2.1, 2.5]
        for xi in np.union1d(near_knot, np.linspace(1.0, 2.0 / m.nu, 12)[:-1]):
            rep = dissipation_bound(m, t, float(xi))
            diagnostics.append({"name": "dissipation_large_xi", "t": t, "xi": float(xi), "value": rep.value, "bound": rep.bound, "holds": rep.holds})

    if not args.skip_chain:
        for t in (0.0, m.clock.t1):
            for xi in FIXTURE_XIS:
                if xi >= 2.0 / m.nu:
                    continue
                ch = crossing_bound_chain(construct_crossing_profile(m, t, xi))
                checks.append(
                    {
                        "name": "crossing_chain",
                        "t": t,
                        "xi": xi,
                        "dual_rel_diff": ch.dual_rel_diff,
                        "links": [l.as_dict() for l in ch.links],
                        "passed": ch.holds,
                    }
                )
                diagnostics.append({"name": "breakthrough_possible", "t": t, "xi": xi, "value": ch.breakthrough_possible})

    ok = all(c["passed"] for c in checks)
    payload = {
        "L": m.L,
        "nu": m.nu,
        "resolution": args.resolution,
        "monotonicity": mono.as_dict(),
        "checks": checks,
        "diagnostics": diagnostics,
        "passed": ok,
    }
    lines = [f"L = {m.L}  nu = {m.nu:.10g}", f"{'check':<28} {'result':<6} detail"]
    for c in checks:
        detail = {k: v for k, v in c.items() if k not in ("name", "passed", "links", "dual_rel_diff")}
        lines.append(f"{c['name']:<28} {'PASS' if c['passed'] else 'FAIL':<6} {detail}")
    lines.append(f"argmin (a_high, a_low, b) = {tuple(round(v, 10) for v in arg)}")
    lines.append("diagnostics (not asserted):")
    for d in diagnostics:
        lines.append(f"  {d}")
    lines.append("ALL ASSERTED CHECKS PASS" if ok else "ASSERTED CHECK FAILED")
    _emit(args, payload, lines)
    return EXIT_OK if ok else EXIT_ASSERT


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .config import ConfigError, load_config
    from .modulus import DomainError
    from .runner import run

    try:
        cfg, text = load_config(args.config)
        res = run(cfg, text, args.resume)
    except (ConfigError, DomainError, OSError, ValueError) as exc:
        return _err(str(exc))
    s = res.summary
    lines = [
        f"steps = {s['steps']}  t = {s['final_time']:.6g}  exit = {s['exit_code']}",
        f"monitors = {s['monitors']}",
        f"crossing = {s['crossing']}",
        f"outputs in {cfg.output_dir}",
    ]
    if s["error"]:
        lines.append(f"error: {s['error']}")
    _emit(args, s, lines)
    return res.exit_code


# -- symbol-check -------------------------------------------------------------


def cmd_symbol_check(args) -> int:
    from .kernel import MuskatOperator, PeriodicGrid, QuadratureSpec, kernel_constant_oracle, measure_symbol

    try:
        modes = [int(v) for v in args.modes.split(",") if v.strip()]
    except ValueError:
        return _err("--modes must be a comma-separated list of integers")
    if not modes or any(k <= 0 for k in modes):
        return _err("modes must be positive integers (the zero mode has no decay rate)")
    try:
        grid = PeriodicGrid(args.n, args.period)
    except ValueError as exc:
        return _err(str(exc))
    op = MuskatOperator(grid, QuadratureSpec())
    rows = [measure_symbol(args.n, (k, 0), args.eps, args.period, op=op) for k in modes]
    kk = np.array([r.wavenumber for r in rows])
    rates = np.array([r.rate for r in rows])
    fitted = float(kk @ rates / (kk @ kk))
    spread = float(np.max(np.abs(rates / (fitted * kk) - 1.0)))
    oracle = kernel_constant_oracle()
    oracle_rel = abs(fitted - oracle) / oracle
    prop_ok = spread <= args.tol
    const_ok = oracle_rel <= args.const_tol
    payload = {
        "n": args.n,
        "period": args.period,
        "eps": args.eps,
        "table": [{"k": r.k[0], "wavenumber": r.wavenumber, "rate": r.rate, "ratio": r.ratio, "residual": r.residual} for r in rows],
        "fitted_constant": fitted,
        "oracle_constant": oracle,
        "proportionality_deviation": spread,
        "oracle_rel_error": oracle_rel,
        "passed": prop_ok and const_ok,
    }
    lines = [f"{'k':>4} {'|k|':>10} {'rate':>12} {'ratio':>10}"]
    lines += [f"{r.k[0]:>4} {r.wavenumber:>10.6f} {r.rate:>12.6f} {r.ratio:>10.6f}" for r in rows]
    lines.append(f"fitted constant = {fitted:.8f}  oracle = {oracle:.8f}  rel = {oracle_rel:.2e}")
    lines.append(f"max deviation from proportionality = {spread:.2e} (tol {args.tol})")
    _emit(args, payload, lines)
    return EXIT_OK if payload["passed"] else EXIT_ASSERT


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--threads", type=int, default=None, help="worker threads (env MUSKAT_LAB_THREADS)")

    p = argparse.ArgumentParser(prog="muskat-lab", description="Modulus-of-continuity experiments for the Muskat equation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("modulus", parents=[common], help="print nu, flattening time and the clock")
    s.add_argument("--L", type=float, required=True)
    s.add_argument("--samples", type=int, default=11)
    s.set_defaults(func=cmd_modulus)

    s = sub.add_parser("verify-lemmas", parents=[common], help="run the inequality oracles")
    s.add_argument("--L", type=float, default=2.0)
    s.add_argument("--resolution", type=int, default=200)
    s.add_argument("--xi-grid", type=int, default=100)
    s.add_argument("--skip-chain", action="store_true", help="skip the two-dimensional fixture integrals")
    s.set_defaults(func=cmd_verify_lemmas)

    s = sub.add_parser("simulate", parents=[common], help="run the time stepper from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--resume", default=None, help="MUSK1 snapshot to continue from")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("symbol-check", parents=[common], help="measure the linear dispersion relation")
    s.add_argument("--n", type=int, default=128)
    s.add_argument("--modes", default="1,2,4")
    s.add_argument("--period", type=float, default=8.0)
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--tol", type=float, default=0.02)
    s.add_argument("--const-tol", type=float, default=0.05)
    s.set_defaults(func=cmd_symbol_check)
    return p


def main(argv=None) -> int:
    # numba falls back from an outdated TBB on its own; the notice is noise
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    args = build_parser().parse_args(argv)
    try:
        set_threads(args.threads)
    except ValueError:
        return _err("MUSKAT_LAB_THREADS must be an integer")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
