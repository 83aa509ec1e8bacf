"""``feedbacksim`` command line.

Exit codes: 0 ok, 1 config/argument error, 2 composition not completely
positive (or a passive budget violation), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import re
import sys
from typing import Sequence

import numpy as np

from . import config as cfgmod
from .feedback import BudgetError, NonCPError, compose_feedback
from .lindblad import DegenerateSteadyState, IntegrationError, evolve, expectation, format_float, steady_state
from .report import describe_spec, express_dissipators, hamiltonian_candidates, jump_candidates, match_hamiltonian
from .expr import evaluate_expr
from .separability import (
    BilinearDephasingProblem,
    SqueezingProblem,
    bilinear_verdict,
    squeezing_verdict,
)
from .squeeze import SqueezeParams, threshold_scan
from .verify import run_all

EXIT_OK, EXIT_PARSE, EXIT_NONCP, EXIT_NUMERIC = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _load(args) -> cfgmod.Scenario:
    if not args.config:
        raise CliError("--config is required", EXIT_PARSE)
    try:
        cfg = cfgmod.load(args.config)
        if getattr(args, "fock_dim", None):
            cfg = cfg.with_fock_dim(args.fock_dim)
        if getattr(args, "dt", None) is not None:
            cfg.run.dt = float(args.dt)
        if getattr(args, "t_final", None) is not None:
            cfg.run.t_final = float(args.t_final)
        return cfgmod.build(cfg)
    except cfgmod.ConfigError as exc:
        raise CliError(f"{args.config}: {exc}", EXIT_PARSE) from None
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_PARSE) from None


def _compose(sc: cfgmod.Scenario):
    try:
        return compose_feedback(sc.base, sc.channels)
    except (NonCPError, BudgetError) as exc:
        raise CliError(f"composition failed: {exc}", EXIT_NONCP) from None


def _extra_terms(sc: cfgmod.Scenario) -> list[str]:
    wrap = lambda e: e if re.fullmatch(r"\w+", e) else f"({e})"
    out = []
    for c in sc.config.channels:
        x, y = wrap(c.X), wrap(c.Y)
        out += [f"{x}*{y}", f"{x}*{y} + {y}*{x}"]
    return out


def _write(text: str, path: str | None):
    if path and path != "-":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------------

def cmd_derive(args) -> int:
    sc = _load(args)
    spec = _compose(sc)
    extra = sc.channel_names() + sc.base_jump_names()
    lines = describe_spec(spec, sc.config.params, extra, _extra_terms(sc))
    sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        named = None
        for stage in jump_candidates(spec.space, extra):
            cands = [(e, evaluate_expr(e, spec.space)) for e in stage]
            named = express_dissipators(spec, cands)
            if named is not None:
                break
        H = named[1] if named is not None else spec.hamiltonian
        terms = match_hamiltonian(H, hamiltonian_candidates(spec.space, _extra_terms(sc)))
        eff = cfgmod.effective_config(sc.config, spec, named, terms)
        _write(cfgmod.dumps(eff), args.out)
    return EXIT_OK


def cmd_evolve(args) -> int:
    sc = _load(args)
    spec = _compose(sc)
    if not sc.observables:
        raise CliError("no observables declared in [run.observables]", EXIT_PARSE)
    try:
        traj = evolve(spec, sc.initial, sc.t_final, sc.dt, observables=sc.observables,
                      stride=sc.stride, keep_states=False)
    except IntegrationError as exc:
        raise CliError(f"integration failed: {exc}", EXIT_NUMERIC) from None
    cols = list(sc.observables)
    traj.observables = {k: np.real(v) for k, v in traj.observables.items()}
    _write(traj.to_csv(columns=cols), args.out or sc.config.run.out)
    d = traj.diagnostics
    sys.stderr.write(" ".join(f"{k}={v:.3g}" for k, v in d.items()) + f" dt={traj.dt:.6g}\n")
    return EXIT_OK


def cmd_steady(args) -> int:
    sc = _load(args)
    spec = _compose(sc)
    try:
        rho = steady_state(spec, method=args.method)
    except DegenerateSteadyState as exc:
        raise CliError(f"steady state not unique: multiplicity {exc.multiplicity}", EXIT_NUMERIC) from None
    except (IntegrationError, np.linalg.LinAlgError, RuntimeError) as exc:
        raise CliError(f"steady state failed: {exc}", EXIT_NUMERIC) from None
    out = [f"{name}={format_float(expectation(rho, M).real)}" for name, M in sc.observables.items()]
    diag = rho.diagnostics()
    out += [f"{k}={v:.3g}" for k, v in diag.items()]
    _write("\n".join(out) + "\n", args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    if args.gp is None or args.gm is None:
        raise CliError("scan needs --gm and --gp", EXIT_PARSE)
    if args.points < 2:
        raise CliError("--points must be at least 2", EXIT_PARSE)
    ratios = np.linspace(args.from_, args.to, args.points)
    rows = threshold_scan(ratios * args.gp, args.gm, args.gp, fock_dim=args.fock_dim)
    cols = ["g_over_gamma_plus", "V_ss", "duan_sum", "entangled"]
    if args.fock_dim:
        cols += ["sim_duan_sum", "truncation", "stable"]
    lines = [",".join(cols)]
    for r, row in zip(ratios, rows):
        p = SqueezeParams(row["g"], args.gm, args.gp)
        vals = [format_float(r), format_float(row["V_ss"]), format_float(row["duan_sum"]),
                "true" if row["entangled"] else "false"]
        if args.fock_dim:
            vals += [format_float(row["sim_duan_sum"]), format_float(row["truncation"]),
                     "true" if p.stable else "false"]
        lines.append(",".join(vals))
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_separability(args) -> int:
    fmt = lambda x: format(float(x), ".12g")
    lines = []
    if args.g12 is not None:
        if args.gm is None or args.gp is None:
            raise CliError("--g12 needs --gm and --gp", EXIT_PARSE)
        try:
            v = squeezing_verdict(SqueezingProblem(args.g12, args.gm, args.gp))
        except ValueError as exc:
            raise CliError(str(exc), EXIT_PARSE) from None
        stable = SqueezeParams(args.g12, args.gm, args.gp).stable
        lines += [f"verdict={'separable' if v.separable_constructible else 'entangling'}",
                  f"V_ss={fmt(v.V_ss)}", f"duan_sum={fmt(2 * v.V_ss)}",
                  f"entangled_steady={'true' if v.entangled_steady else 'false'}",
                  f"stable={'true' if stable else 'false'}"]
    elif args.g is not None:
        if args.gammaA is None or args.gammaB is None:
            raise CliError("--g needs --gammaA and --gammaB", EXIT_PARSE)
        try:
            v = bilinear_verdict(BilinearDephasingProblem(args.g, args.gammaA, args.gammaB))
        except ValueError as exc:
            raise CliError(str(exc), EXIT_PARSE) from None
        lines.append(f"verdict={'separable' if v.separable else 'entangling'}")
        lines.append(f"max_coupling={fmt(math.sqrt(args.gammaA * args.gammaB))}")
        if v.witness is not None:
            w = v.witness
            lines += [f"meas_rate_A={fmt(w.meas_rate_A)}", f"meas_rate_B={fmt(w.meas_rate_B)}",
                      f"gain_A_to_B={fmt(w.gain_A_to_B)}", f"gain_B_to_A={fmt(w.gain_B_to_A)}"]
    else:
        raise CliError("separability needs --g/--gammaA/--gammaB or --g12/--gm/--gp", EXIT_PARSE)
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_all(seed=args.seed, gain_factor=args.corrupt_gain)
    for c in checks:
        print(c.line())
    passed = sum(c.ok for c in checks)
    print(f"checks={len(checks)} passed={passed} failed={len(checks) - passed}")
    return EXIT_OK if passed == len(checks) else EXIT_NUMERIC


# -- argument parsing -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="feedbacksim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def scenario(sp, with_run=False):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out")
        sp.add_argument("--fock-dim", type=int, dest="fock_dim")
        if with_run:
            sp.add_argument("--dt", type=float)
            sp.add_argument("--t-final", type=float, dest="t_final")

    scenario(sub.add_parser("derive", help="print the effective generator"))
    scenario(sub.add_parser("evolve", help="integrate and write a CSV trajectory"), with_run=True)
    st = sub.add_parser("steady", help="stationary state and observables")
    scenario(st)
    st.add_argument("--method", default="auto", choices=["auto", "svd", "sparse", "evolve"])

    sc = sub.add_parser("scan", help="stationary joint-quadrature variance over g/gamma_plus")
    sc.add_argument("--gm", type=float)
    sc.add_argument("--gp", type=float)
    sc.add_argument("--from", type=float, default=0.0, dest="from_")
    sc.add_argument("--to", type=float, default=2.0)
    sc.add_argument("--points", type=int, default=21)
    sc.add_argument("--fock-dim", type=int, dest="fock_dim")
    sc.add_argument("--out")

    se = sub.add_parser("separability", help="separability verdict and witness")
    for flag in ("--g", "--gammaA", "--gammaB", "--g12", "--gm", "--gp"):
        se.add_argument(flag, type=float)
    se.add_argument("--out")

    ve = sub.add_parser("verify", help="run oracle and equivalence checks")
    ve.add_argument("--seed", type=int, default=0)
    ve.add_argument("--corrupt-gain", type=float, default=1.0, dest="corrupt_gain",
                    help="scale the generator-side gain (negative control)")
    return p


COMMANDS = {
    "derive": cmd_derive, "evolve": cmd_evolve, "steady": cmd_steady, "scan": cmd_scan,
    "separability": cmd_separability, "verify": cmd_verify,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
