"""Command-line interface: sum engines, instance verification, normal forms,
catalogue management and composite-modulus checks.

Worker count for the chunked sum engines comes from PHVS_THREADS; by the
deterministic reduction contract it never changes any result.
"""

import argparse
import json
import os
import sys

from .catalogue import builtin_catalogue, format_catalogue, is_bad_prime, load_catalogue
from .characters import AddChar, MultChar
from .charsums import DEFAULT_BUDGET, CompositeChar, brute_sum, crt_composite_sum, fourier_sum
from .errors import BudgetExceeded, PhvsError
from .morse import morse_normal_form
from .multipoly import format_poly, parse_poly
from .residue import ResidueRing, legendre
from .verify import report_to_json, verify_instance


def _fmt_value(z: complex) -> str:
    return f"{z.real:.15g} {'+' if z.imag >= 0 else '-'} {abs(z.imag):.15g}i"


def _parse_L(text: str):
    return tuple(int(v) for v in text.split(","))


def _parse_L_policy(text: str):
    if text == "all":
        return "all"
    if text.startswith("sample:"):
        return ("sample", int(text.split(":", 1)[1]))
    if text.startswith("list:"):
        rows = text.split(":", 1)[1]
        return [tuple(int(v) for v in row.split(",")) for row in rows.split(";") if row]
    raise argparse.ArgumentTypeError(f"bad L policy {text!r}")


def _parse_chi_policy(text: str):
    if text == "all":
        return "all"
    if text.startswith("sample:"):
        return ("sample", int(text.split(":", 1)[1]))
    return int(text)


def _resolve_instance(spec: str):
    cat = builtin_catalogue()
    if spec in cat:
        return cat[spec]
    if os.path.exists(spec):
        for inst in load_catalogue(spec):
            return inst
        raise ValueError(f"catalogue file {spec} holds no instances")
    raise ValueError(f"unknown instance {spec!r} (builtins: {', '.join(cat)})")


def cmd_sum(args) -> int:
    ring = ResidueRing(args.p, args.m)
    f = parse_poly(args.f)
    chi = MultChar(ring, args.chi)
    if args.L is not None:
        psi = AddChar(ring, args.psi)
        s = fourier_sum(f, chi, psi, _parse_L(args.L), budget=args.budget)
    else:
        s = brute_sum(f, chi, budget=args.budget)
    print(f"value  = {_fmt_value(s.value)}")
    print(f"terms  = {s.terms_counted}")
    print(f"method = {s.method.value}")
    return 0


def cmd_verify(args) -> int:
    inst = _resolve_instance(args.instance)
    try:
        report = verify_instance(
            inst,
            args.p,
            args.m,
            L_policy=_parse_L_policy(args.L_policy),
            chi_policy=_parse_chi_policy(args.chi),
            psi_twist=args.psi,
            seed=args.seed,
            budget=args.budget,
            tol=args.tol,
        )
    except BudgetExceeded as exc:
        report = exc.partial_report
        if args.json:
            with open(args.json, "w", encoding="utf-8") as fh:
                fh.write(report_to_json(report) + "\n")
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 2
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(report_to_json(report) + "\n")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("chi,L,fdual_valuation,brute_re,brute_im,closed,abs_err,status\n")
            for rec in report.records:
                closed = "vanishing" if rec.closed == "vanishing" else f"{rec.closed:.15g}"
                fh.write(
                    f"{rec.chi_index},{' '.join(str(v) for v in rec.L)},{rec.fdual_valuation},"
                    f"{rec.brute.real:.15g},{rec.brute.imag:.15g},{closed},{rec.abs_err:.15g},{rec.status}\n"
                )
    if report.skipped_bad_prime:
        print(f"{inst.name} p={args.p} m={args.m}: SKIPPED_BAD_PRIME")
        return 0
    print(
        f"{inst.name} p={args.p} m={args.m}: "
        + ", ".join(f"{k}={v}" for k, v in sorted(report.counts.items()))
        + f", max_abs_err={report.max_abs_err:.3e}"
    )
    if report.candidate_bad_prime:
        print(f"note: p={args.p} is a candidate bad prime for {inst.name}")
    for rec in report.records:
        if rec.status == "MISMATCH" and rec.replay:
            print(f"replay: {rec.replay}")
    return report.exit_status


def cmd_morse(args) -> int:
    ring = ResidueRing(args.p, args.m)
    f = parse_poly(args.f)
    cbar = [int(v) for v in args.at.split(",")]
    nf = morse_normal_form(f, cbar, ring)
    print(f"critical point c = {tuple(nf.cert.point)} (mod {ring.modulus})")
    print(f"f(c) = {nf.cert.f_at_c}")
    print(f"newton iterations = {nf.cert.newton_iterations}")
    print(f"hessian discriminant class = {int(nf.cert.hess_disc):+d}")
    for i, (a, t) in enumerate(zip(nf.a, nf.transform), start=1):
        print(f"a_{i} = {a}   T_{i} = {format_poly(t)}")
    cls = 1
    for a in nf.a:
        cls = cls * a % args.p
    print(f"legendre(prod a_i) = {int(legendre(cls, args.p)):+d}")
    return 0


def cmd_catalogue(args) -> int:
    if args.action == "list":
        cat = builtin_catalogue()
        for inst in cat.values():
            print(
                f"{inst.name}: n={inst.n} d={inst.d} b0={inst.b0} "
                f"f={format_poly(inst.f)} fdual={format_poly(inst.f_dual, letter='y')}"
            )
        return 0
    # check: re-derive b0 for builtins or a file
    instances = load_catalogue(args.file) if args.file else builtin_catalogue().values()
    for inst in instances:
        inst.validate()
        flags = [str(p) for p in (2, 3, 5, 7) if is_bad_prime(inst, p)]
        print(f"{inst.name}: b0={inst.b0} oracle-consistent; flagged primes: {flags or 'none'}")
    return 0


def cmd_crt(args) -> int:
    f = parse_poly(args.f)
    gchar = CompositeChar.standard(args.N)
    L = _parse_L(args.L) if args.L else (1,) * f.nvars
    direct, product = crt_composite_sum(f, gchar, L, budget=args.budget)
    print(f"N = {args.N} = " + " * ".join(f"{c.ring.p}^{c.ring.m}" for c in gchar.mult))
    print(f"direct  = {_fmt_value(direct.value)}  ({direct.terms_counted} terms)")
    print(f"product = {_fmt_value(product.value)}")
    err = abs(direct.value - product.value)
    print(f"|direct - product| = {err:.3e}")
    return 0 if err <= 1e-9 * args.N ** f.nvars else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="phvs", description="character-sum closed-form verification over Z/p^m"
    )
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sum", help="evaluate a character sum")
    ps.add_argument("--f", required=True, help="polynomial, e.g. 'x1^2 + 3*x1*x2'")
    ps.add_argument("--p", type=int, required=True)
    ps.add_argument("--m", type=int, required=True)
    ps.add_argument("--chi", type=int, required=True, help="character index")
    ps.add_argument("--psi", type=int, default=1, help="additive twist (with --L)")
    ps.add_argument("--L", help="comma-separated linear form coefficients")
    ps.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    ps.set_defaults(func=cmd_sum)

    pv = sub.add_parser("verify", help="verify the closed transform formula")
    pv.add_argument("--instance", required=True, help="builtin name or catalogue file")
    pv.add_argument("--p", type=int, required=True)
    pv.add_argument("--m", type=int, required=True)
    pv.add_argument("--L-policy", dest="L_policy", default="all", help="all | sample:<k> | list:...")
    pv.add_argument("--chi", default="all", help="all | <k> | sample:<c>")
    pv.add_argument("--psi", type=int, default=1)
    pv.add_argument("--json", help="write the JSON report here")
    pv.add_argument("--csv", help="write the per-L table here")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    pv.add_argument("--tol", type=float, default=1e-9)
    pv.set_defaults(func=cmd_verify)

    pm_ = sub.add_parser("morse", help="quadratic normal form at a critical residue")
    pm_.add_argument("--f", required=True)
    pm_.add_argument("--p", type=int, required=True)
    pm_.add_argument("--m", type=int, required=True)
    pm_.add_argument("--at", required=True, help="critical residue mod p, comma-separated")
    pm_.set_defaults(func=cmd_morse)

    pc = sub.add_parser("catalogue", help="list or check instances")
    pc.add_argument("action", choices=["list", "check"])
    pc.add_argument("--file", help="catalogue file (default: builtins)")
    pc.set_defaults(func=cmd_catalogue)

    pr = sub.add_parser("crt", help="composite-modulus sum against its local product")
    pr.add_argument("--N", type=int, required=True)
    pr.add_argument("--f", required=True)
    pr.add_argument("--L")
    pr.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    pr.set_defaults(func=cmd_crt)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PhvsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
