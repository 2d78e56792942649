"""Concrete regular relative-invariant instances as plain polynomial data.

Each instance is (name, n, d, f, f_dual, b0) with a bad-prime predicate.
The leading operator coefficient b0 is stored *and* re-derived at load time
by the symbolic operator oracle; a mismatch is a hard startup error.

Catalogue file format (UTF-8, blocks separated by blank lines):

    name=hyperbola
    n=2
    d=2
    f=x1*x2
    fdual=y1*y2
    b0=1
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    BadPrime,
    DegreeDivisible,
    NonUnitValue,
    NotBernsteinPair,
    SingularHessian,
)
from .morse import Hyperplane, _det_mod, chart_function, find_chart_critical_residues
from .multipoly import MultiPoly, apply_diff_operator, format_poly, loghessian_disc, parse_poly
from .residue import ResidueRing, is_prime


@dataclass
class PvsInstance:
    name: str
    n: int
    d: int
    f: MultiPoly
    f_dual: MultiPoly
    b0: Fraction

    def __post_init__(self):
        self.b0 = Fraction(self.b0)
        if self.f.nvars != self.n or self.f_dual.nvars != self.n:
            raise ValueError(f"{self.name}: polynomials must have {self.n} variables")
        if self.f.is_homogeneous() != self.d or self.f_dual.is_homogeneous() != self.d:
            raise ValueError(f"{self.name}: f and f_dual must be homogeneous of degree {self.d}")
        if self.b0 == 0:
            raise ValueError(f"{self.name}: b0 must be nonzero")

    def validate(self) -> "PvsInstance":
        derived = compute_b0(self.f, self.f_dual, self.d)
        if derived != self.b0:
            raise ValueError(
                f"{self.name}: stored b0 = {self.b0} but the operator oracle derives {derived}"
            )
        return self

    def divisor_bad_prime(self, p: int) -> bool:
        """The divisibility part of the bad-prime predicate."""
        return (2 * self.d * self.b0.numerator * self.b0.denominator) % p == 0

    def b0_mod(self, modulus: int) -> int:
        return self.b0.numerator * pow(self.b0.denominator, -1, modulus) % modulus


def compute_b0(f: MultiPoly, f_dual: MultiPoly, d: int) -> Fraction:
    """Leading coefficient of the operator polynomial b with
    f_dual(grad) f^(s+1) = b(s) f^s, derived at s = 0..d and interpolated.

    Exact integer arithmetic throughout; raises NotBernsteinPair unless each
    f_dual(grad) f^(s+1) is a constant multiple of f^s."""
    if f.nvars != f_dual.nvars:
        raise NotBernsteinPair("f and f_dual have different arities")
    c = []
    power = MultiPoly.constant(f.nvars, 1)  # f^s
    fs1 = f  # f^(s+1)
    for s in range(d + 1):
        g = apply_diff_operator(f_dual, fs1)
        ref_exp, ref_coeff = next(iter(sorted(power.terms.items())))
        num = g.terms.get(ref_exp, 0)
        ratio = Fraction(num, ref_coeff)
        if ratio.denominator * g != ratio.numerator * power:
            raise NotBernsteinPair(
                f"f_dual(grad) f^{s + 1} is not a constant multiple of f^{s}"
            )
        c.append(ratio)
        power = fs1
        fs1 = fs1 * f
    # leading coefficient of the degree-<=d interpolant through (s, c_s)
    lead = Fraction(0)
    for j, cj in enumerate(c):
        lead += (-1) ** (d - j) * math.comb(d, j) * cj
    b0 = lead / math.factorial(d)
    if b0 == 0:
        raise NotBernsteinPair("operator polynomial has degree < d")
    return b0


def dual_gradient_point(inst: PvsInstance, L, ring: ResidueRing) -> list:
    """c = d^(-1) grad(f_dual)(L) / f_dual(L) mod p^m: the critical point of f
    on the chart {L(x) = 1}."""
    pm, p = ring.modulus, ring.p
    if inst.d % p == 0:
        raise DegreeDivisible(f"p={p} divides d={inst.d}")
    coords = [int(v) % pm for v in L]
    v = inst.f_dual.eval_int(coords, pm)
    if v % p == 0:
        raise NonUnitValue(f"f_dual(L) = {v} is not a unit mod {p}")
    scale = pow(inst.d, -1, pm) * pow(v, -1, pm) % pm
    return [g.eval_int(coords, pm) * scale % pm for g in inst.f_dual.gradient()]


def critical_value_identity_check(inst: PvsInstance, L, ring: ResidueRing) -> bool:
    """Exact congruence f(c) = d^(-d) b0 f_dual(L)^(-1) mod p^m."""
    p, pm = ring.p, ring.modulus
    if inst.divisor_bad_prime(p):
        raise BadPrime(f"p={p} divides 2 d num(b0) den(b0) for {inst.name}")
    c = dual_gradient_point(inst, L, ring)
    v = inst.f_dual.eval_int([int(x) % pm for x in L], pm)
    lhs = inst.f.eval_int(c, pm)
    rhs = (
        pow(pow(inst.d, inst.d, pm), -1, pm)
        * inst.b0_mod(pm)
        * pow(v, -1, pm)
        % pm
    )
    return lhs == rhs


def is_bad_prime(inst: PvsInstance, p: int, max_samples: int = 50, seed: int = 0) -> bool:
    """Conservative bad-prime flag: divisibility plus structural probes.

    Samples unit-value points L of f_dual mod p (exhaustively when p^n is
    small) and flags p when the log-Hessian is singular at some L or the
    hyperplane chart has a degenerate unit-value critical residue.  A flag
    never proves the prime good; agreement is always checked empirically."""
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    if p == 2 or inst.divisor_bad_prime(p):
        return True
    ring = ResidueRing(p, 1)
    total = p**inst.n
    if total <= 4096:
        candidates = range(total)
    else:
        import random

        rng = random.Random(seed)
        candidates = (rng.randrange(total) for _ in range(20 * max_samples))
    checked = 0
    for idx in candidates:
        L = [(idx // p**j) % p for j in range(inst.n)]
        if inst.f_dual.eval_int(L, p) % p == 0:
            continue
        try:
            loghessian_disc(inst.f_dual, L, p)
        except SingularHessian:
            return True
        except NonUnitValue:  # pragma: no cover - filtered above
            continue
        g, d = chart_function(inst.f, Hyperplane(tuple(L)), ring)
        unit_residues, _ = find_chart_critical_residues(g, ring)
        hess = g.hessian()
        for zbar in unit_residues:
            if d > 0:
                H = [[h.eval_int(list(zbar), p) for h in row] for row in hess]
                if _det_mod(H, p) == 0:
                    return True
        checked += 1
        if checked >= max_samples and total > 4096:
            break
    return False


def builtin_catalogue() -> dict:
    """The built-in instances, validated against the operator oracle."""
    defs = [
        ("linear", 1, 1, "x1", "y1", Fraction(1)),
        ("square", 1, 2, "x1^2", "y1^2", Fraction(4)),
        ("hyperbola", 2, 2, "x1*x2", "y1*y2", Fraction(1)),
        ("quadric-2", 2, 2, "x1^2 + x2^2", "y1^2 + y2^2", Fraction(4)),
        ("quadric-3", 3, 2, "x1^2 + x2^2 + x3^2", "y1^2 + y2^2 + y3^2", Fraction(4)),
        ("quadric-4", 4, 2, "x1^2 + x2^2 + x3^2 + x4^2", "y1^2 + y2^2 + y3^2 + y4^2", Fraction(4)),
        ("det2", 4, 2, "x1*x4 - x2*x3", "y1*y4 - y2*y3", Fraction(1)),
    ]
    out = {}
    for name, n, d, f, fdual, b0 in defs:
        inst = PvsInstance(name, n, d, parse_poly(f, n), parse_poly(fdual, n), b0).validate()
        out[name] = inst
    return out


def parse_catalogue(text: str) -> list:
    """Parse catalogue blocks; every instance is validated on load."""
    instances = []
    for block in text.split("\n\n"):
        lines = [ln.strip() for ln in block.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        if not lines:
            continue
        fields = {}
        for ln in lines:
            if "=" not in ln:
                raise ValueError(f"malformed catalogue line: {ln!r}")
            key, _, value = ln.partition("=")
            fields[key.strip()] = value.strip()
        missing = {"name", "n", "d", "f", "fdual", "b0"} - set(fields)
        if missing:
            raise ValueError(f"catalogue block missing fields: {sorted(missing)}")
        n = int(fields["n"])
        inst = PvsInstance(
            fields["name"],
            n,
            int(fields["d"]),
            parse_poly(fields["f"], n),
            parse_poly(fields["fdual"], n),
            Fraction(fields["b0"]),
        ).validate()
        instances.append(inst)
    return instances


def load_catalogue(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_catalogue(fh.read())


def format_catalogue(instances) -> str:
    blocks = []
    for inst in instances:
        blocks.append(
            "\n".join(
                [
                    f"name={inst.name}",
                    f"n={inst.n}",
                    f"d={inst.d}",
                    f"f={format_poly(inst.f)}",
                    f"fdual={format_poly(inst.f_dual, letter='y')}",
                    f"b0={inst.b0}",
                ]
            )
        )
    return "\n\n".join(blocks) + "\n"
