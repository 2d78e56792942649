"""Sparse multivariate polynomials with exact integer coefficients.

Evaluation over residue rings, formal gradients and Hessians, homogeneity,
constant-coefficient differential operators, the log-Hessian discriminant,
and a text parser for the grammar used by catalogue files and the CLI:
integer coefficients, variables x1..xN (or y1..yN), operators + - * ^.
"""

import math
import re

import numpy as np

from .errors import ArityMismatch, NonUnitValue, PolyParseError, SingularHessian
from .residue import ResidueElem, ResidueRing, SquareClass, diagonalize_symmetric


class MultiPoly:
    """Map from exponent tuples (length nvars) to nonzero integer coefficients."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict = None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for exps, c in terms.items():
                if len(exps) != nvars:
                    raise ArityMismatch(f"exponent vector {exps} has length != {nvars}")
                if c != 0:
                    self.terms[tuple(exps)] = c

    # -- constructors --

    @classmethod
    def constant(cls, nvars: int, c: int) -> "MultiPoly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "MultiPoly":
        if not 0 <= i < nvars:
            raise ArityMismatch(f"variable index {i} out of range for nvars={nvars}")
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1})

    # -- ring operations --

    def _check(self, other) -> "MultiPoly":
        if isinstance(other, int):
            return MultiPoly.constant(self.nvars, other)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        if other.nvars != self.nvars:
            raise ArityMismatch(f"nvars {self.nvars} vs {other.nvars}")
        return other

    def __add__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0) + c
        return MultiPoly(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return -self + other

    def __mul__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return NotImplemented
        terms = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return MultiPoly(self.nvars, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power of a polynomial")
        out = MultiPoly.constant(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        return (
            isinstance(other, MultiPoly)
            and self.nvars == other.nvars
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    # -- evaluation --

    def eval(self, x) -> ResidueElem:
        """Evaluate at a vector of ResidueElem (all in the same ring)."""
        if len(x) != self.nvars:
            raise ArityMismatch(f"expected {self.nvars} coordinates, got {len(x)}")
        if not x:
            raise ArityMismatch("eval on a 0-variable polynomial needs eval_int with a ring")
        ring = x[0].ring
        coords = [c.value if isinstance(c, ResidueElem) else int(c) for c in x]
        return ResidueElem(self.eval_int(coords, ring.modulus), ring)

    def eval_int(self, coords, modulus: int) -> int:
        """Evaluate at integer coordinates, reduced mod modulus."""
        if len(coords) != self.nvars:
            raise ArityMismatch(f"expected {self.nvars} coordinates, got {len(coords)}")
        acc = 0
        for exps, c in self.terms.items():
            t = c % modulus
            for xv, e in zip(coords, exps):
                if e:
                    t = t * pow(int(xv), e, modulus) % modulus
            acc = (acc + t) % modulus
        return acc

    def eval_arrays(self, cols, modulus: int) -> np.ndarray:
        """Vectorized evaluation on numpy int64 coordinate arrays (the sum engines).

        Safe for modulus <= 2^31: intermediate products stay below 2^62.
        """
        if len(cols) != self.nvars:
            raise ArityMismatch(f"expected {self.nvars} coordinate arrays, got {len(cols)}")
        shape = cols[0].shape if cols else ()
        acc = np.zeros(shape, dtype=np.int64)
        for exps, c in self.terms.items():
            t = np.full(shape, c % modulus, dtype=np.int64)
            for col, e in zip(cols, exps):
                base = col % modulus
                while e:
                    if e & 1:
                        t = t * base % modulus
                    base = base * base % modulus
                    e >>= 1
            acc = (acc + t) % modulus
        return acc

    # -- calculus --

    def partial(self, i: int) -> "MultiPoly":
        terms = {}
        for exps, c in self.terms.items():
            if exps[i] == 0:
                continue
            e = list(exps)
            coeff = c * e[i]
            e[i] -= 1
            e = tuple(e)
            terms[e] = terms.get(e, 0) + coeff
        return MultiPoly(self.nvars, terms)

    def gradient(self) -> list:
        return [self.partial(i) for i in range(self.nvars)]

    def hessian(self) -> list:
        grad = self.gradient()
        return [[grad[i].partial(j) for j in range(self.nvars)] for i in range(self.nvars)]

    def is_homogeneous(self):
        """Total degree shared by all terms, or None if degrees are mixed."""
        degrees = {sum(e) for e in self.terms}
        if not degrees:
            return 0
        if len(degrees) == 1:
            return degrees.pop()
        return None

    def __repr__(self):
        return f"MultiPoly({format_poly(self)!r})"


def compose(f: MultiPoly, polys) -> MultiPoly:
    """Substitute polys[i] for variable i of f (all polys share one arity)."""
    if len(polys) != f.nvars:
        raise ArityMismatch(f"need {f.nvars} substitution polynomials, got {len(polys)}")
    nvars = polys[0].nvars if polys else 0
    out = MultiPoly(nvars)
    for exps, c in f.terms.items():
        term = MultiPoly.constant(nvars, c)
        for g, e in zip(polys, exps):
            if e:
                term = term * g**e
        out = out + term
    return out


def reduce_mod(f: MultiPoly, modulus: int) -> MultiPoly:
    """Coefficients reduced to canonical representatives in [0, modulus)."""
    return MultiPoly(f.nvars, {e: c % modulus for e, c in f.terms.items()})


def apply_diff_operator(g: MultiPoly, h: MultiPoly) -> MultiPoly:
    """Substitute y_i -> d/dx_i in g and apply the operator to h (exact integers)."""
    if g.nvars != h.nvars:
        raise ArityMismatch(f"operator has {g.nvars} variables, operand {h.nvars}")
    out = MultiPoly(h.nvars)
    for a, cg in g.terms.items():
        part = {}
        for b, ch in h.terms.items():
            if any(bi < ai for ai, bi in zip(a, b)):
                continue
            coeff = ch
            for ai, bi in zip(a, b):
                coeff *= math.perm(bi, ai)
            e = tuple(bi - ai for ai, bi in zip(a, b))
            part[e] = part.get(e, 0) + coeff
        out = out + MultiPoly(h.nvars, {e: cg * c for e, c in part.items()})
    return out


def loghessian_matrix(fdual: MultiPoly, L, p: int) -> np.ndarray:
    """The matrix of second partials of log(fdual) at L, over F_p.

    Computed as (v * Hess - grad grad^t) * v^(-2) with v = fdual(L); never
    forms rational functions."""
    n = fdual.nvars
    if len(L) != n:
        raise ArityMismatch(f"point has {len(L)} coordinates, fdual has {n}")
    coords = [int(c) % p for c in L]
    v = fdual.eval_int(coords, p)
    if v % p == 0:
        raise NonUnitValue(f"fdual(L) = 0 mod {p}")
    grad = np.array([g.eval_int(coords, p) for g in fdual.gradient()], dtype=np.int64)
    hess = np.array(
        [[h.eval_int(coords, p) for h in row] for row in fdual.hessian()], dtype=np.int64
    )
    vinv2 = pow(v, -2, p)
    return (v * hess - np.outer(grad, grad)) * vinv2 % p


def loghessian_disc(fdual: MultiPoly, L, p: int) -> SquareClass:
    """Square class of the discriminant of the log-Hessian of fdual at L mod p.

    Raises SingularHessian when the matrix has rank < n, which flags the
    prime as bad for the instance."""
    M = loghessian_matrix(fdual, L, p)
    diag = diagonalize_symmetric(M, p)
    if len(diag.entries) < fdual.nvars:
        raise SingularHessian(f"log-Hessian at {tuple(L)} has rank {len(diag.entries)} < {fdual.nvars}")
    return diag.disc


# -- text format --

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<var>[xy]\d+)|(?P<op>[-+*^]))")


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if not mt:
            if text[pos:].strip():
                raise PolyParseError(f"unexpected character {text[pos:].strip()[0]!r} in {text!r}")
            break
        pos = mt.end()
        if mt.group("int"):
            out.append(("int", int(mt.group("int"))))
        elif mt.group("var"):
            out.append(("var", int(mt.group("var")[1:])))
        else:
            out.append(("op", mt.group("op")))
    return out


def parse_poly(text: str, nvars: int = None) -> MultiPoly:
    """Parse the polynomial grammar, e.g. "x1^2 + 3*x1*x2 - x2^2".

    With nvars=None the arity is inferred from the largest variable index."""
    tokens = _tokenize(text)
    if not tokens:
        raise PolyParseError("empty polynomial text")
    max_idx = max((t[1] for t in tokens if t[0] == "var"), default=0)
    if nvars is None:
        nvars = max_idx
    elif max_idx > nvars:
        raise PolyParseError(f"variable index {max_idx} exceeds nvars={nvars}")

    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, None)

    def factor():
        nonlocal pos
        kind, val = peek()
        if kind == "int":
            pos += 1
            base = MultiPoly.constant(nvars, val)
        elif kind == "var":
            pos += 1
            base = MultiPoly.variable(nvars, val - 1)
        else:
            raise PolyParseError(f"expected coefficient or variable at token {pos} of {text!r}")
        if peek() == ("op", "^"):
            pos += 1
            kind, val = peek()
            if kind != "int":
                raise PolyParseError(f"expected integer exponent in {text!r}")
            pos += 1
            base = base**val
        return base

    def term():
        nonlocal pos
        out = factor()
        while peek() == ("op", "*"):
            pos += 1
            out = out * factor()
        return out

    sign = 1
    kind, val = peek()
    if kind == "op" and val in "+-":
        sign = -1 if val == "-" else 1
        pos += 1
    result = sign * term()
    while pos < len(tokens):
        kind, val = peek()
        if kind != "op" or val not in "+-":
            raise PolyParseError(f"expected + or - at token {pos} of {text!r}")
        pos += 1
        t = term()
        result = result + (t if val == "+" else -t)
    return result


def format_poly(f: MultiPoly, letter: str = "x") -> str:
    """Inverse of parse_poly (up to term order)."""
    if not f.terms:
        return "0"
    bits = []
    for exps, c in sorted(f.terms.items(), key=lambda item: (-sum(item[0]), item[0])):
        factors = []
        if abs(c) != 1 or not any(exps):
            factors.append(str(abs(c)))
        for i, e in enumerate(exps):
            if e == 1:
                factors.append(f"{letter}{i + 1}")
            elif e > 1:
                factors.append(f"{letter}{i + 1}^{e}")
        mono = "*".join(factors)
        if not bits:
            bits.append(mono if c > 0 else f"-{mono}")
        else:
            bits.append(f"+ {mono}" if c > 0 else f"- {mono}")
    return " ".join(bits)
