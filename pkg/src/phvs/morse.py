"""Constructive quadratic normal forms at finite p-adic precision.

Newton lifting of nondegenerate critical points to mod p^m, the
completing-the-square change of variables that writes f near such a point
as f(c) + sum a_i T_i(x)^2 (a congruence mod p^m on the residue disc),
and the critical-point evaluation of character sums on affine space and
hyperplane charts.

All series arithmetic runs in Z/p^m[u] truncated at total degree
max(m, 3): arguments lie in pZ, so dropped monomials evaluate to 0 mod p^m.
"""

import math
from dataclasses import dataclass

import numpy as np

from .characters import MultChar, is_primitive_mult
from .charsums import SumMethod, SumValue, _alpha_tilde_cached
from .errors import (
    DegenerateCritical,
    DegenerateCriticalFound,
    NotPrimitive,
    NoUnitCoefficient,
)
from .multipoly import MultiPoly, compose, reduce_mod
from .residue import ResidueRing, SquareClass, diagonalize_symmetric, legendre


# -- linear algebra mod p^m (unit pivots exist when det is a unit mod p) --


def solve_mod(H, b, modulus: int, p: int):
    """Solve H x = b mod modulus for H invertible mod p."""
    n = len(b)
    A = [[int(H[i][j]) % modulus for j in range(n)] + [int(b[i]) % modulus] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col] % p != 0), None)
        if piv is None:
            raise DegenerateCritical("matrix is singular mod p")
        A[col], A[piv] = A[piv], A[col]
        inv = pow(A[col][col], -1, modulus)
        A[col] = [v * inv % modulus for v in A[col]]
        for r in range(n):
            if r != col and A[r][col]:
                c = A[r][col]
                A[r] = [(vr - c * vc) % modulus for vr, vc in zip(A[r], A[col])]
    return [A[i][n] for i in range(n)]


def invert_mod(M, modulus: int, p: int) -> np.ndarray:
    n = len(M)
    cols = [solve_mod(M, [1 if i == j else 0 for i in range(n)], modulus, p) for j in range(n)]
    return np.array(cols, dtype=np.int64).T


def _det_mod(M, p: int) -> int:
    """Determinant mod p by fraction-free elimination (small n)."""
    n = len(M)
    A = [[int(M[i][j]) % p for j in range(n)] for i in range(n)]
    det = 1
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col] % p != 0), None)
        if piv is None:
            return 0
        if piv != col:
            A[col], A[piv] = A[piv], A[col]
            det = -det % p
        det = det * A[col][col] % p
        inv = pow(A[col][col], -1, p)
        for r in range(col + 1, n):
            c = A[r][col] * inv % p
            if c:
                A[r] = [(vr - c * vc) % p for vr, vc in zip(A[r], A[col])]
    return det % p


# -- certificates --


@dataclass
class CriticalPointCert:
    """A critical point of f lifted to mod p^m with nondegeneracy evidence."""

    point: list
    grad_valuations: list       # all >= m: the gradient vanishes mod p^m
    hess_disc: SquareClass      # discriminant class of Hess f at the point mod p
    f_at_c: int
    ring: ResidueRing
    newton_iterations: int
    valuation_trace: list       # min gradient valuation before each Newton step


@dataclass
class MorseNormalForm:
    """Diagonal units a_i and transform T with
    f(x) = f(c) + sum a_i T_i(x)^2 mod p^m on the residue disc of c."""

    cert: CriticalPointCert
    a: list                     # units mod p^m
    transform: list             # T_i as MultiPoly in the original variables, T(c) = 0
    ring: ResidueRing


def _grad_min_valuation(grads, c, ring) -> int:
    vals = ring.tables.valuation
    return int(min(vals[g.eval_int(c, ring.modulus)] for g in grads)) if grads else ring.m


def lift_critical_point(f: MultiPoly, cbar, ring: ResidueRing) -> CriticalPointCert:
    """Newton-lift a critical residue cbar (mod p) of f to a critical point
    mod p^m: c <- c - Hess(c)^(-1) grad(c); valuation doubles each step."""
    p, pm, m = ring.p, ring.modulus, ring.m
    n = f.nvars
    c = [int(v) % pm for v in cbar]
    grads = f.gradient()
    if any(g.eval_int(c, p) != 0 for g in grads):
        raise ValueError(f"{tuple(cbar)} is not a critical point of f mod {p}")
    hess = f.hessian()
    H0 = [[h.eval_int(c, p) for h in row] for row in hess]
    if _det_mod(H0, p) == 0:
        raise DegenerateCritical(f"Hessian of f at {tuple(cbar)} is singular mod {p}")

    iterations = 0
    trace = [_grad_min_valuation(grads, c, ring)]
    max_iter = max(1, math.ceil(math.log2(m))) + 1
    while any(g.eval_int(c, pm) != 0 for g in grads):
        Hc = [[h.eval_int(c, pm) for h in row] for row in hess]
        gc = [g.eval_int(c, pm) for g in grads]
        delta = solve_mod(Hc, gc, pm, p)
        c = [(ci - di) % pm for ci, di in zip(c, delta)]
        iterations += 1
        trace.append(_grad_min_valuation(grads, c, ring))
        if iterations > max_iter:
            raise DegenerateCritical("Newton iteration failed to converge")

    disc = diagonalize_symmetric(np.array(H0, dtype=np.int64) % p, p).disc
    return CriticalPointCert(
        point=c,
        grad_valuations=[int(ring.tables.valuation[g.eval_int(c, pm)]) for g in grads],
        hess_disc=disc,
        f_at_c=f.eval_int(c, pm),
        ring=ring,
        newton_iterations=iterations,
        valuation_trace=trace,
    )


# -- truncated series helpers (quotient by monomials of total degree >= bound) --


def _trunc(f: MultiPoly, modulus: int, bound: int) -> MultiPoly:
    return MultiPoly(
        f.nvars, {e: c % modulus for e, c in f.terms.items() if sum(e) < bound}
    )


def _tmul(a: MultiPoly, b: MultiPoly, modulus: int, bound: int) -> MultiPoly:
    return _trunc(a * b, modulus, bound)


def _tinv(a: MultiPoly, modulus: int, bound: int) -> MultiPoly:
    """Series inverse for unit constant term (Newton; positive-degree part is nilpotent)."""
    a0 = a.terms.get((0,) * a.nvars, 0)
    x = MultiPoly.constant(a.nvars, pow(int(a0), -1, modulus))
    steps = max(1, math.ceil(math.log2(bound))) + 1
    for _ in range(steps):
        x = _trunc(2 * x - _tmul(a, _tmul(x, x, modulus, bound), modulus, bound), modulus, bound)
    return x


def _tsqrt_one(a: MultiPoly, modulus: int, bound: int) -> MultiPoly:
    """Square root of a series with constant term 1, itself with constant term 1."""
    assert a.terms.get((0,) * a.nvars, 0) % modulus == 1
    g = MultiPoly.constant(a.nvars, 1)
    inv2 = pow(2, -1, modulus)
    steps = max(1, math.ceil(math.log2(bound))) + 1
    for _ in range(steps):
        g = _trunc(inv2 * (g + _tmul(a, _tinv(g, modulus, bound), modulus, bound)), modulus, bound)
    return g


def _shift_to_origin(f: MultiPoly, c, modulus: int) -> MultiPoly:
    """f(c + u) - f(c) with coefficients mod modulus."""
    n = f.nvars
    subs = [MultiPoly.constant(n, int(c[i])) + MultiPoly.variable(n, i) for i in range(n)]
    shifted = compose(f, subs)
    const = (0,) * n
    shifted = shifted - MultiPoly.constant(n, shifted.terms.get(const, 0))
    return reduce_mod(shifted, modulus)


def _substitute_linear(f: MultiPoly, M, modulus: int, bound: int) -> MultiPoly:
    """f(M w) in the truncated quotient."""
    n = f.nvars
    subs = []
    for i in range(n):
        s = MultiPoly(n)
        for j in range(n):
            if int(M[i][j]) % modulus:
                s = s + int(M[i][j]) * MultiPoly.variable(n, j)
        subs.append(s)
    return _trunc(compose(f, subs), modulus, bound)


def morse_normal_form(f: MultiPoly, cbar, ring: ResidueRing) -> MorseNormalForm:
    """Completing-the-square induction over truncated polynomials mod p^m.

    Pivots are made units up front by one congruence that diagonalizes the
    constant Hessian mod p; each round extracts a_r, rescales by the Hensel
    square root of H_rr/a_r, and Schur-updates the trailing block."""
    p, pm, m = ring.p, ring.modulus, ring.m
    n = f.nvars
    cert = lift_critical_point(f, cbar, ring)
    bound = max(m, 3)
    inv2 = pow(2, -1, pm)

    F = _trunc(_shift_to_origin(f, cert.point, pm), pm, bound)
    # the linear part is = 0 mod p^m at a lifted critical point; drop it
    for e in list(F.terms):
        if sum(e) == 1:
            assert F.terms[e] % pm == 0
            del F.terms[e]

    # constant Hessian/2 mod p, made diagonal by congruence to pin unit pivots
    A = np.zeros((n, n), dtype=np.int64)
    for e, cf in F.terms.items():
        if sum(e) != 2:
            continue
        nz = [i for i, ei in enumerate(e) if ei]
        if len(nz) == 1:
            A[nz[0], nz[0]] = cf % p
        else:
            i, j = nz
            half = cf * pow(2, -1, p) % p
            A[i, j] = A[j, i] = half
    diag = diagonalize_symmetric(A, p)
    X = diag.transform  # entries mod p; lifts to a unit of GL_n(Z/p^m)
    G = _substitute_linear(F, X, pm, bound)

    # symmetric polynomial Hessian h[i][j] with G = sum w_i w_j h_ij(w)
    h = [[MultiPoly(n) for _ in range(n)] for _ in range(n)]
    for e, cf in G.terms.items():
        assert sum(e) >= 2
        i = next(idx for idx, ei in enumerate(e) if ei)
        rest = list(e)
        if e[i] >= 2:
            rest[i] -= 2
            h[i][i] = h[i][i] + MultiPoly(n, {tuple(rest): cf % pm})
        else:
            j = next(idx for idx in range(i + 1, n) if e[idx])
            rest[i] -= 1
            rest[j] -= 1
            halfterm = MultiPoly(n, {tuple(rest): cf * inv2 % pm})
            h[i][j] = h[i][j] + halfterm
            h[j][i] = h[j][i] + halfterm

    a_units = []
    Q = []
    for r in range(n):
        a_r = h[r][r].terms.get((0,) * n, 0) % pm
        assert a_r % p != 0, "pivot lost despite pre-diagonalization"
        a_units.append(int(a_r))
        inv_hrr = _tinv(h[r][r], pm, bound)
        s_r = MultiPoly.variable(n, r)
        for i in range(r + 1, n):
            s_r = s_r + _tmul(
                MultiPoly.variable(n, i), _tmul(h[i][r], inv_hrr, pm, bound), pm, bound
            )
        g_r = _tsqrt_one(reduce_mod(pow(a_r, -1, pm) * h[r][r], pm), pm, bound)
        Q.append(_tmul(g_r, s_r, pm, bound))
        for i in range(r + 1, n):
            for j in range(i, n):
                upd = _tmul(h[i][r], _tmul(h[j][r], inv_hrr, pm, bound), pm, bound)
                h[i][j] = reduce_mod(h[i][j] - upd, pm)
                if i != j:
                    h[j][i] = h[i][j]

    # express the transform in the original coordinates: w = X^(-1) (x - c)
    Y = invert_mod(X, pm, p)
    w_of_x = []
    for j in range(n):
        s = MultiPoly(n)
        for l in range(n):
            if int(Y[j][l]) % pm:
                s = s + int(Y[j][l]) * (
                    MultiPoly.variable(n, l) - MultiPoly.constant(n, cert.point[l])
                )
        w_of_x.append(reduce_mod(s, pm))
    transform = [reduce_mod(compose(q, w_of_x), pm) for q in Q]
    return MorseNormalForm(cert=cert, a=a_units, transform=transform, ring=ring)


# -- charts and the critical-point formula --


@dataclass(frozen=True)
class AffineSpace:
    """The whole coordinate space: chart dimension n."""


@dataclass(frozen=True)
class Hyperplane:
    """The solution set of L(x) = 1 mod p^m: chart dimension n - 1."""

    L: tuple


def chart_function(f: MultiPoly, chart, ring: ResidueRing):
    """(g, d): f expressed in chart coordinates and the chart dimension.

    The hyperplane chart solves L(x) = 1 for the smallest-index unit
    coefficient; remaining coordinates keep their relative order."""
    if isinstance(chart, AffineSpace):
        return f, f.nvars
    pm, p = ring.modulus, ring.p
    L = [int(c) % pm for c in chart.L]
    n = f.nvars
    if len(L) != n:
        raise ValueError(f"linear form has {len(L)} coefficients, f has {n} variables")
    j = next((i for i, c in enumerate(L) if c % p != 0), None)
    if j is None:
        raise NoUnitCoefficient(f"no unit coefficient in L={tuple(chart.L)}")
    d = n - 1
    inv_lj = pow(L[j], -1, pm)
    free = [i for i in range(n) if i != j]
    subs = []
    solved = MultiPoly.constant(d, inv_lj)
    for z_idx, i in enumerate(free):
        solved = solved - (L[i] * inv_lj) * MultiPoly.variable(d, z_idx)
    for i in range(n):
        if i == j:
            subs.append(solved)
        else:
            subs.append(MultiPoly.variable(d, free.index(i)))
    return reduce_mod(compose(f, subs), pm), d


def find_chart_critical_residues(g: MultiPoly, ring: ResidueRing):
    """Exhaustive scan of F_p^d: (critical residues with unit value,
    critical residues with non-unit value)."""
    p = ring.p
    d = g.nvars
    if d == 0:
        # zero-dimensional chart: the single point, critical by convention
        return ([()], []) if g.eval_int([], p) % p != 0 else ([], [()])
    idx = np.arange(p**d, dtype=np.int64)
    cols = [(idx // p ** (d - 1 - j)) % p for j in range(d)]
    crit = np.ones(p**d, dtype=bool)
    for gi in g.gradient():
        crit &= gi.eval_arrays(cols, p) == 0
    unit = g.eval_arrays(cols, p) % p != 0
    pts_unit = [tuple(int(cols[j][i]) for j in range(d)) for i in np.nonzero(crit & unit)[0]]
    pts_nonunit = [tuple(int(cols[j][i]) for j in range(d)) for i in np.nonzero(crit & ~unit)[0]]
    return pts_unit, pts_nonunit


def critical_points_sum(f: MultiPoly, chi: MultChar, chart, workers=None) -> SumValue:
    """Evaluate the chart sum of chi(f) from its critical residues:
    sum over critical points of chi(f(c)) legendre(f(c)^d H_c)^m alpha~^d
    with H_c = 2^(-d) disc(Hess). Every unit-value critical residue must be
    nondegenerate mod p, else DegenerateCriticalFound flags the prime."""
    ring = chi.ring
    if ring.m < 2:
        raise ValueError("critical_points_sum needs m >= 2")
    if not is_primitive_mult(chi):
        raise NotPrimitive(f"{chi!r} must be primitive")
    p, pm, m = ring.p, ring.modulus, ring.m
    g, d = chart_function(f, chart, ring)
    residues, _ = find_chart_critical_residues(g, ring)
    alpha = _alpha_tilde_cached(p, m, chi.index)
    hess = g.hessian()
    inv2d = pow(pow(2, d, p), -1, p)
    total = 0j
    for zbar in residues:
        Hs = [[hh.eval_int(list(zbar), p) for hh in row] for row in hess]
        if d > 0 and _det_mod(Hs, p) == 0:
            raise DegenerateCriticalFound(
                f"degenerate unit-value critical residue {zbar} of the chart at p={p}"
            )
        cert = lift_critical_point(g, list(zbar), ring) if d > 0 else None
        f_c = cert.f_at_c if d > 0 else g.eval_int([], pm)
        disc_prod = 1
        if d > 0:
            for entry in diagonalize_symmetric(np.array(Hs, dtype=np.int64) % p, p).entries:
                disc_prod = disc_prod * entry % p
        rep = pow(f_c, d, p) * inv2d * disc_prod % p
        sign = int(legendre(rep, p)) ** m
        total += chi(f_c) * sign * alpha**d
    return SumValue(total, p**d, SumMethod.CLOSED_FORM)
