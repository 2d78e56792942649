"""Character-sum engines over (Z/p^m)^n.

Brute-force enumeration, the critical-point-filtered sum, the quadratic
closed form, the discrete Fourier transform of chi(f) at a linear form,
its factorization for homogeneous f, the Parseval check, and
composite-modulus sums assembled from prime-power components.

Enumeration is lexicographic on canonical representatives and reduced in
fixed 65536-point chunks combined in index order, so results are
bit-reproducible for any worker count (PHVS_THREADS).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .characters import (
    AddChar,
    MultChar,
    alpha_tilde_mult,
    is_primitive_add,
    is_primitive_mult,
)
from .errors import (
    BudgetExceeded,
    DegreeDivisible,
    EvenModulus,
    NoUnitCoefficient,
    NonUnit,
    NotPrimitive,
    RingMismatch,
)
from .multipoly import MultiPoly
from .residue import ResidueRing, legendre

CHUNK = 65536
DEFAULT_BUDGET = 10**8


class SumMethod(Enum):
    BRUTE_FORCE = "BruteForce"
    FILTERED = "Filtered"
    CLOSED_FORM = "ClosedForm"
    FACTORIZED = "Factorized"
    CRT_PRODUCT = "CRTProduct"


@dataclass
class SumValue:
    value: complex
    terms_counted: int
    method: SumMethod

    def __repr__(self):
        return f"SumValue({self.value:.12g}, terms={self.terms_counted}, {self.method.value})"


def worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("PHVS_THREADS", "1")))


def _check_budget(needed: int, budget: int):
    if needed > budget:
        raise BudgetExceeded(needed, budget)


def _chunk_cols(modulus: int, n: int, start: int, stop: int):
    """Coordinate columns of grid indices [start, stop) in lexicographic order."""
    idx = np.arange(start, stop, dtype=np.int64)
    return [(idx // modulus ** (n - 1 - j)) % modulus for j in range(n)]


def _reduce_chunks(fn, total: int, workers: int):
    """Apply fn(start, stop) per fixed chunk; combine partials in index order."""
    ranges = [(a, min(a + CHUNK, total)) for a in range(0, total, CHUNK)]
    if workers <= 1 or len(ranges) == 1:
        partials = [fn(a, b) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda r: fn(*r), ranges))
    acc = 0j
    count = 0
    for value, c in partials:
        acc += value
        count += c
    return acc, count


def _char_of(char):
    """(modulus, value table) of a multiplicative or additive character."""
    return char.ring.modulus, char.values


def brute_sum(f: MultiPoly, chi, budget: int = DEFAULT_BUDGET, workers=None) -> SumValue:
    """Full enumeration of chi(f(x)) over (Z/p^m)^n.

    chi may be multiplicative (extended by zero) or additive."""
    pm, table = _char_of(chi)
    n = f.nvars
    total = pm**n
    _check_budget(total, budget)

    def part(a, b):
        cols = _chunk_cols(pm, n, a, b)
        fv = f.eval_arrays(cols, pm)
        return complex(np.sum(table[fv])), b - a

    value, count = _reduce_chunks(part, total, worker_count(workers))
    return SumValue(value, count, SumMethod.BRUTE_FORCE)


def filtered_threshold(m: int) -> int:
    """Integer reading of the gradient-valuation bound (m-1)/2: ceil((m-1)/2)."""
    return m // 2


def _near_critical_mask(f: MultiPoly, p: int, thresh: int) -> np.ndarray:
    """Keep-mask over (Z/p^t)^n for the condition min_j v(grad_j f(x)) >= t.

    The condition only depends on x mod p^t, so it is tabulated on the small
    residue grid and looked up from there during enumeration."""
    pt = p**thresh
    n = f.nvars
    cols = _chunk_cols(pt, n, 0, pt**n)
    keep = np.ones(pt**n, dtype=bool)
    for g in f.gradient():
        keep &= g.eval_arrays(cols, pt) == 0
    return keep


def _check_filtered_pre(f, chi):
    ring = chi.ring
    if ring.m < 2:
        raise ValueError("filtered_sum needs m >= 2")
    primitive = is_primitive_mult(chi) if isinstance(chi, MultChar) else is_primitive_add(chi)
    if not primitive:
        raise NotPrimitive(f"{chi!r} must be primitive")


def filtered_sum(f: MultiPoly, chi, budget: int = DEFAULT_BUDGET, workers=None) -> SumValue:
    """Sum chi(f(x)) only over x whose gradient valuation reaches the
    near-critical threshold; equals brute_sum for primitive chi, m >= 2."""
    _check_filtered_pre(f, chi)
    ring = chi.ring
    pm, table = _char_of(chi)
    p = ring.p
    n = f.nvars
    total = pm**n
    _check_budget(total, budget)
    thresh = filtered_threshold(ring.m)
    pt = p**thresh
    keep_small = _near_critical_mask(f, p, thresh)

    def part(a, b):
        cols = _chunk_cols(pm, n, a, b)
        ridx = np.zeros(b - a, dtype=np.int64)
        for j, col in enumerate(cols):
            ridx = ridx * pt + col % pt
        keep = keep_small[ridx]
        fv = f.eval_arrays(cols, pm)
        return complex(np.sum(table[fv] * keep)), int(np.count_nonzero(keep))

    value, count = _reduce_chunks(part, total, worker_count(workers))
    return SumValue(value, count, SumMethod.FILTERED)


def brute_and_filtered(f: MultiPoly, chars, budget: int = DEFAULT_BUDGET, workers=None):
    """Brute and filtered sums for several characters of one ring, sharing a
    single pass over the enumeration grid; returns [(brute, filtered), ...]
    in the order of chars.

    Each chunk is folded into exact integer value-counts, so the reduction is
    order-independent by construction; the character tables are applied once
    at the end."""
    ring = chars[0].ring
    for c in chars:
        if c.ring != ring:
            raise RingMismatch("all characters must share one ring")
        _check_filtered_pre(f, c)
    pm, p = ring.modulus, ring.p
    n = f.nvars
    total = pm**n
    _check_budget(total, budget)
    thresh = filtered_threshold(ring.m)
    pt = p**thresh
    keep_small = _near_critical_mask(f, p, thresh)

    def part(a, b):
        cols = _chunk_cols(pm, n, a, b)
        ridx = np.zeros(b - a, dtype=np.int64)
        for col in cols:
            ridx = ridx * pt + col % pt
        keep = keep_small[ridx]
        fv = f.eval_arrays(cols, pm)
        cnt_all = np.bincount(fv, minlength=pm)
        cnt_keep = np.bincount(fv[keep], minlength=pm)
        return cnt_all, cnt_keep

    ranges = [(a, min(a + CHUNK, total)) for a in range(0, total, CHUNK)]
    workers_n = worker_count(workers)
    if workers_n <= 1 or len(ranges) == 1:
        partials = [part(a, b) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers_n) as pool:
            partials = list(pool.map(lambda r: part(*r), ranges))
    cnt_all = np.zeros(pm, dtype=np.int64)
    cnt_keep = np.zeros(pm, dtype=np.int64)
    for ca, ck in partials:
        cnt_all += ca
        cnt_keep += ck
    kept = int(cnt_keep.sum())
    results = []
    for c in chars:
        results.append(
            (
                SumValue(complex(cnt_all @ c.values), total, SumMethod.BRUTE_FORCE),
                SumValue(complex(cnt_keep @ c.values), kept, SumMethod.FILTERED),
            )
        )
    return results


@lru_cache(maxsize=256)
def _alpha_tilde_cached(p: int, m: int, index: int) -> complex:
    return alpha_tilde_mult(MultChar(ResidueRing(p, m), index))


def quadratic_closed_form(coeffs, chi: MultChar) -> SumValue:
    """Closed form of sum chi(a0 + a1 x1^2 + ... + an xn^2) for unit a_i:
    chi(a0) legendre(a0^n a1...an)^m alpha~(chi,m)^n."""
    ring = chi.ring
    if ring.m < 2:
        raise ValueError("quadratic closed form needs m >= 2")
    if not is_primitive_mult(chi):
        raise NotPrimitive(f"{chi!r} must be primitive")
    a = [c % ring.modulus for c in coeffs]
    if any(c % ring.p == 0 for c in a):
        raise NonUnit(f"coefficients {coeffs} must all be units mod {ring.p}")
    a0, rest = a[0], a[1:]
    n = len(rest)
    prod = pow(a0, n, ring.p)
    for c in rest:
        prod = prod * c % ring.p
    sign = int(legendre(prod, ring.p)) ** ring.m
    alpha = _alpha_tilde_cached(ring.p, ring.m, chi.index)
    value = chi(a0) * sign * alpha**n
    return SumValue(value, 0, SumMethod.CLOSED_FORM)


def _require_primitive_pair(chi: MultChar, psi: AddChar):
    if chi.ring != psi.ring:
        raise RingMismatch(f"{chi!r} and {psi!r} live in different rings")
    if not is_primitive_mult(chi):
        raise NotPrimitive(f"{chi!r} must be primitive")
    if not is_primitive_add(psi):
        raise NotPrimitive(f"{psi!r} must be primitive")


def fourier_sum(
    f: MultiPoly, chi: MultChar, psi: AddChar, L, budget: int = DEFAULT_BUDGET, workers=None
) -> SumValue:
    """The transform value at L: sum of chi(f(x)) psi(L(x)) over the full grid."""
    _require_primitive_pair(chi, psi)
    pm = chi.ring.modulus
    n = f.nvars
    if len(L) != n:
        raise ValueError(f"linear form has {len(L)} coefficients, f has {n} variables")
    total = pm**n
    _check_budget(total, budget)
    table, psi_table = chi.values, psi.values
    Lc = [int(c) % pm for c in L]

    def part(a, b):
        cols = _chunk_cols(pm, n, a, b)
        fv = f.eval_arrays(cols, pm)
        lx = np.zeros(b - a, dtype=np.int64)
        for c, col in zip(Lc, cols):
            lx = (lx + c * col) % pm
        return complex(np.sum(table[fv] * psi_table[lx])), b - a

    value, count = _reduce_chunks(part, total, worker_count(workers))
    return SumValue(value, count, SumMethod.BRUTE_FORCE)


def hyperplane_sum(
    f: MultiPoly, chi, L, budget: int = DEFAULT_BUDGET, workers=None
) -> SumValue:
    """Sum of chi(f(x)) over the solutions of L(x) = 1 mod p^m.

    Solves for the smallest-index unit coefficient; (p^m)^(n-1) terms."""
    pm, table = _char_of(chi)
    p = chi.ring.p
    n = f.nvars
    Lc = [int(c) % pm for c in L]
    j = next((i for i, c in enumerate(Lc) if c % p != 0), None)
    if j is None:
        raise NoUnitCoefficient(f"no unit coefficient in L={tuple(L)}")
    inv_lj = pow(Lc[j], -1, pm)
    total = pm ** (n - 1)
    _check_budget(total, budget)
    others = [i for i in range(n) if i != j]

    def part(a, b):
        free = _chunk_cols(pm, n - 1, a, b)
        acc = np.zeros(b - a, dtype=np.int64)
        for c, col in zip((Lc[i] for i in others), free):
            acc = (acc + c * col) % pm
        xj = (1 - acc) * inv_lj % pm
        cols = [None] * n
        for i, col in zip(others, free):
            cols[i] = col
        cols[j] = xj
        fv = f.eval_arrays(cols, pm)
        return complex(np.sum(table[fv])), b - a

    value, count = _reduce_chunks(part, total, worker_count(workers))
    return SumValue(value, count, SumMethod.BRUTE_FORCE)


def twisted_gauss_sum(chi: MultChar, psi: AddChar, power: int = 1) -> complex:
    """sum over y mod p^m of chi^power(y) psi(y)."""
    table = chi.power(power).values
    return complex(np.sum(table * psi.values))


@dataclass
class Prop41Result:
    """Factorization of the transform of a homogeneous f at L with unit part."""

    gauss_like: complex        # sum chi^d(y) psi(y)
    hyperplane: complex        # sum of chi(f) over L(x) = 1
    product: SumValue
    min_valuation: int         # k = min_i v(L_i); the transform vanishes for k != 0


def prop41_factorize(
    f: MultiPoly, chi: MultChar, psi: AddChar, L, budget: int = DEFAULT_BUDGET, workers=None
) -> Prop41Result:
    """Split the transform of homogeneous f into a twisted Gauss factor and a
    hyperplane sum; the product equals fourier_sum when k = 0 and the
    transform vanishes when k != 0 (requires p not dividing d)."""
    _require_primitive_pair(chi, psi)
    d = f.is_homogeneous()
    if d is None:
        raise ValueError(f"{f!r} is not homogeneous")
    ring = chi.ring
    if d % ring.p == 0:
        raise DegreeDivisible(f"p={ring.p} divides degree d={d}")
    val = ring.tables.valuation
    k = int(min(val[int(c) % ring.modulus] for c in L))
    gauss_like = twisted_gauss_sum(chi, psi, d)
    if k != 0:
        return Prop41Result(gauss_like, 0j, SumValue(0j, 0, SumMethod.FACTORIZED), k)
    hp = hyperplane_sum(f, chi, L, budget=budget, workers=workers)
    product = SumValue(gauss_like * hp.value, hp.terms_counted, SumMethod.FACTORIZED)
    return Prop41Result(gauss_like, hp.value, product, k)


@dataclass
class ParsevalResult:
    lhs: float      # sum over all L of |S(L)|^2
    rhs: float      # q^(mn) * N1
    n_unit: int     # N1 = #{x : f(x) a unit}

    @property
    def relative_error(self) -> float:
        return abs(self.lhs - self.rhs) / self.rhs if self.rhs else abs(self.lhs)


def parseval_check(
    f: MultiPoly, chi: MultChar, psi: AddChar, budget: int = DEFAULT_BUDGET
) -> ParsevalResult:
    """Compare the L2 mass of the transform against q^(mn) N1 by the full
    double loop over (L, x) pairs."""
    _require_primitive_pair(chi, psi)
    pm = chi.ring.modulus
    p = chi.ring.p
    n = f.nvars
    total = pm**n
    _check_budget(total * total, budget)
    cols = _chunk_cols(pm, n, 0, total)
    fv = f.eval_arrays(cols, pm)
    chi_f = chi.values[fv]
    n_unit = int(np.count_nonzero(fv % p != 0))
    psi_table = psi.values
    lhs = 0.0
    for li in range(total):
        lcoef = [(li // pm ** (n - 1 - j)) % pm for j in range(n)]
        lx = np.zeros(total, dtype=np.int64)
        for c, col in zip(lcoef, cols):
            lx = (lx + c * col) % pm
        s = np.sum(chi_f * psi_table[lx])
        lhs += abs(s) ** 2
    rhs = float(pm**n) * n_unit
    return ParsevalResult(lhs=float(lhs), rhs=rhs, n_unit=n_unit)


class CompositeChar:
    """Characters of Z/N assembled from primitive prime-power components.

    The global multiplicative and additive characters are defined pointwise
    as the product of the local values at a mod p^m(p)."""

    def __init__(self, mult_parts, add_parts):
        if not mult_parts:
            raise ValueError("at least one local component required")
        rings = [c.ring for c in mult_parts]
        if sorted(r.p for r in rings) != sorted({r.p for r in rings}):
            raise ValueError("duplicate primes in local components")
        if {(c.ring.p, c.ring.m) for c in add_parts} != {(r.p, r.m) for r in rings}:
            raise ValueError("additive and multiplicative components must share moduli")
        for c in mult_parts:
            if not is_primitive_mult(c):
                raise NotPrimitive(f"{c!r} must be primitive")
        for c in add_parts:
            if not is_primitive_add(c):
                raise NotPrimitive(f"{c!r} must be primitive")
        self.mult = sorted(mult_parts, key=lambda c: c.ring.p)
        self.add = sorted(add_parts, key=lambda c: c.ring.p)
        self.modulus = math.prod(c.ring.modulus for c in self.mult)

    @classmethod
    def standard(cls, N: int, chi_indices=None, psi_twists=None) -> "CompositeChar":
        """Local components for each p | N: index chi_indices[p] (default 1)
        and twist psi_twists[p] (default 1)."""
        if N <= 1:
            raise ValueError(f"composite modulus must exceed 1, got {N}")
        if N % 2 == 0:
            raise EvenModulus(f"composite modulus {N} must be odd")
        chi_indices = chi_indices or {}
        psi_twists = psi_twists or {}
        mult, add = [], []
        rem = N
        q = 3
        while rem > 1:
            if rem % q == 0:
                mp = 0
                while rem % q == 0:
                    rem //= q
                    mp += 1
                ring = ResidueRing(q, mp)
                mult.append(MultChar(ring, chi_indices.get(q, 1)))
                add.append(AddChar(ring, psi_twists.get(q, 1)))
            q += 2
        return cls(mult, add)

    def chi_table(self) -> np.ndarray:
        """Global multiplicative values on [0, N)."""
        a = np.arange(self.modulus, dtype=np.int64)
        t = np.ones(self.modulus, dtype=np.complex128)
        for c in self.mult:
            t = t * c.values[a % c.ring.modulus]
        return t

    def psi_table(self) -> np.ndarray:
        a = np.arange(self.modulus, dtype=np.int64)
        t = np.ones(self.modulus, dtype=np.complex128)
        for c in self.add:
            t = t * c.values[a % c.ring.modulus]
        return t


def crt_composite_sum(
    f: MultiPoly, gchar: CompositeChar, L, budget: int = DEFAULT_BUDGET, workers=None
):
    """Direct sum of chi(f(x)) psi(L(x)) over (Z/N)^n against the product of
    its prime-power components; the two must agree exactly (CRT identity)."""
    N = gchar.modulus
    n = f.nvars
    total = N**n
    _check_budget(total, budget)
    chi_t, psi_t = gchar.chi_table(), gchar.psi_table()
    Lc = [int(c) % N for c in L]

    def part(a, b):
        cols = _chunk_cols(N, n, a, b)
        fv = f.eval_arrays(cols, N)
        lx = np.zeros(b - a, dtype=np.int64)
        for c, col in zip(Lc, cols):
            lx = (lx + c * col) % N
        return complex(np.sum(chi_t[fv] * psi_t[lx])), b - a

    value, count = _reduce_chunks(part, total, worker_count(workers))
    direct = SumValue(value, count, SumMethod.BRUTE_FORCE)

    prod = 1 + 0j
    terms = 0
    for chi_p, psi_p in zip(gchar.mult, gchar.add):
        local = fourier_sum(f, chi_p, psi_p, L, budget=budget, workers=workers)
        prod *= local.value
        terms += local.terms_counted
    product = SumValue(prod, terms, SumMethod.CRT_PRODUCT)
    return direct, product
