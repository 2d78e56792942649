"""Exact arithmetic in Z/p^m for odd primes p.

Valuations, unit inverses, Legendre symbols, Hensel square roots and
congruence diagonalization of symmetric matrices over F_p.  Desk-scale
moduli only: ring construction rejects p^m > 2^31.
"""

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np

from .errors import NonUnit, NotASquare, RingMismatch

MAX_MODULUS = 2**31


class SquareClass(IntEnum):
    """Legendre class of a residue mod p: +1 square unit, -1 nonsquare, 0 divisible by p."""

    SQUARE = 1
    NONSQUARE = -1
    ZERO = 0


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    f = 2
    while f * f <= n:
        if n % f == 0:
            return False
        f += 1
    return True


class ResidueRing:
    """The ring Z/p^m with p an odd prime and m >= 1."""

    __slots__ = ("p", "m", "modulus", "_tables")

    def __init__(self, p: int, m: int):
        if not is_prime(p):
            raise ValueError(f"p={p} is not prime")
        if p == 2:
            raise ValueError("p=2 is not supported (odd residue characteristic required)")
        if m < 1:
            raise ValueError(f"m={m} must be >= 1")
        modulus = p**m
        if modulus > MAX_MODULUS:
            raise ValueError(f"p^m = {modulus} exceeds the supported modulus {MAX_MODULUS}")
        self.p = p
        self.m = m
        self.modulus = modulus
        self._tables = None

    def __eq__(self, other):
        return isinstance(other, ResidueRing) and (self.p, self.m) == (other.p, other.m)

    def __hash__(self):
        return hash((self.p, self.m))

    def __repr__(self):
        return f"ResidueRing(p={self.p}, m={self.m})"

    def element(self, value: int) -> "ResidueElem":
        return ResidueElem(value, self)

    @property
    def zero(self) -> "ResidueElem":
        return ResidueElem(0, self)

    @property
    def one(self) -> "ResidueElem":
        return ResidueElem(1, self)

    def units(self):
        """All unit representatives in [0, p^m)."""
        return [v for v in range(self.modulus) if v % self.p != 0]

    # -- vectorized lookup tables (built once, shared by the sum engines) --

    @property
    def tables(self) -> "RingTables":
        if self._tables is None:
            self._tables = _build_tables(self.p, self.m)
        return self._tables


@dataclass(frozen=True)
class RingTables:
    """Per-ring numpy lookup tables indexed by canonical representative."""

    unit_mask: np.ndarray  # bool, size p^m
    valuation: np.ndarray  # int64, size p^m; valuation[0] = m (the ">= m" sentinel)
    inverse: np.ndarray    # int64, size p^m; 0 on non-units
    legendre: np.ndarray   # int64, size p; values in {+1,-1,0}


@lru_cache(maxsize=None)
def _build_tables(p: int, m: int) -> RingTables:
    pm = p**m
    idx = np.arange(pm, dtype=np.int64)
    unit_mask = idx % p != 0
    val = np.zeros(pm, dtype=np.int64)
    for k in range(1, m + 1):
        val[idx % p**k == 0] = k
    val[0] = m
    inv = np.zeros(pm, dtype=np.int64)
    # Fermat-Euler on the whole unit block at once
    phi = p ** (m - 1) * (p - 1)
    acc = np.ones(pm, dtype=np.int64)
    base = idx.copy()
    e = phi - 1
    while e:
        if e & 1:
            acc = acc * base % pm
        base = base * base % pm
        e >>= 1
    inv[unit_mask] = acc[unit_mask]
    leg = np.zeros(p, dtype=np.int64)
    for a in range(1, p):
        leg[a] = 1 if pow(a, (p - 1) // 2, p) == 1 else -1
    return RingTables(unit_mask=unit_mask, valuation=val, inverse=inv, legendre=leg)


class ResidueElem:
    """An element of Z/p^m held as its canonical representative in [0, p^m)."""

    __slots__ = ("value", "ring")

    def __init__(self, value: int, ring: ResidueRing):
        self.value = value % ring.modulus
        self.ring = ring

    def _coerce(self, other) -> "ResidueElem":
        if isinstance(other, ResidueElem):
            if other.ring != self.ring:
                raise RingMismatch(f"{self.ring} vs {other.ring}")
            return other
        if isinstance(other, int):
            return ResidueElem(other, self.ring)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return ResidueElem(self.value + other.value, self.ring)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return ResidueElem(self.value - other.value, self.ring)

    def __rsub__(self, other):
        return -self + other

    def __neg__(self):
        return ResidueElem(-self.value, self.ring)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return ResidueElem(self.value * other.value, self.ring)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            return inverse(self) ** (-e)
        return ResidueElem(pow(self.value, e, self.ring.modulus), self.ring)

    def __eq__(self, other):
        if isinstance(other, int):
            return self.value == other % self.ring.modulus
        return (
            isinstance(other, ResidueElem)
            and self.ring == other.ring
            and self.value == other.value
        )

    def __hash__(self):
        return hash((self.value, self.ring.p, self.ring.m))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"{self.value} (mod {self.ring.p}^{self.ring.m})"

    def is_unit(self) -> bool:
        return self.value % self.ring.p != 0


def valuation(x: ResidueElem) -> int:
    """Largest k <= m with p^k | x; returns m (the ">= m" sentinel) for x = 0."""
    v, p, m = x.value, x.ring.p, x.ring.m
    if v == 0:
        return m
    k = 0
    while v % p == 0:
        v //= p
        k += 1
    return k


def inverse(x: ResidueElem) -> ResidueElem:
    """Multiplicative inverse mod p^m; raises NonUnit if p | x."""
    if not x.is_unit():
        raise NonUnit(f"{x!r} has positive valuation")
    return ResidueElem(pow(x.value, -1, x.ring.modulus), x.ring)


def legendre(a: int, p: int) -> SquareClass:
    """Legendre symbol of a mod p for odd prime p."""
    a %= p
    if a == 0:
        return SquareClass.ZERO
    return SquareClass.SQUARE if pow(a, (p - 1) // 2, p) == 1 else SquareClass.NONSQUARE


def hensel_sqrt(x: ResidueElem, base_root: int) -> ResidueElem:
    """The unique r with r^2 = x mod p^m and r = base_root mod p.

    Requires x to be a unit and base_root a square root of x mod p;
    Newton doubles the precision of the congruence each step.
    """
    ring = x.ring
    p, pm = ring.p, ring.modulus
    if not x.is_unit():
        raise NotASquare(f"{x!r} is not a unit")
    if (base_root * base_root - x.value) % p != 0:
        raise NotASquare(f"{base_root} is not a square root of {x.value} mod {p}")
    r = base_root % pm
    inv2 = pow(2, -1, pm)
    steps = 0
    while (r * r - x.value) % pm != 0:
        r = (r + x.value * pow(r, -1, pm)) * inv2 % pm
        steps += 1
        if steps > ring.m + 2:  # quadratic convergence makes this unreachable
            raise NotASquare(f"no lift of {base_root} squares to {x.value} mod {pm}")
    return ResidueElem(r, ring)


@dataclass
class Diagonalization:
    """Congruent diagonal form of a symmetric matrix over F_p.

    transform X satisfies X^t A X = diag(entries..., 0, ..., 0) mod p;
    disc is the square class of the product of the nonzero entries
    (+1 for the empty product).
    """

    entries: list
    transform: np.ndarray
    disc: SquareClass


def diagonalize_symmetric(A, p: int) -> Diagonalization:
    """Diagonalize a symmetric matrix over F_p by congruence (p odd)."""
    M = np.asarray(A, dtype=np.int64) % p
    n = M.shape[0]
    if M.shape != (n, n) or not np.array_equal(M, M.T):
        raise ValueError("matrix must be symmetric")
    X = np.eye(n, dtype=np.int64)

    def col_op(dst, src, c):
        # x_dst -> x_dst + c*x_src as a congruence: add c*col/row src to dst
        M[:, dst] = (M[:, dst] + c * M[:, src]) % p
        M[dst, :] = (M[dst, :] + c * M[src, :]) % p
        X[:, dst] = (X[:, dst] + c * X[:, src]) % p

    def swap(i, j):
        M[:, [i, j]] = M[:, [j, i]]
        M[[i, j], :] = M[[j, i], :]
        X[:, [i, j]] = X[:, [j, i]]

    for r in range(n):
        if M[r, r] % p == 0:
            pivot = next((i for i in range(r + 1, n) if M[i, i] % p != 0), None)
            if pivot is not None:
                swap(r, pivot)
            else:
                off = next(
                    ((i, j) for i in range(r, n) for j in range(i + 1, n) if M[i, j] % p != 0),
                    None,
                )
                if off is None:
                    break  # remaining block is zero
                i, j = off
                col_op(i, j, 1)  # makes M[i,i] = 2*M[i,j] != 0 since p is odd
                if i != r:
                    swap(r, i)
        inv_piv = pow(int(M[r, r]), -1, p)
        for i in range(r + 1, n):
            c = M[i, r] * inv_piv % p
            if c:
                col_op(i, r, (-c) % p)

    diag = [int(M[i, i]) for i in range(n)]
    entries = [d for d in diag if d != 0]
    assert np.count_nonzero(M - np.diag(diag)) == 0, "diagonalization failed"
    prod = 1
    for d in entries:
        prod = prod * d % p
    disc = legendre(prod, p) if entries else SquareClass.SQUARE
    return Diagonalization(entries=entries, transform=X, disc=disc)
