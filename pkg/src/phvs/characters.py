"""Multiplicative and additive character groups of Z/p^m.

Characters are identified by (generator, index): the generator is pinned to
the smallest one so indices are stable across runs.  Values come from
precomputed root-of-unity tables (one trig call per root), never repeated
trig evaluation; discrete-log tables of size p^m are built once per ring.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NotPrimitive, RingMismatch
from .residue import ResidueElem, ResidueRing


def _prime_factors(n: int) -> list:
    out = []
    f = 2
    while f * f <= n:
        if n % f == 0:
            out.append(f)
            while n % f == 0:
                n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def find_generator(ring: ResidueRing) -> int:
    """Smallest generator of the cyclic group (Z/p^m)^x."""
    return _find_generator(ring.p, ring.m)


@lru_cache(maxsize=None)
def _find_generator(p: int, m: int) -> int:
    pm = p**m
    phi = p ** (m - 1) * (p - 1)
    checks = [phi // ell for ell in _prime_factors(phi)]
    for g in range(2, pm):
        if g % p == 0:
            continue
        if all(pow(g, c, pm) != 1 for c in checks):
            return g
    raise ArithmeticError(f"no generator found for p={p}, m={m}")  # unreachable for odd p


@dataclass(frozen=True)
class GroupData:
    """Discrete-log and root-of-unity tables for one ring."""

    generator: int
    order: int           # phi = p^(m-1)(p-1)
    log: np.ndarray      # int64 size p^m, -1 on non-units
    roots_unit: np.ndarray  # complex128, the phi-th roots of unity
    roots_add: np.ndarray   # complex128, the p^m-th roots of unity


@lru_cache(maxsize=None)
def _group_data(p: int, m: int) -> GroupData:
    pm = p**m
    phi = p ** (m - 1) * (p - 1)
    g = _find_generator(p, m)
    log = np.full(pm, -1, dtype=np.int64)
    acc = 1
    for e in range(phi):
        log[acc] = e
        acc = acc * g % pm
    roots_unit = np.exp(2j * np.pi * np.arange(phi) / phi)
    roots_add = np.exp(2j * np.pi * np.arange(pm) / pm)
    return GroupData(generator=g, order=phi, log=log, roots_unit=roots_unit, roots_add=roots_add)


def group_data(ring: ResidueRing) -> GroupData:
    return _group_data(ring.p, ring.m)


class MultChar:
    """chi(x) = exp(2*pi*i * k * log_g(x) / phi) on units, 0 elsewhere."""

    __slots__ = ("ring", "index", "_values")

    def __init__(self, ring: ResidueRing, index: int):
        gd = group_data(ring)
        self.ring = ring
        self.index = index % gd.order
        self._values = None

    @property
    def generator(self) -> int:
        return group_data(self.ring).generator

    @property
    def order_of_group(self) -> int:
        return group_data(self.ring).order

    @property
    def values(self) -> np.ndarray:
        """Value table indexed by canonical representative (0 on non-units)."""
        if self._values is None:
            gd = group_data(self.ring)
            t = np.zeros(self.ring.modulus, dtype=np.complex128)
            units = gd.log >= 0
            t[units] = gd.roots_unit[(self.index * gd.log[units]) % gd.order]
            self._values = t
        return self._values

    def __call__(self, x) -> complex:
        v = x.value if isinstance(x, ResidueElem) else x % self.ring.modulus
        return complex(self.values[v])

    def power(self, d: int) -> "MultChar":
        return MultChar(self.ring, self.index * d)

    def is_trivial(self) -> bool:
        return self.index == 0

    def __repr__(self):
        return f"MultChar(p={self.ring.p}, m={self.ring.m}, k={self.index})"


class AddChar:
    """psi(x) = exp(2*pi*i * t * x / p^m)."""

    __slots__ = ("ring", "twist", "_values")

    def __init__(self, ring: ResidueRing, twist: int):
        self.ring = ring
        self.twist = twist % ring.modulus
        self._values = None

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            gd = group_data(self.ring)
            idx = np.arange(self.ring.modulus, dtype=np.int64)
            self._values = gd.roots_add[(self.twist * idx) % self.ring.modulus]
        return self._values

    def __call__(self, x) -> complex:
        v = x.value if isinstance(x, ResidueElem) else x % self.ring.modulus
        return complex(self.values[v])

    def __repr__(self):
        return f"AddChar(p={self.ring.p}, m={self.ring.m}, t={self.twist})"


def is_primitive_mult(chi: MultChar) -> bool:
    """True iff chi is not induced by any character mod p^n with n < m.

    Equivalent index test on the cyclic group: k != 0 for m = 1,
    p does not divide k for m >= 2.
    """
    if chi.ring.m == 1:
        return chi.index != 0
    return chi.index % chi.ring.p != 0


def is_primitive_add(psi: AddChar) -> bool:
    return psi.twist % psi.ring.p != 0


def primitive_mult_indices(ring: ResidueRing) -> list:
    """Indices of all primitive multiplicative characters, in increasing order."""
    phi = group_data(ring).order
    if ring.m == 1:
        return list(range(1, phi))
    return [k for k in range(phi) if k % ring.p != 0]


def legendre_char(p: int) -> MultChar:
    """The Legendre symbol mod p as a multiplicative character."""
    return MultChar(ResidueRing(p, 1), (p - 1) // 2)


def gauss_sum(chi: MultChar, psi: AddChar) -> complex:
    """Classical Gauss sum over Z/p: sum of chi(x) psi(x)."""
    if chi.ring.m != 1 or psi.ring.m != 1 or chi.ring.p != psi.ring.p:
        raise RingMismatch("gauss_sum needs both characters mod the same prime p")
    return complex(np.sum(chi.values * psi.values))


def derived_psi_prime(chi: MultChar) -> AddChar:
    """The additive character y -> chi(1 + p^(m-1) y) on Z/p, for primitive chi, m >= 2.

    Additivity holds because (1 + p^(m-1) a)(1 + p^(m-1) b) = 1 + p^(m-1)(a+b)
    mod p^m; the twist is extracted exactly from the discrete log.
    """
    ring = chi.ring
    if ring.m < 2:
        raise ValueError("derived_psi_prime needs m >= 2")
    if not is_primitive_mult(chi):
        raise NotPrimitive(f"{chi!r} is induced mod p^{ring.m - 1}")
    gd = group_data(ring)
    ell = int(gd.log[(1 + ring.p ** (ring.m - 1)) % ring.modulus])
    step = gd.order // ring.p
    assert ell % step == 0, "1 + p^(m-1) must have order p"
    t_prime = (chi.index * (ell // step)) % ring.p
    assert t_prime != 0  # primitive chi is nontrivial on 1 + p^(m-1) Z
    return AddChar(ResidueRing(ring.p, 1), t_prime)


def alpha_tilde_closed(chi: MultChar) -> complex:
    """Closed form of the quadratic constant: q^(m/2) for even m,
    q^((m-1)/2) G(legendre, psi') for odd m."""
    p, m = chi.ring.p, chi.ring.m
    if m < 2:
        raise ValueError("alpha_tilde is defined for m >= 2")
    if not is_primitive_mult(chi):
        raise NotPrimitive(f"{chi!r} must be primitive")
    if m % 2 == 0:
        return complex(p ** (m // 2))
    return p ** ((m - 1) // 2) * gauss_sum(legendre_char(p), derived_psi_prime(chi))


def alpha_tilde_mult(chi: MultChar) -> complex:
    """Brute-force sum of chi(1 + x^2) over x mod p^m, checked against the closed form."""
    p, m = chi.ring.p, chi.ring.m
    if m < 2:
        raise ValueError("alpha_tilde is defined for m >= 2")
    if not is_primitive_mult(chi):
        raise NotPrimitive(f"{chi!r} must be primitive")
    pm = chi.ring.modulus
    x = np.arange(pm, dtype=np.int64)
    value = complex(np.sum(chi.values[(1 + x * x) % pm]))
    closed = alpha_tilde_closed(chi)
    assert abs(value - closed) <= 1e-9 * p ** (m / 2), (
        f"quadratic constant mismatch for {chi!r}: brute {value} vs closed {closed}"
    )
    return value


def alpha_tilde_add(psi: AddChar) -> complex:
    """Brute-force sum of psi(x^2) over x mod p^m."""
    if psi.ring.m < 2:
        raise ValueError("alpha_tilde is defined for m >= 2")
    if not is_primitive_add(psi):
        raise NotPrimitive(f"{psi!r} must be primitive")
    pm = psi.ring.modulus
    x = np.arange(pm, dtype=np.int64)
    return complex(np.sum(psi.values[(x * x) % pm]))


def alpha_factor(chi: MultChar) -> complex:
    """The unit-modulus constant multiplying each extra dimension of a closed form:
    1 for even m, G(legendre, psi')/sqrt(q) for odd m.

    The value is +-1 for even m and for p = 1 mod 4; for p = 3 mod 4 and odd m
    the Gauss sum is purely imaginary, so the value is +-i.  Asserted to be a
    fourth root of unity within 1e-10; anything else aborts with a diagnostic.
    """
    p, m = chi.ring.p, chi.ring.m
    if m < 2:
        raise ValueError("alpha_factor is defined for m >= 2")
    if not is_primitive_mult(chi):
        raise NotPrimitive(f"{chi!r} must be primitive")
    if m % 2 == 0:
        return 1.0 + 0.0j
    value = gauss_sum(legendre_char(p), derived_psi_prime(chi)) / math.sqrt(p)
    assert abs(abs(value) - 1.0) <= 1e-10, f"|alpha| != 1 for {chi!r}: {value}"
    assert abs(value**4 - 1.0) <= 1e-10, f"alpha not a 4th root of unity for {chi!r}: {value}"
    return value
