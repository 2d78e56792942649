import random

import numpy as np
import pytest

from phvs.characters import AddChar, MultChar, alpha_tilde_mult, primitive_mult_indices
from phvs.charsums import (
    CompositeChar,
    SumMethod,
    brute_sum,
    crt_composite_sum,
    filtered_sum,
    filtered_threshold,
    fourier_sum,
    hyperplane_sum,
    parseval_check,
    prop41_factorize,
    quadratic_closed_form,
    twisted_gauss_sum,
)
from phvs.errors import (
    BudgetExceeded,
    DegreeDivisible,
    EvenModulus,
    NonUnit,
    NoUnitCoefficient,
    NotPrimitive,
)
from phvs.multipoly import MultiPoly, parse_poly
from phvs.residue import ResidueRing


R52 = ResidueRing(5, 2)


def test_brute_sum_examples():
    chi = MultChar(R52, 1)  # chi^2 nontrivial
    s = brute_sum(parse_poly("x1^2"), chi)
    assert abs(s.value) <= 1e-9 * 25
    assert s.terms_counted == 25

    for k in primitive_mult_indices(R52):
        s = brute_sum(parse_poly("1 + x1^2"), MultChar(R52, k))
        assert abs(s.value - 5) <= 1e-9 * 25

    c = MultiPoly.constant(1, 3)
    s = brute_sum(c, MultChar(R52, 1))
    assert abs(s.value - 25 * MultChar(R52, 1)(3)) <= 1e-12


def test_brute_sum_budget():
    with pytest.raises(BudgetExceeded):
        brute_sum(parse_poly("x1*x2*x3*x4"), MultChar(R52, 1), budget=10**5)


def test_filtered_threshold_reading():
    assert [filtered_threshold(m) for m in (2, 3, 4, 5)] == [1, 1, 2, 2]


def test_filtered_sum_examples():
    chi = MultChar(R52, 1)
    b = brute_sum(parse_poly("1 + x1^2"), chi)
    f = filtered_sum(parse_poly("1 + x1^2"), chi)
    assert abs(f.value - 5) <= 1e-9 * 25
    assert abs(f.value - b.value) <= 1e-12
    assert f.method is SumMethod.FILTERED

    ring = ResidueRing(5, 3)
    for k in primitive_mult_indices(ring)[:4]:
        chi = MultChar(ring, k)
        poly = parse_poly("x1*x2 + 1")
        assert abs(filtered_sum(poly, chi).value - brute_sum(poly, chi).value) <= 1e-9 * 125

    # unit gradient everywhere: the filtered set is empty and both sums vanish
    s = filtered_sum(parse_poly("x1"), MultChar(R52, 1))
    assert s.terms_counted == 0 and s.value == 0
    assert abs(brute_sum(parse_poly("x1"), MultChar(R52, 1)).value) <= 1e-9 * 25


def test_filtered_sum_rejects_non_primitive():
    with pytest.raises(NotPrimitive):
        filtered_sum(parse_poly("x1"), MultChar(R52, 5))


def _random_corpus(rng, count, max_nvars=3, max_degree=4):
    out = []
    for _ in range(count):
        n = rng.randrange(1, max_nvars + 1)
        terms = {}
        for _ in range(rng.randrange(1, 6)):
            while True:
                e = tuple(rng.randrange(0, max_degree + 1) for _ in range(n))
                if sum(e) <= max_degree:
                    break
            c = rng.randrange(-9, 10)
            if c:
                terms[e] = terms.get(e, 0) + c
        out.append(MultiPoly(n, terms))
    return out


def test_critical_point_filtering_matches_brute_force_small_corpus():
    rng = random.Random(11)
    corpus = _random_corpus(rng, 8)
    for p, m in [(5, 2), (7, 2), (5, 3)]:
        ring = ResidueRing(p, m)
        tol = lambda n: 1e-9 * p ** (m * n / 2)
        k = primitive_mult_indices(ring)[0]
        chi, psi = MultChar(ring, k), AddChar(ring, 1)
        for f in corpus:
            assert abs(filtered_sum(f, chi).value - brute_sum(f, chi).value) <= tol(f.nvars)
            # additive variant of the same identity
            assert abs(filtered_sum(f, psi).value - brute_sum(f, psi).value) <= tol(f.nvars)


def test_quadratic_closed_form_examples():
    chi = MultChar(R52, 1)
    assert abs(quadratic_closed_form([1, 1], chi).value - 5) <= 1e-9 * 25
    assert abs(quadratic_closed_form([1, 1, 1], chi).value - 25) <= 1e-9 * 25

    ring = ResidueRing(5, 3)
    chi3 = MultChar(ring, 1)
    expected = -alpha_tilde_mult(chi3)
    assert abs(quadratic_closed_form([1, 2], chi3).value - expected) <= 1e-9 * 125
    bf = brute_sum(parse_poly("1 + 2*x1^2"), chi3)
    assert abs(bf.value - expected) <= 1e-9 * 125

    with pytest.raises(NonUnit):
        quadratic_closed_form([1, 5], chi)
    with pytest.raises(NotPrimitive):
        quadratic_closed_form([1, 1], MultChar(R52, 5))


def test_quadratic_closed_form_random_tuples():
    rng = random.Random(12)
    for p, m in [(5, 2), (7, 2), (13, 2), (5, 3)]:
        ring = ResidueRing(p, m)
        units = ring.units()
        for k in primitive_mult_indices(ring)[:3]:
            chi = MultChar(ring, k)
            for _ in range(5):
                n = rng.randrange(1, 3)
                a = [rng.choice(units) for _ in range(n + 1)]
                f = MultiPoly.constant(n, a[0])
                for i in range(n):
                    f = f + a[i + 1] * MultiPoly.variable(n, i) ** 2
                cf = quadratic_closed_form(a, chi)
                bf = brute_sum(f, chi)
                assert abs(cf.value - bf.value) <= 1e-9 * p ** (m * n / 2)


def test_fourier_sum_examples():
    chi, psi = MultChar(R52, 1), AddChar(R52, 1)
    f = parse_poly("x1*x2")
    assert abs(fourier_sum(f, chi, psi, (0, 1)).value) <= 1e-9 * 25
    assert abs(abs(fourier_sum(f, chi, psi, (1, 1)).value) - 25) <= 1e-6 * 25
    assert abs(fourier_sum(f, chi, psi, (5, 5)).value) <= 1e-9 * 25


def test_twist_linearity():
    # S(L) under psi_t equals S(tL) under psi_1, exactly
    f = parse_poly("x1*x2 + x2^2")
    chi = MultChar(R52, 3)
    for t in (2, 7, 11):
        for L in [(1, 2), (3, 4)]:
            lhs = fourier_sum(f, chi, AddChar(R52, t), L).value
            rhs = fourier_sum(f, chi, AddChar(R52, 1), tuple(t * c for c in L)).value
            assert lhs == rhs  # identical enumeration and tables: bitwise equal


def test_hyperplane_sum_examples():
    chi = MultChar(R52, 1)
    f = parse_poly("x1*x2")
    assert abs(hyperplane_sum(f, chi, (1, 0)).value) <= 1e-9 * 25
    assert hyperplane_sum(parse_poly("x1"), chi, (1,)).value == pytest.approx(1)
    with pytest.raises(NoUnitCoefficient):
        hyperplane_sum(f, chi, (5, 10))


def test_prop41_factorization():
    chi, psi = MultChar(R52, 1), AddChar(R52, 1)
    f = parse_poly("x1*x2")
    r = prop41_factorize(f, chi, psi, (1, 1))
    direct = fourier_sum(f, chi, psi, (1, 1))
    assert abs(r.product.value - direct.value) <= 1e-9 * 25

    r0 = prop41_factorize(f, chi, psi, (5, 10))
    assert r0.min_valuation == 1 and r0.product.value == 0

    ring7 = ResidueRing(7, 2)
    chi7, psi7 = MultChar(ring7, 1), AddChar(ring7, 1)
    r7 = prop41_factorize(parse_poly("x1^2"), chi7, psi7, (1,))
    assert abs(abs(r7.gauss_like) - 7) <= 1e-9 * 7
    assert abs(r7.product.value - fourier_sum(parse_poly("x1^2"), chi7, psi7, (1,)).value) <= 1e-9 * 7

    with pytest.raises(DegreeDivisible):
        prop41_factorize(parse_poly("x1^5"), chi, psi, (1,))
    with pytest.raises(ValueError):
        prop41_factorize(parse_poly("1 + x1^2"), chi, psi, (1,))


def test_prop41_randomized_against_fourier():
    rng = random.Random(13)
    homogeneous = [parse_poly("x1*x2"), parse_poly("x1^2 + x2^2"), parse_poly("x1^3", 2)]
    for p, m in [(5, 2), (7, 2)]:
        ring = ResidueRing(p, m)
        for k in primitive_mult_indices(ring)[:2]:
            chi, psi = MultChar(ring, k), AddChar(ring, 1)
            for f in homogeneous:
                if f.is_homogeneous() % p == 0:
                    continue
                for _ in range(5):
                    L = (rng.randrange(ring.modulus), rng.randrange(ring.modulus))
                    r = prop41_factorize(f, chi, psi, L)
                    direct = fourier_sum(f, chi, psi, L)
                    assert abs(r.product.value - direct.value) <= 1e-9 * p**m


def test_parseval_examples():
    chi, psi = MultChar(R52, 1), AddChar(R52, 1)
    r = parseval_check(parse_poly("x1*x2"), chi, psi)
    assert r.n_unit == 400
    assert r.rhs == 5**4 * 400
    assert r.relative_error <= 1e-6

    r1 = parseval_check(parse_poly("x1"), chi, psi)
    assert r1.n_unit == 20 and r1.rhs == 25 * 20
    assert r1.relative_error <= 1e-6

    r0 = parseval_check(parse_poly("5*x1"), chi, psi)
    assert r0.n_unit == 0 and r0.lhs == 0


def test_crt_composite_sum():
    g = CompositeChar.standard(15)
    direct, product = crt_composite_sum(parse_poly("x1"), g, (1,))
    assert abs(direct.value - product.value) <= 1e-10 * 15

    g45 = CompositeChar.standard(45)
    direct, product = crt_composite_sum(parse_poly("x1^2"), g45, (1,))
    assert abs(direct.value - product.value) <= 1e-10 * 45

    g25 = CompositeChar.standard(25)  # single prime power: product is the direct sum
    direct, product = crt_composite_sum(parse_poly("x1"), g25, (2,))
    assert abs(direct.value - product.value) <= 1e-12

    with pytest.raises(EvenModulus):
        CompositeChar.standard(30)
    with pytest.raises(NotPrimitive):
        CompositeChar(
            [MultChar(ResidueRing(5, 2), 5)], [AddChar(ResidueRing(5, 2), 1)]
        )


def test_composite_char_is_multiplicative_and_additive():
    g = CompositeChar.standard(45)
    chi_t, psi_t = g.chi_table(), g.psi_table()
    rng = random.Random(14)
    units = [a for a in range(45) if a % 3 and a % 5]
    for _ in range(200):
        x, y = rng.choice(units), rng.choice(units)
        assert abs(chi_t[x * y % 45] - chi_t[x] * chi_t[y]) <= 1e-12
        a, b = rng.randrange(45), rng.randrange(45)
        assert abs(psi_t[(a + b) % 45] - psi_t[a] * psi_t[b]) <= 1e-12


def test_deterministic_reduction_across_worker_counts():
    f = parse_poly("x1*x2 + 3*x1^2 - x2^3")
    ring = ResidueRing(7, 3)  # 343^2 points: several chunks
    chi, psi = MultChar(ring, 1), AddChar(ring, 1)
    base = fourier_sum(f, chi, psi, (1, 2), workers=1).value
    for w in (2, 4, 8):
        assert fourier_sum(f, chi, psi, (1, 2), workers=w).value == base
