"""Acceptance criteria for the verification engine.

One test per criterion; each prints a pass/fail line (visible with -s or -rA).
Criterion 1 is exhaustive in both characters and linear forms except for the
hyperbola at (p, m) = (13, 3), where the full product is 1872 characters x
4.8M forms (about 10^10 pairs, hours of dense transforms): that single
configuration is covered by every character against 40 seeded forms plus 8
seeded characters against all forms.
"""

import json
import math
import os
import random
from dataclasses import dataclass, field

import numpy as np
import pytest

from phvs.catalogue import builtin_catalogue
from phvs.characters import (
    AddChar,
    MultChar,
    alpha_factor,
    alpha_tilde_closed,
    alpha_tilde_mult,
    group_data,
    primitive_mult_indices,
)
from phvs.charsums import (
    CompositeChar,
    brute_and_filtered,
    brute_sum,
    crt_composite_sum,
    fourier_sum,
    parseval_check,
    prop41_factorize,
    quadratic_closed_form,
    twisted_gauss_sum,
)
from phvs.morse import Hyperplane, chart_function, find_chart_critical_residues, morse_normal_form
from phvs.multipoly import MultiPoly, parse_poly
from phvs.residue import ResidueRing, legendre
from phvs.verify import (
    _full_L_grid,
    brute_transform_rows,
    closed_parts,
    closed_values_for_chi,
    pipeline_trace,
    report_to_dict,
    sample_L,
    verify_instance,
)

CAT = builtin_catalogue()
TOL = 1e-9


def _line(text):
    print(text)


@dataclass
class SweepStats:
    pairs: int = 0
    vanish_pairs: int = 0
    worst_unit_err: float = 0.0
    worst_vanish_err: float = 0.0
    worst_phase: float = 0.0
    worst_mag: float = 0.0
    singular: int = 0


def _sweep_stats(inst, ring, chi_indices, Lmat, all_L, psi_twist=1):
    """Exact brute-force values against the closed form over a (chi, L) block."""
    psi = AddChar(ring, psi_twist)
    parts = closed_parts(inst, ring, Lmat)
    p, m, n = ring.p, ring.m, inst.n
    scale = float(p) ** (m * n / 2)
    st = SweepStats(singular=int(parts.singular.sum()))
    unit = ~parts.vanish & ~parts.singular
    has_unit, has_vanish = bool(unit.any()), bool(parts.vanish.any())
    for k, bvals in brute_transform_rows(
        inst, ring, chi_indices, psi_twist, Lmat, all_L, budget=None
    ):
        chi = MultChar(ring, k)
        closed = closed_values_for_chi(inst, chi, psi, parts)
        if has_unit:
            err = np.abs(bvals[unit] - closed[unit])
            st.worst_unit_err = max(st.worst_unit_err, float(err.max()))
            mags = np.abs(bvals[unit])
            st.worst_mag = max(st.worst_mag, float(np.max(np.abs(mags - scale)) / scale))
            gauss_norm = twisted_gauss_sum(chi, psi, inst.d) / float(p) ** (m / 2)
            alpha = alpha_factor(chi)
            resid = bvals[unit] / (scale * gauss_norm * chi.values[parts.chi_arg[unit]])
            target = alpha ** (n - 1) * parts.kappa[unit]
            st.worst_phase = max(
                st.worst_phase, float(np.abs(np.angle(resid * np.conj(target))).max())
            )
        if has_vanish:
            st.worst_vanish_err = max(
                st.worst_vanish_err, float(np.abs(bvals[parts.vanish]).max())
            )
        st.pairs += int(unit.sum())
        st.vanish_pairs += int(parts.vanish.sum())
    return st


# -- criterion 1: exhaustive closed-form sweep for the small instances --

C1_GRID = [
    (name, p, m) for name in ("linear", "square", "hyperbola") for p in (5, 7, 13) for m in (2, 3)
]


@pytest.fixture(scope="module")
def c1_stats():
    out = {}
    for name, p, m in C1_GRID:
        inst = CAT[name]
        ring = ResidueRing(p, m)
        prim = primitive_mult_indices(ring)
        if inst.n == 2 and (p, m) == (13, 3):
            Ls = sample_L(ring, inst.n, 40, seed=0)
            st_a = _sweep_stats(inst, ring, prim, Ls, all_L=False)
            rng = np.random.default_rng(1)
            ks = sorted(int(v) for v in rng.choice(prim, size=8, replace=False))
            st_b = _sweep_stats(inst, ring, ks, _full_L_grid(ring.modulus, inst.n), all_L=True)
            out[(name, p, m)] = (st_a, st_b)
        else:
            st = _sweep_stats(inst, ring, prim, _full_L_grid(ring.modulus, inst.n), all_L=True)
            out[(name, p, m)] = (st,)
    return out


def test_criterion_01_small_instance_full_sweep(c1_stats):
    ok = True
    for (name, p, m), stats in c1_stats.items():
        scale = float(p) ** (m * CAT[name].n / 2)
        for st in stats:
            ok &= st.worst_unit_err <= TOL * scale
            ok &= st.worst_vanish_err <= TOL * scale
            ok &= st.singular == 0
    total_pairs = sum(st.pairs + st.vanish_pairs for sts in c1_stats.values() for st in sts)
    _line(
        f"criterion 1 (full sweep I1-I3, p in 5/7/13, m in 2/3): "
        f"{'PASS' if ok else 'FAIL'} — {total_pairs} (chi, L) pairs checked"
    )
    assert ok


# -- criterion 2: sampled sweep for the large instances --

C2_GRID = [(name, p) for name in ("quadric-2", "quadric-3", "det2") for p in (3, 5)]


@pytest.fixture(scope="module")
def c2_reports():
    out = {}
    for name, p in C2_GRID:
        out[(name, p)] = verify_instance(
            CAT[name], p, 2, L_policy=("sample", 50), chi_policy=("sample", 8), seed=0
        )
    return out


def test_criterion_02_sampled_sweep_large_instances(c2_reports):
    ok = True
    notes = []
    for (name, p), rep in c2_reports.items():
        if rep.skipped_bad_prime:
            notes.append(f"{name}@p={p}: skipped (flagged bad prime)")
            continue
        if rep.mismatches:
            # tolerated only as a reported candidate bad prime at p = 3
            ok &= p == 3 and rep.candidate_bad_prime
            notes.append(f"{name}@p={p}: {rep.mismatches} mismatches -> candidate bad prime")
        else:
            ok &= rep.counts["MATCH"] + rep.counts["VANISH_MATCH"] > 0
    _line(
        f"criterion 2 (sampled sweep I4/I5 at p=3,5): {'PASS' if ok else 'FAIL'}"
        + (" — " + "; ".join(notes) if notes else " — all records MATCH/VANISH_MATCH")
    )
    assert ok


# -- criterion 3: the phase constants reproduce brute force exactly --


def test_criterion_03_phase_constants(c1_stats, c2_reports):
    worst = 0.0
    for stats in c1_stats.values():
        for st in stats:
            worst = max(worst, st.worst_phase)
    for rep in c2_reports.values():
        if not rep.skipped_bad_prime and not rep.mismatches:
            worst = max(worst, rep.max_phase_residual)
    ok = worst <= 1e-8
    _line(
        f"criterion 3 (kappa and alpha reproduce the brute phase): "
        f"{'PASS' if ok else 'FAIL'} — max residual {worst:.2e} rad (limit 1e-8)"
    )
    assert ok


# -- criterion 4: critical-point filtering on a random corpus --


def _corpus(count=100, seed=1234):
    rng = random.Random(seed)
    polys = []
    while len(polys) < count:
        n = rng.randint(1, 3)
        terms = {}
        for _ in range(rng.randint(1, 6)):
            while True:
                e = tuple(rng.randint(0, 4) for _ in range(n))
                if sum(e) <= 4:
                    break
            c = rng.randint(-9, 9)
            if c:
                terms[e] = terms.get(e, 0) + c
        f = MultiPoly(n, terms)
        if not f.is_zero():
            polys.append(f)
    return polys


def test_criterion_04_filtered_equals_brute_on_corpus():
    polys = _corpus(100)
    worst = 0.0
    ok = True
    for p, m in [(5, 2), (5, 3), (7, 2), (7, 3)]:
        ring = ResidueRing(p, m)
        chi = MultChar(ring, primitive_mult_indices(ring)[0])
        psi = AddChar(ring, 1)
        for f in polys:
            tol = TOL * float(p) ** (m * f.nvars / 2)
            for b, flt in brute_and_filtered(f, [chi, psi]):
                err = abs(b.value - flt.value)
                worst = max(worst, err / tol)
                ok &= err <= tol
    _line(
        f"criterion 4 (near-critical filtering = brute force, 100-poly corpus, "
        f"mult+add): {'PASS' if ok else 'FAIL'} — worst err {worst:.2e} x tol"
    )
    assert ok


# -- criterion 5: the quadratic constants --


def test_criterion_05_quadratic_constants():
    ok = True
    worst = 0.0
    for p in (5, 7, 13):
        for m in (2, 3, 4):
            ring = ResidueRing(p, m)
            gd = group_data(ring)
            pm, phi = ring.modulus, gd.order
            x = np.arange(pm, dtype=np.int64)
            ulog = gd.log[(1 + x * x) % pm]
            ulog = ulog[ulog >= 0]
            prim = primitive_mult_indices(ring)
            tol = 1e-10 * float(p) ** (m / 2)
            for k in prim:
                brute = complex(np.sum(gd.roots_unit[(k * ulog) % phi]))
                closed = alpha_tilde_closed(MultChar(ring, k))
                err = abs(brute - closed)
                worst = max(worst, err / tol)
                ok &= err <= tol
            # the library operation re-asserts brute == closed internally
            for k in prim[:: max(1, len(prim) // 20)]:
                alpha_tilde_mult(MultChar(ring, k))

    # quadratic closed form vs brute force on 200 random unit tuples
    rng = random.Random(99)
    configs = [(p, m) for p in (5, 7, 13) for m in (2, 3)]
    for i in range(200):
        p, m = configs[i % len(configs)]
        ring = ResidueRing(p, m)
        chi = MultChar(ring, rng.choice(primitive_mult_indices(ring)))
        n = rng.randint(1, 2)
        units = ring.units()
        a = [rng.choice(units) for _ in range(n + 1)]
        f = MultiPoly.constant(n, a[0])
        for j in range(n):
            f = f + a[j + 1] * MultiPoly.variable(n, j) ** 2
        cf = quadratic_closed_form(a, chi)
        bf = brute_sum(f, chi)
        tol = TOL * float(p) ** (m * n / 2)
        err = abs(cf.value - bf.value)
        worst = max(worst, err / tol)
        ok &= err <= tol
    _line(
        f"criterion 5 (quadratic constants: closed forms for all primitive chi, "
        f"p in 5/7/13, m in 2/3/4; 200 random tuples): {'PASS' if ok else 'FAIL'} "
        f"— worst err {worst:.2e} x tol"
    )
    assert ok


# -- criterion 6: the Morse suite --


def _morse_cases():
    cases = []
    rng = random.Random(7)
    for name in ("square", "hyperbola", "quadric-2", "quadric-3", "quadric-4", "det2"):
        inst = CAT[name]
        for p, m in [(5, 2), (5, 3), (7, 3)]:
            ring = ResidueRing(p, m)
            found = 0
            while found < 2:
                L = [rng.randrange(ring.modulus) for _ in range(inst.n)]
                if inst.f_dual.eval_int(L, p) % p == 0:
                    continue
                g, d = chart_function(inst.f, Hyperplane(tuple(L)), ring)
                if d == 0:
                    break
                unit_res, _ = find_chart_critical_residues(g, ring)
                for zbar in unit_res:
                    cases.append((f"{name}@({p},{m})", g, list(zbar), ring))
                found += 1
    return cases


def test_criterion_06_morse_suite():
    rng = random.Random(42)
    ok = True
    checked = 0
    for label, g, zbar, ring in _morse_cases():
        p, pm, m = ring.p, ring.modulus, ring.m
        nf = morse_normal_form(g, zbar, ring)
        ok &= nf.cert.newton_iterations <= math.ceil(math.log2(m)) + 1
        n = g.nvars
        # exact residual congruence on 500 sampled points of the disc
        for _ in range(500):
            x = [zbar[i] + p * rng.randrange(pm // p) for i in range(n)]
            rhs = nf.cert.f_at_c
            for a_i, t_i in zip(nf.a, nf.transform):
                rhs = (rhs + a_i * pow(t_i.eval_int(x, pm), 2, pm)) % pm
            ok &= g.eval_int(x, pm) == rhs
        # sign coherence with the Hessian determinant
        hess = [[h.eval_int(nf.cert.point, p) for h in row] for row in g.hessian()]
        from phvs.morse import _det_mod

        H = _det_mod(hess, p) * pow(pow(2, n, p), -1, p) % p
        prod = 1
        for a_i in nf.a:
            prod = prod * a_i % p
        ok &= legendre(prod, p) == legendre(H, p)
        checked += 1
    _line(
        f"criterion 6 (Morse suite: exact residuals on 500 points, sign coherence, "
        f"Newton bound; {checked} chart normal forms): {'PASS' if ok else 'FAIL'}"
    )
    assert ok


# -- criterion 7: homogeneous factorization and the three-stage pipeline --


def test_criterion_07_factorization_and_pipeline():
    rng = random.Random(17)
    ok = True
    for name in ("hyperbola", "quadric-2"):
        inst = CAT[name]
        for p in (5, 7):
            m = 2
            ring = ResidueRing(p, m)
            scale = float(p) ** (m * inst.n / 2)
            prim = primitive_mult_indices(ring)
            chis = [MultChar(ring, prim[0]), MultChar(ring, prim[-1])]
            psi = AddChar(ring, 1)
            for i in range(50):
                L = tuple(rng.randrange(ring.modulus) for _ in range(inst.n))
                chi = chis[i % 2]
                r = prop41_factorize(inst.f, chi, psi, L)
                direct = fourier_sum(inst.f, chi, psi, L)
                ok &= abs(r.product.value - direct.value) <= TOL * scale
            traced = 0
            while traced < 10:
                L = tuple(rng.randrange(ring.modulus) for _ in range(inst.n))
                if inst.f_dual.eval_int(list(L), p) % p == 0:
                    continue
                tr = pipeline_trace(inst, chis[traced % 2], psi, L)
                ok &= tr.max_pairwise_delta <= TOL * scale
                traced += 1
    _line(
        "criterion 7 (factorized = direct on 50 L per config; pipeline stages "
        f"pairwise within tolerance): {'PASS' if ok else 'FAIL'}"
    )
    assert ok


# -- criterion 8: the L2 identity --


def test_criterion_08_parseval():
    ok = True
    details = []
    for name in ("linear", "hyperbola"):
        inst = CAT[name]
        ring = ResidueRing(5, 2)
        chi, psi = MultChar(ring, 1), AddChar(ring, 1)
        r = parseval_check(inst.f, chi, psi)
        ok &= r.relative_error <= 1e-6
        details.append(f"{name}: N1={r.n_unit}, rel err {r.relative_error:.2e}")
    _line(f"criterion 8 (L2 mass identity at p=5, m=2): {'PASS' if ok else 'FAIL'} — " + "; ".join(details))
    assert ok


# -- criterion 9: composite moduli --


def test_criterion_09_composite_crt():
    ok = True
    for N in (15, 45, 175):
        for text in ("x1", "x1^2", "x1*x2"):
            f = parse_poly(text)
            g = CompositeChar.standard(N)
            L = tuple(1 for _ in range(f.nvars))
            direct, product = crt_composite_sum(f, g, L)
            ok &= abs(direct.value - product.value) <= 1e-10 * N**f.nvars
    _line(f"criterion 9 (composite-modulus product identity, N in 15/45/175): {'PASS' if ok else 'FAIL'}")
    assert ok


# -- criterion 10: worker-count determinism --


def test_criterion_10_determinism_across_workers():
    ok = True
    renderings = {}
    saved = os.environ.get("PHVS_THREADS")
    try:
        for workers in (1, 4, 8):
            os.environ["PHVS_THREADS"] = str(workers)
            texts = []
            for name, p in C2_GRID:
                rep = verify_instance(
                    CAT[name], p, 2, L_policy=("sample", 50), chi_policy=("sample", 8), seed=0
                )
                d = report_to_dict(rep)
                d.pop("timing")
                texts.append(json.dumps(d, indent=2))
            renderings[workers] = "\n".join(texts)
    finally:
        if saved is None:
            os.environ.pop("PHVS_THREADS", None)
        else:
            os.environ["PHVS_THREADS"] = saved
    ok = renderings[1] == renderings[4] == renderings[8]
    _line(
        f"criterion 10 (byte-identical reports with 1/4/8 workers, timing excluded): "
        f"{'PASS' if ok else 'FAIL'}"
    )
    assert ok
