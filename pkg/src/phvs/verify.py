"""End-to-end verification of the closed transform formula.

For an instance (n, d, f, f_dual, b0), a primitive pair (chi, psi) and a
linear form L, the predicted transform value is

    q^(mn/2) * (sum_y chi^d(y) psi(y) / q^(m/2)) * chi(b0 f_dual(L)^(-1) / d^d)
             * alpha(chi, m)^(n-1) * kappa(L),

with kappa(L) = legendre(-d 2^(n-1) h(L))^m built from the log-Hessian
discriminant of f_dual, and 0 whenever f_dual(L) = 0 mod p.  This module
computes the prediction, compares it against brute force over sweeps of
(chi, L), and emits deterministic machine-readable reports.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .catalogue import PvsInstance, is_bad_prime
from .characters import AddChar, MultChar, alpha_factor, group_data, primitive_mult_indices
from .charsums import (
    DEFAULT_BUDGET,
    ParsevalResult,
    parseval_check,
    prop41_factorize,
    twisted_gauss_sum,
)
from .errors import BadPrime, BudgetExceeded, NotPrimitive, SingularHessian
from .morse import Hyperplane, critical_points_sum
from .multipoly import format_poly, loghessian_disc
from .residue import ResidueRing, legendre

STATUS_MATCH = "MATCH"
STATUS_VANISH_MATCH = "VANISH_MATCH"
STATUS_MISMATCH = "MISMATCH"
STATUS_SKIPPED = "SKIPPED_BAD_PRIME"

DEFAULT_TOL = 1e-9


class Vanishing:
    """Sentinel: f_dual(L) = 0 mod p, so the transform is predicted to vanish."""

    def __repr__(self):
        return "Vanishing"


VANISHING = Vanishing()


@dataclass
class ClosedFormResult:
    value: complex
    gauss_like_normalized: complex
    chi_arg: int
    alpha: complex
    kappa: int
    scale: float


def closed_form_S(inst: PvsInstance, chi: MultChar, psi: AddChar, L):
    """The predicted transform value at L, or VANISHING.

    Scalar route: kappa comes from the congruence diagonalization of the
    log-Hessian (the sweep engine uses the determinant class, which agrees)."""
    ring = chi.ring
    p, pm, m = ring.p, ring.modulus, ring.m
    if m < 2:
        raise ValueError("the closed form needs m >= 2")
    if inst.divisor_bad_prime(p):
        raise BadPrime(f"p={p} is flagged bad for {inst.name}")
    from .characters import is_primitive_add, is_primitive_mult

    if not is_primitive_mult(chi) or not is_primitive_add(psi):
        raise NotPrimitive("closed form requires primitive chi and psi")
    n, d = inst.n, inst.d
    coords = [int(v) % pm for v in L]
    fd = inst.f_dual.eval_int(coords, pm)
    if fd % p == 0:
        return VANISHING
    gauss = twisted_gauss_sum(chi, psi, d)
    scale = float(p) ** (m * n / 2)
    gauss_norm = gauss / float(p) ** (m / 2)
    chi_arg = inst.b0_mod(pm) * pow(fd, -1, pm) * pow(pow(d, d, pm), -1, pm) % pm
    alpha = alpha_factor(chi)
    h_class = int(loghessian_disc(inst.f_dual, coords, p))
    kappa = (int(legendre(-d * 2 ** (n - 1), p)) * h_class) ** m
    value = scale * gauss_norm * chi(chi_arg) * alpha ** (n - 1) * kappa
    return ClosedFormResult(
        value=value,
        gauss_like_normalized=gauss_norm,
        chi_arg=chi_arg,
        alpha=alpha,
        kappa=kappa,
        scale=scale,
    )


@dataclass
class PipelineTrace:
    """The three intermediate representations of the transform at L."""

    factorized: complex      # gauss factor x hyperplane sum
    critical_points: complex  # gauss factor x critical-point chart formula
    closed_form: complex
    max_pairwise_delta: float


def pipeline_trace(inst: PvsInstance, chi: MultChar, psi: AddChar, L) -> PipelineTrace:
    ring = chi.ring
    r41 = prop41_factorize(inst.f, chi, psi, L)
    stage1 = r41.product.value
    chart = critical_points_sum(inst.f, chi, Hyperplane(tuple(L)))
    stage2 = r41.gauss_like * chart.value
    cf = closed_form_S(inst, chi, psi, L)
    if isinstance(cf, Vanishing):
        raise ValueError("pipeline_trace requires f_dual(L) to be a unit")
    stage3 = cf.value
    delta = max(abs(stage1 - stage2), abs(stage1 - stage3), abs(stage2 - stage3))
    return PipelineTrace(stage1, stage2, stage3, delta)


# -- vectorized closed-form parts over a batch of L --


def _det_mod_arrays(M, p: int) -> np.ndarray:
    """Determinant mod p of a matrix of int64 arrays, by cofactor expansion."""
    k = len(M)
    if k == 1:
        return M[0][0] % p
    total = None
    for j in range(k):
        minor = [[M[r][c] for c in range(k) if c != j] for r in range(1, k)]
        term = M[0][j] * _det_mod_arrays(minor, p) % p
        if j % 2:
            term = -term % p
        total = term if total is None else (total + term) % p
    return total


@dataclass
class ClosedParts:
    """Per-L ingredients of the prediction, vectorized."""

    L: np.ndarray            # (NL, n) int64
    fdual: np.ndarray        # (NL,) residues mod p^m
    vanish: np.ndarray       # bool: f_dual(L) = 0 mod p
    singular: np.ndarray     # bool: unit f_dual but singular log-Hessian (candidate bad prime)
    chi_arg: np.ndarray      # (NL,) residues; meaningful off the vanishing locus
    kappa: np.ndarray        # (NL,) int64 in {+1,-1}; 0 on vanish/singular


def closed_parts(inst: PvsInstance, ring: ResidueRing, Lmat: np.ndarray) -> ClosedParts:
    p, pm, m = ring.p, ring.modulus, ring.m
    n, d = inst.n, inst.d
    cols = [Lmat[:, j] % pm for j in range(n)]
    fd = inst.f_dual.eval_arrays(cols, pm)
    vanish = fd % p == 0
    inv_fd = ring.tables.inverse[fd]
    const = inst.b0_mod(pm) * pow(pow(d, d, pm), -1, pm) % pm
    chi_arg = inv_fd * const % pm

    cols_p = [c % p for c in cols]
    v_p = fd % p
    grad = [g.eval_arrays(cols_p, p) for g in inst.f_dual.gradient()]
    hess = [[h.eval_arrays(cols_p, p) for h in row] for row in inst.f_dual.hessian()]
    M = [[(v_p * hess[i][j] - grad[i] * grad[j]) % p for j in range(n)] for i in range(n)]
    # det(M v^(-2)) differs from det(M) by the square (v^(-n))^2: same class
    det_raw = _det_mod_arrays(M, p)
    leg = ring.tables.legendre
    const = (-d * 2 ** (n - 1)) % p
    base = leg[const * det_raw % p]
    kappa = base**m if m % 2 else (base != 0).astype(np.int64)
    singular = (det_raw % p == 0) & ~vanish
    kappa[vanish | singular] = 0
    return ClosedParts(Lmat, fd, vanish, singular, chi_arg, kappa)


def closed_values_for_chi(
    inst: PvsInstance, chi: MultChar, psi: AddChar, parts: ClosedParts
) -> np.ndarray:
    """Predicted values over the batch (0 on the vanishing locus)."""
    ring = chi.ring
    p, m = ring.p, ring.m
    scale = float(p) ** (m * inst.n / 2)
    gauss_norm = twisted_gauss_sum(chi, psi, inst.d) / float(p) ** (m / 2)
    alpha = alpha_factor(chi)
    vals = scale * gauss_norm * alpha ** (inst.n - 1) * chi.values[parts.chi_arg] * parts.kappa
    vals[parts.vanish] = 0
    return vals


# -- brute-force sweep engines --


def _psi_matrix(ring: ResidueRing, twist: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    pm = ring.modulus
    gd = group_data(ring)
    return gd.roots_add[(twist * np.outer(rows, cols)) % pm]


def _full_L_grid(pm: int, n: int) -> np.ndarray:
    idx = np.arange(pm**n, dtype=np.int64)
    return np.stack([(idx // pm ** (n - 1 - j)) % pm for j in range(n)], axis=1)


def sample_L(ring: ResidueRing, n: int, count: int, seed: int) -> np.ndarray:
    """Seeded uniform sample of linear forms (reproducible across runs)."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, ring.modulus, size=(count, n), dtype=np.int64)


def brute_transform_rows(
    inst: PvsInstance,
    ring: ResidueRing,
    chi_indices,
    psi_twist: int,
    Lmat: np.ndarray,
    all_L: bool,
    budget: int = DEFAULT_BUDGET,
):
    """Brute-force transform values S(L) for every chi in chi_indices over the
    rows of Lmat, yielded one (chi_index, values) row at a time.

    Exact enumeration, vectorized: for exhaustive L the sum is evaluated as a
    dense transform against the character table (n <= 2); for sampled L the
    grid is folded into (f-value, L(x)-value) multiplicity tables first.
    The budget gates the actual multiply-accumulate work."""
    p, pm = ring.p, ring.modulus
    n = inst.n
    NL = Lmat.shape[0]
    nchi = len(chi_indices)
    npts = pm**n
    if all_L and n == 1:
        _check_work(nchi * pm * pm, budget)
    elif all_L and n == 2:
        _check_work(nchi * 2 * pm**3, budget)
    elif all_L:
        raise BudgetExceeded(nchi * npts * npts, budget)
    else:
        _check_work(NL * (npts + pm * pm) + nchi * NL * pm, budget)
    return _brute_rows_gen(inst, ring, chi_indices, psi_twist, Lmat, all_L)


def _brute_rows_gen(inst, ring, chi_indices, psi_twist, Lmat, all_L):
    pm = ring.modulus
    n = inst.n
    NL = Lmat.shape[0]
    npts = pm**n
    x = np.arange(pm, dtype=np.int64)
    cols = [
        (np.arange(npts, dtype=np.int64) // pm ** (n - 1 - j)) % pm for j in range(n)
    ]
    f_grid = inst.f.eval_arrays(cols, pm)

    if all_L and n == 1:
        psi_m = _psi_matrix(ring, psi_twist, x, x)
        B = np.stack([MultChar(ring, k).values[f_grid] for k in chi_indices])
        S = B @ psi_m
        for i, k in enumerate(chi_indices):
            yield k, S[i]
        return
    if all_L and n == 2:
        psi_m = _psi_matrix(ring, psi_twist, x, x)
        A0 = f_grid.reshape(pm, pm)
        for k in chi_indices:
            A = MultChar(ring, k).values[A0]
            S = psi_m.T @ (A @ psi_m)
            yield k, S.reshape(-1)
        return

    # sampled L: per L fold the grid into a (pm x pm) multiplicity table
    gd = group_data(ring)
    psi_vec = gd.roots_add[(psi_twist * x) % pm]
    B = np.stack([MultChar(ring, k).values for k in chi_indices])
    S = np.zeros((len(chi_indices), NL), dtype=np.complex128)
    for li in range(NL):
        lx = np.zeros(npts, dtype=np.int64)
        for j in range(n):
            lx = (lx + int(Lmat[li, j]) * cols[j]) % pm
        T = np.bincount(f_grid * pm + lx, minlength=pm * pm).reshape(pm, pm)
        S[:, li] = B @ (T @ psi_vec)
    for i, k in enumerate(chi_indices):
        yield k, S[i]


def brute_transform_sweep(
    inst: PvsInstance,
    ring: ResidueRing,
    chi_indices,
    psi_twist: int,
    Lmat: np.ndarray,
    all_L: bool,
    budget: int = DEFAULT_BUDGET,
) -> dict:
    """Materialized form of brute_transform_rows (small sweeps only)."""
    return dict(
        brute_transform_rows(inst, ring, chi_indices, psi_twist, Lmat, all_L, budget=budget)
    )


def _check_work(work: int, budget: int):
    if budget is not None and work > budget:
        raise BudgetExceeded(work, budget)


# -- reports --


@dataclass
class LRecord:
    chi_index: int
    L: tuple
    fdual_valuation: int
    brute: complex
    closed: object           # complex or "vanishing"
    abs_err: float
    status: str
    replay: str = None


@dataclass
class VerifyReport:
    instance: str
    p: int
    m: int
    n: int
    d: int
    psi_twist: int
    chi_policy: str
    L_policy: str
    seed: int
    tolerance: float
    skipped_bad_prime: bool = False
    candidate_bad_prime: bool = False
    budget_exceeded: bool = False
    chi_indices: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    max_abs_err: float = 0.0
    max_phase_residual: float = 0.0
    max_magnitude_err: float = 0.0
    parseval: ParsevalResult = None
    parseval_chi: int = None
    records: list = field(default_factory=list)
    records_truncated: bool = False
    timing_seconds: float = 0.0

    @property
    def mismatches(self) -> int:
        return self.counts.get(STATUS_MISMATCH, 0)

    @property
    def exit_status(self) -> int:
        """Nonzero iff a MISMATCH is present; skipped bad primes never fail."""
        return 1 if self.mismatches else 0


def _fmt(x: float) -> str:
    return f"{float(x):.15g}"


def _fmt_complex(z: complex) -> dict:
    return {"re": _fmt(z.real), "im": _fmt(z.imag)}


def report_to_dict(r: VerifyReport) -> dict:
    recs = []
    for rec in r.records:
        recs.append(
            {
                "chi": rec.chi_index,
                "L": [int(v) for v in rec.L],
                "fdual_valuation": rec.fdual_valuation,
                "brute": _fmt_complex(rec.brute),
                "closed": "vanishing" if rec.closed == "vanishing" else _fmt_complex(rec.closed),
                "abs_err": _fmt(rec.abs_err),
                "status": rec.status,
                **({"replay": rec.replay} if rec.replay else {}),
            }
        )
    out = {
        "schema": "phvs-verify-report/1",
        "instance": r.instance,
        "p": r.p,
        "m": r.m,
        "n": r.n,
        "d": r.d,
        "psi_twist": r.psi_twist,
        "chi_policy": r.chi_policy,
        "L_policy": r.L_policy,
        "seed": r.seed,
        "tolerance": _fmt(r.tolerance),
        "skipped_bad_prime": r.skipped_bad_prime,
        "candidate_bad_prime": r.candidate_bad_prime,
        "budget_exceeded": r.budget_exceeded,
        "chi_indices": list(r.chi_indices),
        "counts": {k: r.counts[k] for k in sorted(r.counts)},
        "max_abs_err": _fmt(r.max_abs_err),
        "max_phase_residual": _fmt(r.max_phase_residual),
        "max_magnitude_err": _fmt(r.max_magnitude_err),
        "parseval": (
            {
                "chi": r.parseval_chi,
                "lhs": _fmt(r.parseval.lhs),
                "rhs": _fmt(r.parseval.rhs),
                "n_unit": r.parseval.n_unit,
                "relative_error": _fmt(r.parseval.relative_error),
            }
            if r.parseval is not None
            else None
        ),
        "records": recs,
        "records_truncated": r.records_truncated,
        "timing": {"seconds": _fmt(r.timing_seconds)},
    }
    return out


def report_to_json(r: VerifyReport) -> str:
    return json.dumps(report_to_dict(r), indent=2)


def _replay_command(inst: PvsInstance, p: int, m: int, k: int, t: int, L) -> str:
    lstr = ",".join(str(int(v)) for v in L)
    return (
        f"phvs sum --f '{format_poly(inst.f)}' --p {p} --m {m} "
        f"--chi {k} --psi {t} --L {lstr}"
    )


def verify_instance(
    inst: PvsInstance,
    p: int,
    m: int,
    L_policy="all",
    chi_policy="all",
    psi_twist: int = 1,
    seed: int = 0,
    budget: int = DEFAULT_BUDGET,
    tol: float = DEFAULT_TOL,
    max_records: int = 10000,
    parseval: bool = True,
    skip_bad_prime_check: bool = False,
) -> VerifyReport:
    """Compare brute force against the closed form over a (chi, L) sweep.

    L_policy: "all", ("sample", k), or an explicit list of coefficient tuples.
    chi_policy: "all", ("sample", k), an int index, or a list of indices."""
    t0 = time.perf_counter()
    report = VerifyReport(
        instance=inst.name,
        p=p,
        m=m,
        n=inst.n,
        d=inst.d,
        psi_twist=psi_twist,
        chi_policy=_policy_str(chi_policy),
        L_policy=_policy_str(L_policy),
        seed=seed,
        tolerance=tol,
    )
    if not skip_bad_prime_check and is_bad_prime(inst, p):
        report.skipped_bad_prime = True
        report.counts = {STATUS_SKIPPED: 1}
        report.timing_seconds = time.perf_counter() - t0
        return report

    ring = ResidueRing(p, m)
    pm = ring.modulus
    psi = AddChar(ring, psi_twist)

    primitive = primitive_mult_indices(ring)
    if chi_policy == "all":
        chi_indices = primitive
    elif isinstance(chi_policy, int):
        chi_indices = [chi_policy]
    elif isinstance(chi_policy, (list, tuple)) and chi_policy and chi_policy[0] == "sample":
        rng = np.random.default_rng(seed + 1)
        count = min(int(chi_policy[1]), len(primitive))
        chi_indices = sorted(int(k) for k in rng.choice(primitive, size=count, replace=False))
    else:
        chi_indices = [int(k) for k in chi_policy]
    for k in chi_indices:
        if ring.m == 1 or k % p == 0:
            raise NotPrimitive(f"character index {k} is not primitive mod {p}^{m}")

    all_L = L_policy == "all"
    if all_L:
        Lmat = _full_L_grid(pm, inst.n)
    elif isinstance(L_policy, tuple) and L_policy[0] == "sample":
        Lmat = sample_L(ring, inst.n, int(L_policy[1]), seed)
    else:
        Lmat = np.array([[int(v) % pm for v in row] for row in L_policy], dtype=np.int64)

    try:
        brute_rows = brute_transform_rows(
            inst, ring, chi_indices, psi_twist, Lmat, all_L, budget=budget
        )
    except BudgetExceeded as exc:
        report.budget_exceeded = True
        report.counts = {}
        report.timing_seconds = time.perf_counter() - t0
        exc.partial_report = report
        raise

    parts = closed_parts(inst, ring, Lmat)
    scale = float(p) ** (m * inst.n / 2)
    val_table = ring.tables.valuation
    fdual_vals = parts.fdual
    counts = {STATUS_MATCH: 0, STATUS_VANISH_MATCH: 0, STATUS_MISMATCH: 0}
    records = []
    max_err = 0.0
    max_phase = 0.0
    max_mag = 0.0

    for k, bvals in brute_rows:
        closed = closed_values_for_chi(inst, MultChar(ring, k), psi, parts)
        err = np.abs(bvals - closed)
        vanish_err = np.abs(bvals)
        chi_table = MultChar(ring, k).values
        gauss_norm = twisted_gauss_sum(MultChar(ring, k), psi, inst.d) / float(p) ** (m / 2)
        alpha = alpha_factor(MultChar(ring, k))
        target = alpha ** (inst.n - 1) * parts.kappa
        ok_units = ~parts.vanish & ~parts.singular
        with np.errstate(divide="ignore", invalid="ignore"):
            resid = np.where(
                ok_units,
                bvals / (scale * gauss_norm * np.where(ok_units, chi_table[parts.chi_arg], 1)),
                1,
            )
            phase = np.abs(np.angle(resid * np.conj(np.where(target == 0, 1, target))))
        for li in range(Lmat.shape[0]):
            if parts.vanish[li]:
                status = STATUS_VANISH_MATCH if vanish_err[li] <= tol * scale else STATUS_MISMATCH
                closed_repr = "vanishing"
                abs_err = float(vanish_err[li])
            elif parts.singular[li]:
                status = STATUS_MISMATCH
                closed_repr = complex(0)
                abs_err = float(abs(bvals[li]))
                report.candidate_bad_prime = True
            else:
                status = STATUS_MATCH if err[li] <= tol * scale else STATUS_MISMATCH
                closed_repr = complex(closed[li])
                abs_err = float(err[li])
                max_phase = max(max_phase, float(phase[li])) if status == STATUS_MATCH else max_phase
                if status == STATUS_MATCH:
                    max_mag = max(max_mag, abs(abs(bvals[li]) - scale) / scale)
            counts[status] += 1
            max_err = max(max_err, abs_err)
            if status == STATUS_MISMATCH:
                report.candidate_bad_prime = True
            if len(records) < max_records:
                records.append(
                    LRecord(
                        chi_index=k,
                        L=tuple(int(v) for v in Lmat[li]),
                        fdual_valuation=int(val_table[fdual_vals[li]]),
                        brute=complex(bvals[li]),
                        closed=closed_repr,
                        abs_err=abs_err,
                        status=status,
                        replay=(
                            _replay_command(inst, p, m, k, psi_twist, Lmat[li])
                            if status == STATUS_MISMATCH
                            else None
                        ),
                    )
                )
            else:
                report.records_truncated = True

    if parseval:
        ptotal = pm ** (2 * inst.n)
        if budget is None or ptotal <= budget:
            report.parseval = parseval_check(
                inst.f, MultChar(ring, chi_indices[0]), psi, budget=budget or ptotal
            )
            report.parseval_chi = chi_indices[0]

    report.chi_indices = chi_indices
    report.counts = counts
    report.records = records
    report.max_abs_err = max_err
    report.max_phase_residual = max_phase
    report.max_magnitude_err = max_mag
    report.timing_seconds = time.perf_counter() - t0
    return report


def _policy_str(policy) -> str:
    if isinstance(policy, str):
        return policy
    if isinstance(policy, int):
        return str(policy)
    if isinstance(policy, tuple) and policy and policy[0] == "sample":
        return f"sample:{policy[1]}"
    return "list:" + ";".join(",".join(str(int(v)) for v in row) for row in policy)
