"""Exit criteria 1-9.  Each test prints one PASS/FAIL line and asserts it."""
import time

import numpy as np
import pytest

from multiform._validation import make_rng
from multiform.finite_group import (
    GroupSpec,
    build_mu,
    build_nu,
    build_uniform,
    max_nonzero_fourier,
    obstruction_witness,
    trilinear_form,
)
from multiform.harness import ScanConfig, run_scan
from multiform.linear_forms import FormFamily, LinearForm, validate_family
from multiform.operator import MultilinearInstance, _bruteforce_plan, op_norm_bruteforce, op_norm_lower
from multiform.random_matrix import MatrixModel, chernoff_tail_check
from multiform.random_measure import SelectorModel, SignedMeasure, sample_r
from multiform.reduction import exceptional_set, tight_witness, verify_cs_step, verify_exceptional_bound
from multiform.trace import (
    TraceConfig,
    expected_trace_exact,
    matrix_trace_exact,
    matrix_trace_monte_carlo,
    oracle_comparison,
    trace_monte_carlo,
)

pytestmark = pytest.mark.acceptance


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_criterion_1_obstruction(capsys):
    t0 = time.time()
    worst = [0.0, 0.0, 0.0]
    for p in (5, 7, 11, 13):
        for d in (1, 2):
            spec = GroupSpec(p, d)
            f, g, h = obstruction_witness(spec)
            gauss = max_nonzero_fourier(build_mu(spec))
            worst[0] = max(worst[0], abs(gauss - p ** (-d / 2)) / p ** (-d / 2))
            target = float(p) ** (d + 1)
            norms = f.norm(2) * g.norm(2) * h.norm(np.inf)
            val = trilinear_form(f, g, h, build_nu(spec))
            worst[1] = max(worst[1], abs(val - target) / target, abs(norms - target) / target)
            worst[2] = max(worst[2], abs(trilinear_form(f, g, h, build_uniform(spec))))
    dt = time.time() - t0
    ok = worst[0] <= 1e-9 and worst[1] <= 1e-9 and worst[2] <= 1e-9 and dt < 30
    report(capsys, 1, ok, f"gauss rel err {worst[0]:.1e}, witness rel err {worst[1]:.1e}, "
                          f"uniform |value| {worst[2]:.1e}, {dt:.1f}s")


@pytest.mark.slow
def test_criterion_2_trace(capsys):
    t0 = time.time()
    zs = []
    for N, q in ((4, 1), (8, 1), (4, 2)):
        for p in (0.25, 0.5):
            cfg = TraceConfig(N, p, q)
            mean, se = trace_monte_carlo(cfg, 100_000, seed=N * 10 + q)
            zs.append(oracle_comparison(expected_trace_exact(cfg), mean, se)["z_score"])
    for q in (1, 2):
        for p in (0.25, 0.5):
            mean, se = matrix_trace_monte_carlo(3, p, q, 100_000, seed=30 + q)
            zs.append(oracle_comparison(matrix_trace_exact(3, p, q)["exact"], mean, se)["z_score"])
    dt = time.time() - t0
    worst = max(abs(z) for z in zs)
    report(capsys, 2, worst <= 3 and dt < 300, f"max |z| {worst:.2f} over {len(zs)} cases, {dt:.1f}s")


@pytest.mark.slow
def test_criterion_3_bilinear_scaling(capsys):
    t0 = time.time()
    # gamma = 0 would give p = 1 and r = 0; density 1/2 keeps the slope
    cfg = ScanConfig([2**k for k in range(9, 14)], [0.0, 0.3], estimator="bilinear_exact", trials=200,
                     seed=3, density=0.5)
    res = run_scan(cfg)
    dt = time.time() - t0
    parts, ok = [], dt < 600
    for g, fit in res.fits.items():
        ref = -(1 - g) / 2
        ok &= abs(fit["slope"] - ref) <= 0.15
        parts.append(f"gamma={g}: slope {fit['slope']:.3f} (ref {ref:.2f})")
    report(capsys, 3, ok, "; ".join(parts) + f", {dt:.1f}s")


def test_criterion_4_degree_reduction(capsys):
    rng = make_rng(4, 0)
    kernels = ["1,-1", "1,-2", "2,-1", "1,1"]
    extra = ["1,1", "1,-1", "1,2", "2,1"]
    fails = tight_fail = 0
    worst_tight = 0.0
    for i in range(100):
        M = int(rng.integers(2, 4))
        N = int(rng.choice([2, 4, 8, 16, 32, 64]))
        gamma = float(rng.choice([0.0, 0.25]))
        k0 = kernels[rng.integers(4)]
        # the third function form must not repeat the kernel's direction
        rest = [e for e in extra if e != k0]
        forms = [k0, "1,0", "0,1"] + ([rest[rng.integers(len(rest))]] if M == 3 else [])
        fam = FormFamily.parse("; ".join(forms))
        model = SelectorModel(N, gamma=gamma, density=0.5 if gamma == 0 else 1.0)
        inst = MultilinearInstance(fam, sample_r(model, make_rng(4, 1, i)), N)
        W = inst.half_width
        fs = [rng.standard_normal(2 * W + 1) for _ in range(M)]
        if not (verify_cs_step(inst, fs)["holds"] and verify_exceptional_bound(inst, fs)["holds"]):
            fails += 1
        t = verify_cs_step(inst, tight_witness(inst, fs))
        rhs = t["f1_norm2"] * t["signed_sum"]
        err = abs(t["lhs2"] - rhs) / max(abs(rhs), 1e-300) if rhs or t["lhs2"] else 0.0
        worst_tight = max(worst_tight, err)
        tight_fail += err > 1e-9
    report(capsys, 4, fails == 0 and tight_fail == 0,
           f"{fails}/100 inequality failures, tight witness max rel gap {worst_tight:.1e}")


def test_criterion_5_exceptional_set(capsys):
    rng = make_rng(5, 0)
    zr = (-200, 200)
    bad = 0
    for i in range(1000):
        k = int(rng.integers(1, 9))
        shifts = tuple(int(s) for s in rng.choice(np.arange(-40, 41), size=k, replace=False))
        a, b = int(rng.integers(1, 4)), int(rng.choice([-3, -2, -1, 1, 2, 3]))
        L0 = LinearForm(a, b)
        B = exceptional_set(shifts, L0, zr)
        # exhaustive: every z in range, every pair of shifts
        brute = {z for z in range(zr[0], zr[1] + 1)
                 if any(zi == zj + L0.at_shift(z) for zi in shifts for zj in shifts)}
        bad += len(B) > k * k or B != brute
    report(capsys, 5, bad == 0, f"{bad}/1000 tuples violate |B| <= |I|^2 or differ from exhaustive B")


def _random_instance(rng, M, N):
    while True:
        ab = rng.integers(-2, 3, size=(M + 1, 2))
        if np.any(np.all(ab == 0, axis=1)):
            continue
        fam = FormFamily(tuple(LinearForm(int(a), int(b)) for a, b in ab))
        if validate_family(fam) is None:
            break
    return MultilinearInstance(fam, SignedMeasure(N, rng.standard_normal(2 * N + 1)), N)


@pytest.mark.slow
def test_criterion_6_estimator_soundness(capsys):
    rng = make_rng(6, 0)
    below = equal = redraws = 0
    i = 0
    while i < 100:
        M, N = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        inst = _random_instance(rng, M, N)
        # the exact oracle enumerates 2^bits sign patterns; redraw past the cap
        if _bruteforce_plan(inst.layout)[1] > 20:
            redraws += 1
            continue
        exact = op_norm_bruteforce(inst)
        low = op_norm_lower(inst, restarts=20, iters=200, seed=i).value
        below += low <= exact * (1 + 1e-9) + 1e-12
        equal += abs(low - exact) <= 1e-3 * max(exact, 1e-300)
        i += 1
    report(capsys, 6, below == 100 and equal >= 95,
           f"lower <= exact on {below}/100, equal within 1e-3 on {equal}/100 ({redraws} redraws over cap)")


@pytest.mark.slow
def test_criterion_7_chernoff(capsys):
    parts, ok = [], True
    for p in (0.1, 0.5):
        rep = chernoff_tail_check(MatrixModel(64, p=p), lambdas=(1.0, 2.0, 3.0), trials=100_000, seed=7)
        ok &= rep["holds"]
        parts.append(f"p={p}: " + ", ".join(f"l={r['lambda']:.0f} {r['tail']:.4f}<={r['bound']:.4f}"
                                             for r in rep["rows"]))
    report(capsys, 7, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_8_spectral_scaling(capsys):
    t0 = time.time()
    # density 1/2 so gamma = 0 is not the zero kernel; a constant factor leaves the slope unchanged
    cfg = ScanConfig([2**k for k in range(7, 12)], [0.0, 0.5], estimator="matrix_spectral", trials=100,
                     seed=8, density=0.5)
    res = run_scan(cfg)
    parts, ok = [], True
    for g, fit in res.fits.items():
        ref = -(1 - g) / 2
        ok &= abs(fit["slope"] - ref) <= 0.15
        parts.append(f"gamma={g}: slope {fit['slope']:.3f} (ref {ref:.2f})")
    report(capsys, 8, ok, "; ".join(parts) + f", {time.time() - t0:.1f}s")


def test_criterion_9_statement(capsys):
    report(capsys, 9, True,
           "not reproducible at desk scale: the asymptotic constants (C, epsilon, delta) of the main "
           "decay theorems and the ergodic convergence theorems; covered instead by exact identities, "
           "oracle equivalences, inequality checks and slope fits (criteria 1-8)")
