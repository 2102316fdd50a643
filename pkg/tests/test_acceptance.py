"""Acceptance gate: one PASS/FAIL line per criterion.

Run under pytest (lines are echoed in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import io
import math
import time

import numpy as np
import pytest
from scipy import integrate

from funq import allocation as al
from funq import expansions as ex
from funq import gauss1d, specfun
from funq import product_quant as pq
from funq.cli import fmt
from funq.expansions import Grid, ProcessSpec

RESULTS: dict[int, tuple[bool, str]] = {}
CSV_CACHE: dict[tuple[int, int], str] = {}
SEED = 20240611
THREADS_A, THREADS_B = 4, 1

BM = ProcessSpec("bm")
OU = ProcessSpec("ou", beta=2.0, sigma=1.0)
FBM3 = ProcessSpec("fbm", hurst=0.3)
FBM7 = ProcessSpec("fbm", hurst=0.7)


def record(n: int, ok: bool, detail: str) -> bool:
    RESULTS[n] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    return ok


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


# -- 1-5: closed forms and arithmetic ------------------------------------------------------

def criterion_1():
    gauss1d._build_cached.cache_clear()
    t0 = time.perf_counter()
    q2 = gauss1d.build_quantizer(2, 2.0)
    q1 = gauss1d.build_quantizer(1, 2.0)
    dt = time.perf_counter() - t0
    c = math.sqrt(2 / math.pi)
    e_cp = float(np.max(np.abs(q2.codepoints - np.array([-c, c]))))
    e_d = abs(q2.distortion - math.sqrt(1 - 2 / math.pi))
    ok = e_cp < 1e-9 and e_d < 1e-9 and q1.distortion == 1.0 and dt < 1.0
    return record(1, ok, f"codepoint err {e_cp:.1e}, distortion err {e_d:.1e}, e_1 = {q1.distortion!r}, {dt:.3f}s")


def criterion_2():
    t0 = time.perf_counter()
    phi = lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    integral = integrate.quad(lambda x: phi(x) ** (1 / 3), -np.inf, np.inf, epsabs=1e-14)[0]
    limit = math.sqrt(integral**3 / 12)
    gauss1d._build_cached.cache_clear()
    val = 400 * gauss1d.build_quantizer(400, 2.0).distortion
    dt = time.perf_counter() - t0
    rel = abs(val / limit - 1)
    return record(2, rel < 0.02 and dt < 30, f"400*e_400 = {val:.6f} vs limit {limit:.6f} (rel {rel:.2%}), {dt:.2f}s")


def criterion_3():
    specfun._zero_cache.clear()
    t0 = time.perf_counter()
    j = np.arange(1, 201)
    e_m = float(np.max(np.abs(specfun.bessel_zeros(-0.5, 200).zeros - (j - 0.5) * np.pi)))
    e_p = float(np.max(np.abs(specfun.bessel_zeros(0.5, 200).zeros - j * np.pi)))
    e_c = abs(specfun.c_rho(0.5) - 1 / math.sqrt(math.pi))
    dt = time.perf_counter() - t0
    ok = e_m < 1e-10 and e_p < 1e-10 and e_c < 1e-12 and dt < 1.0
    return record(3, ok, f"J_-1/2 zeros err {e_m:.1e}, J_1/2 zeros err {e_p:.1e}, c_1/2 err {e_c:.1e}, {dt:.3f}s")


def criterion_4():
    t0 = time.perf_counter()
    g1, g2 = Grid(1.0, 33), Grid(1.0, 33, 2)
    cases = [
        ("BM", ex.bm_sequence(1.0, 2000), 2000, g1, 2e-2),
        ("OU", ex.ou_sequence(2.0, 1.0, 1.0, 2000), 2000, g1, 1e-2 * 1.0 / (2 * 2.0)),
        ("fBM(0.3)", ex.dvz_fbm_sequence(0.3, 1.0, 4000), 4000, g1, 5e-2),
        ("fBM(0.7)", ex.dvz_fbm_sequence(0.7, 1.0, 4000), 4000, g1, 5e-2),
        ("FBS(0.5,0.5)", ex.fbs_sequence((0.5, 0.5), 1.0, 4000), 4000, g2, 5e-2),
    ]
    parts, ok = [], True
    for name, seq, K, grid, tol in cases:
        err = ex.covariance_error(seq, K, grid)
        ok &= err < tol
        parts.append(f"{name} {err:.1e}<{tol:.1e}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    return record(4, ok, ", ".join(parts) + f", {dt:.1f}s")


def criterion_5():
    t0 = time.perf_counter()
    a = al.integer_allocation([1.0, 0.5], 2, 16)
    z_ok = np.allclose(a.continuous, [4 * math.sqrt(2), 2 * math.sqrt(2)], rtol=1e-12) and a.levels == (5, 2)
    feasible = True
    for theta in (0.75, 1.0, 1.5):
        for gamma in (0.0, 1.0):
            nu = al.nu_theoretical(theta, gamma, 400)
            for N in range(2, 10**4 + 1):
                b = al.allocate(nu, N)
                feasible &= b.product <= N and min(b.levels) >= 1
    ratios = []
    for theta in (1.0, 1.5):
        m, _ = al.max_feasible_m(al.nu_theoretical(theta, 0.0, 1000), math.exp(20))
        ratios.append(m * theta / 20)
    dt = time.perf_counter() - t0
    ok = z_ok and feasible and all(0.8 <= r <= 1.2 for r in ratios) and dt < 10
    return record(5, ok, f"example {a.levels}, feasibility {'ok' if feasible else 'VIOLATED'}, "
                         f"m* theta/ln N = {ratios[0]:.3f}, {ratios[1]:.3f}, {dt:.2f}s")


# -- 6-9: Monte Carlo ---------------------------------------------------------------------------

def criterion_6(threads=THREADS_A, emit=True):
    t0 = time.perf_counter()
    M, K = 10**4, 4096
    rows, ok, worst = [], True, -np.inf
    for name, spec in (("bm", BM), ("ou", OU), ("fbm0.7", FBM7)):
        seq = ex.sequence_for(spec, K)
        grid = ex.default_grid()
        qs = [pq.build(spec, N, r, depth=K, sequence=seq) for N in (4, 64, 1024) for r in (1.0, 2.0)]
        sample = pq.sample_paths(seq, M, K, grid, SEED, keep=max(q.m for q in qs), threads=threads)
        for q in qs:
            rep = pq.mc_distortion(q, M, K, SEED, with_nn=True, threads=threads, sample=sample)
            slack = 3 * math.hypot(rep.se, rep.bound_se)
            ok &= rep.estimate <= rep.bound + slack
            ok &= rep.nn_estimate <= rep.estimate + 3 * rep.se
            worst = max(worst, (rep.estimate - rep.bound) / slack)
            rows.append((name, q.budget, q.order, rep.estimate, rep.se, rep.bound, rep.bound_se, rep.nn_estimate))
    dt = time.perf_counter() - t0
    text = csv_text(("process", "budget", "order", "estimate", "se", "bound", "bound_se", "nn_estimate"), rows)
    CSV_CACHE[(6, threads)] = text
    ok &= dt < 600
    if emit:
        record(6, ok, f"18 cells, max (estimate-bound)/slack = {worst:.2f}, nn <= coordinate-wise everywhere, {dt:.1f}s")
    return ok


def criterion_7():
    t0 = time.perf_counter()
    M, K = 10**4, 4096
    seq = ex.bm_sequence(1.0, K)
    grid = ex.default_grid()
    qs = [pq.build(BM, N, 2.0, depth=K, sequence=seq) for N in (4, 64, 1024)]
    sample = pq.sample_paths(seq, M, K, grid, SEED, keep=max(q.m for q in qs))
    ok, parts = True, []
    for q in qs:
        rep = pq.mc_distortion(q, M, K, SEED, sample=sample)
        exact = pq.l2_product_distortion(q, K)
        z = abs(exact - rep.l2_estimate) / rep.l2_se
        ok &= z <= 3
        parts.append(f"N={q.budget}: |diff|/SE={z:.2f}")
    seq1 = ex.bm_sequence(1.0, 10**4)
    q1 = pq.build(BM, 1, 2.0, depth=10**4, sequence=seq1)
    v1 = pq.l2_product_distortion(q1, 10**4)
    ok &= abs(v1 - 1 / math.sqrt(2)) < 1e-3
    dt = time.perf_counter() - t0
    ok &= dt < 120
    return record(7, ok, ", ".join(parts) + f", N=1 value {v1:.6f}, {dt:.1f}s")


def criterion_8(threads=THREADS_A, emit=True):
    t0 = time.perf_counter()
    ns = [8, 16, 32, 64, 128, 256, 512]
    M, K = 10**4, 8192
    rows, ok, parts = [], True, []
    for name, spec in (("bm", BM), ("ou", OU), ("fbm0.3", FBM3), ("fbm0.7", FBM7)):
        seq = ex.sequence_for(spec, K)
        scan = pq.tail_scan(seq, ns, 2.0, M, K, SEED, ex.default_grid(), threads)
        dom = [env >= t.estimate for t, env in zip(scan.tails, scan.envelope)]
        ok &= all(dom[1:])
        margin = min(env / t.estimate for t, env in zip(scan.tails[1:], scan.envelope[1:]))
        parts.append(f"{name} theta={seq.decay.theta:g} min env/tail={margin:.3f}")
        rows += [(name, t.n, t.estimate, t.se, env) for t, env in zip(scan.tails, scan.envelope)]
    dt = time.perf_counter() - t0
    CSV_CACHE[(8, threads)] = csv_text(("process", "n", "estimate", "se", "envelope"), rows)
    ok &= dt < 300
    if emit:
        record(8, ok, ", ".join(parts) + f", {dt:.1f}s")
    return ok


def criterion_9(threads=THREADS_A, emit=True):
    t0 = time.perf_counter()
    budgets = [2**k for k in range(2, 15)]
    rows, ok, parts = [], True, []
    for name, spec in (("bm", BM), ("fbm0.7", FBM7)):
        reps = pq.rate_scan(spec, budgets, 2.0, M=10**4, K=4096, seed=SEED, threads=threads)
        worst = -np.inf
        for a, b in zip(reps, reps[1:]):
            se = pq.paired_se(b, a)
            ok &= b.estimate <= a.estimate + 3 * se
            worst = max(worst, (b.estimate - a.estimate) / se if se > 0 else 0.0)
        parts.append(f"{name} {reps[0].estimate:.4f}->{reps[-1].estimate:.4f} max step/SE={worst:.2f}")
        rows += [(name, r.budget, r.m, ";".join(map(str, r.levels)), r.estimate, r.ci_low, r.ci_high, r.bound)
                 for r in reps]
    dt = time.perf_counter() - t0
    CSV_CACHE[(9, threads)] = csv_text(("process", "budget", "m", "levels", "estimate", "ci_low", "ci_high", "bound"), rows)
    ok &= dt < 600
    if emit:
        record(9, ok, ", ".join(parts) + f", {dt:.1f}s")
    return ok


def criterion_10():
    same = []
    for n, fn in ((6, criterion_6), (8, criterion_8), (9, criterion_9)):
        for threads in (THREADS_A, THREADS_B):
            if (n, threads) not in CSV_CACHE:
                fn(threads=threads, emit=False)
        same.append(CSV_CACHE[(n, THREADS_A)] == CSV_CACHE[(n, THREADS_B)])
    # Criterion 7 draws through the same sampler; check it on a reduced rerun.
    seq = ex.bm_sequence(1.0, 4096)
    q = pq.build(BM, 64, 2.0, depth=4096, sequence=seq)
    r_a = pq.mc_distortion(q, 2000, 4096, SEED, threads=THREADS_A)
    r_b = pq.mc_distortion(q, 2000, 4096, SEED, threads=THREADS_B)
    same.append(csv_text(r_a.CSV_FIELDS, [r_a.row().values()]) == csv_text(r_b.CSV_FIELDS, [r_b.row().values()]))
    return record(10, all(same), f"thread counts {THREADS_A} vs {THREADS_B}: CSV identical for criteria 6,8,9,7 = {same}")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    assert CRITERIA[n](), RESULTS.get(n)


if __name__ == "__main__":
    results = [CRITERIA[n]() for n in sorted(CRITERIA)]
    raise SystemExit(0 if all(results) else 1)
