"""Acceptance criteria A1-A10, each at its stated tolerance and time budget."""
import time

import numpy as np
import pytest

from morsepart import diagnostics as dg
from morsepart import harness
from morsepart.config import config_from_dict, experiment_config
from morsepart.dynamics import ParticleState, gap_lower_bound, integrate, rhs_convolution, rhs_difference_quotient

SEED = 20240601


def random_positions(rng, N, clusters):
    x = np.sort(rng.uniform(-1.0, 1.0, N + 1) * rng.uniform(0.3, 3.0))
    if clusters:
        k = int(rng.integers(2, max(3, N // 4)))
        i = int(rng.integers(0, N + 2 - k))
        x[i : i + k] = x[i]
    return x


@pytest.fixture(scope="module")
def random_runs():
    """A2's twenty runs, shared with A4."""
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    runs = []
    for k in range(20):
        N = int(rng.integers(2, 201))
        eps = float(rng.uniform(0.1, 1.0))
        s = ParticleState(random_positions(rng, N, clusters=k % 2 == 1), 0.0, eps)
        tr = integrate(s, 1.0, snapshots=np.linspace(0.01, 1.0, 100), record_steps=True)
        runs.append(tr)
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def dirac_run():
    cfg = experiment_config("smoothing")
    t0 = time.perf_counter()
    res = harness.run_simulation(cfg)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def joint():
    t0 = time.perf_counter()
    res = harness.joint_limit(experiment_config("joint_limit"))
    return res, time.perf_counter() - t0


def test_A1_rhs_equivalence(criterion):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        N = int(np.exp(rng.uniform(np.log(10), np.log(2000))))
        eps = float(rng.uniform(0.05, 2.0))
        x = np.sort(rng.uniform(-1, 1, N + 1) * rng.uniform(0.1, 10))
        s = ParticleState(x, 0.0, eps)
        a, b = rhs_difference_quotient(s), rhs_convolution(s)
        worst = max(worst, np.max(np.abs(a - b)) / np.max(np.abs(b)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    criterion("A1", ok, f"worst relative difference {worst:.2e} (<= 1e-12) in {elapsed:.1f}s (< 10s)")
    assert ok


def test_A2_gap_bound(random_runs, criterion):
    runs, elapsed = random_runs
    worst = np.inf
    for tr in runs:
        d0 = tr.initial.gaps
        for st in tr.dense:
            ratio = np.min(st.gaps / gap_lower_bound(st.time - tr.initial.time, d0, tr.epsilon, tr.N))
            worst = min(worst, ratio)
        worst = min(worst, min(tr.steps.min_gap_ratio))
    ok = worst >= 0.9 and elapsed < 60
    criterion("A2", ok, f"smallest gap / bound over 20 runs {worst:.4f} (>= 0.9) in {elapsed:.1f}s (< 60s)")
    assert ok


def test_A3_smoothing(dirac_run, criterion):
    res, elapsed = dirac_run
    eps = 0.2
    worst = 0.0
    for st in res.trajectory.states[1:]:
        bound = 1.0 / (2 * eps * -np.expm1(-st.time / (2 * eps ** 3)))
        worst = max(worst, dg.lp_norm(st, np.inf) / bound)
    ok = worst <= 1.05 and len(res.trajectory.states) == 101 and elapsed < 30
    criterion("A3", ok, f"max |rho|_inf / bound {worst:.4f} (<= 1.05) in {elapsed:.1f}s (< 30s)")
    assert ok


A4_CHECKS = ("mass", "lp_monotone_2", "entropy_decay", "entropy_identity")


def test_A4_monotone_functionals(random_runs, dirac_run, criterion):
    reports = [dg.bound_report(tr) for tr in random_runs[0]] + [dirac_run[0].report]
    failed = sorted({r.name for rep in reports for r in rep.failures() if r.name in A4_CHECKS})
    worst = {n: max(r.measured - r.bound for rep in reports for r in rep.by_name(n)) for n in A4_CHECKS}
    ident = max(r.measured for rep in reports for r in rep.by_name("entropy_identity"))
    mass = max(r.measured for rep in reports for r in rep.by_name("mass"))
    ok = not failed
    criterion("A4", ok, f"{len(reports)} runs: mass err {mass:.1e}, worst L2 rise {worst['lp_monotone_2']:.1e}, "
              f"worst entropy rise {worst['entropy_decay']:.1e}, identity err {ident:.1e}; failed={failed}")
    assert ok


def test_A5_self_convergence_uniform(criterion):
    t0 = time.perf_counter()
    res = harness.converge_n(experiment_config("converge_uniform"))
    elapsed = time.perf_counter() - t0
    d2 = [r["d2_to_next"] for r in res.rows]
    ok = res.d2_decreasing and elapsed < 300
    criterion("A5", ok, "d2 " + ", ".join(f"{v:.3e}" for v in d2) + f" strictly decreasing in {elapsed:.1f}s")
    assert ok


def test_A6_measure_data(criterion):
    t0 = time.perf_counter()
    res = harness.converge_n(experiment_config("converge_two_diracs"))
    elapsed = time.perf_counter() - t0
    d2 = [r["d2_to_next"] for r in res.rows]
    failures = sorted({f for r in res.runs for f in r["failures"]})
    ok = res.d2_decreasing and res.reports_passed and elapsed < 300
    criterion("A6", ok, "d2 " + ", ".join(f"{v:.3e}" for v in d2)
              + f"; bound checks failed={failures} in {elapsed:.1f}s")
    assert ok


def test_A7_joint_limit(joint, criterion):
    res, elapsed = joint
    errs = [r["L2_error_exact"] for r in res.rows]
    ratio = errs[-1] / errs[0]
    ok = res.monotone and res.halved and res.fd_ok and elapsed < 900
    criterion("A7", ok, "L2 errors " + ", ".join(f"{e:.4e}" for e in errs)
              + f"; monotone={res.monotone}; N=400/N=50 ratio {ratio:.3f} (<= 0.5); "
              f"FD vs exact {res.fd_error:.2e} (<= 5e-3) in {elapsed:.1f}s")
    assert res.monotone
    assert res.fd_ok
    assert ratio <= 0.5, f"N=400 error is {ratio:.3f} of the N=50 error"


def test_A8_weak_residual(criterion):
    t0 = time.perf_counter()
    cfg = config_from_dict({"initial": {"preset": "uniform"}, "N": 100, "epsilon": 0.3, "t_end": 0.5})
    res = harness.run_simulation(cfg)
    phi = dg.Bump(radius=1.2)
    resid, bound = dg.weak_residual(res.trajectory, phi, phi.derivative, (0.0, 0.5))
    elapsed = time.perf_counter() - t0
    ok = resid <= 1.1 * bound and elapsed < 30
    criterion("A8", ok, f"residual {resid:.3e} <= 1.1 * {bound:.3e} in {elapsed:.1f}s")
    assert ok


def test_A9_cone_identity(criterion):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = 0.0
    shuffled_fail = 0
    for _ in range(500):
        n = int(rng.integers(2, 60))
        eps = float(rng.uniform(0.05, 2.0))
        x = np.sort(rng.normal(size=n) * rng.uniform(0.1, 5))
        nv, rv = dg.cone_identity_check(x, eps)
        scale = dg.cone_identity_scale(x, eps)
        worst = max(worst, abs(nv - rv) / scale)
        y = rng.permutation(x)
        while np.all(np.diff(y) >= 0):
            y = rng.permutation(x)
        ns, rs = dg.cone_identity_check(y, eps, require_sorted=False)
        shuffled_fail += abs(ns - rs) / scale > 1e-9
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and shuffled_fail == 500 and elapsed < 5
    criterion("A9", ok, f"sorted worst relative gap {worst:.1e} (<= 1e-12); identity fails on "
              f"{shuffled_fail}/500 shuffled copies in {elapsed:.1f}s")
    assert ok


def test_A10_energy_inequality(joint, criterion):
    res, _ = joint
    per_run = [f"N={r['N']}: {'pass' if r['energy_passed'] else 'FAIL'} (margin {r['energy_worst_margin']:.2e})"
               for r in res.rows]
    ok = res.energy_passed
    criterion("A10", ok, "; ".join(per_run))
    assert ok
