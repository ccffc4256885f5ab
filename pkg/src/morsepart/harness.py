"""Experiment drivers shared by the command line and the acceptance tests.

Each driver returns plain result objects; writing files and choosing exit
codes is left to :mod:`morsepart.cli`.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from . import dynamics as dyn
from . import kernel
from .config import ConfigError, config_from_dict
from .reference import (
    barenblatt_density,
    barenblatt_quantile,
    barenblatt_support,
    fd_pme_solve,
    l2_distance,
    l2_distance_to_barenblatt,
)
from .transport import PiecewiseConstantDensity, QuantileFn, wasserstein2


@dataclass
class RunResult:
    N: int
    epsilon: float
    trajectory: object
    report: object

    @property
    def final(self):
        return self.trajectory.final


def run_simulation(cfg, N=None, record_steps=True):
    """Atomize, detach, integrate and check one configuration."""
    N = cfg.require_N() if N is None else N
    eps = cfg.epsilon_for(N)
    x0 = cfg.initial_positions(N)
    s = dyn.ParticleState(x0, 0.0, eps)
    traj = dyn.integrate(
        s,
        cfg.t_end,
        tol=cfg.tolerances,
        snapshots=cfg.snapshot_times(),
        eta=cfg.eta,
        record_steps=record_steps,
    )
    rep = dg.bound_report(traj, tol=cfg.bound_tol, gap_slack=cfg.tolerances.gap_slack)
    return RunResult(N, eps, traj, rep)


def eta_sensitivity(res, cfg, factor=10.0):
    """Largest final-position change when the detachment size is divided by ``factor``."""
    traj = res.trajectory
    if not traj.detached:
        return 0.0
    s = dyn.ParticleState(cfg.initial_positions(res.N), 0.0, res.epsilon)
    other = dyn.integrate(s, cfg.t_end, tol=cfg.tolerances, snapshots=[cfg.t_end], eta=traj.eta / factor)
    return float(np.max(np.abs(other.final.positions - traj.final.positions)))


def _worker(args):
    cfg_dict, N = args
    res = run_simulation(config_from_dict(cfg_dict), N)
    traj = res.trajectory
    # ship back only what the sweeps need
    return {
        "N": N,
        "epsilon": res.epsilon,
        "final": np.array(traj.final.positions),
        "initial": np.array(traj.initial.positions),
        "report_passed": res.report.passed,
        "report_summary": res.report.summary(),
        "failures": [r.name for r in res.report.failures()],
        "accepted": traj.accepted,
        "rejected": traj.rejected,
        "energy": [(r.time, r.bound, r.measured, r.passed) for r in res.report.by_name("energy_inequality")],
    }


def _run_many(cfg, Ns, jobs):
    tasks = [(cfg.to_dict(), int(N)) for N in Ns]
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_worker, tasks))
    else:
        out = [_worker(t) for t in tasks]
    return sorted(out, key=lambda r: r["N"])


def check_doubling(N_list):
    N_list = list(N_list or ())
    if len(N_list) < 2:
        raise ConfigError("N_list needs at least two entries")
    for a, b in zip(N_list, N_list[1:]):
        if b != 2 * a:
            raise ConfigError(f"N_list must double at every step, got {a} -> {b}")
    return N_list


@dataclass
class ConvergenceResult:
    rows: list
    runs: list
    d2_decreasing: bool
    reports_passed: bool

    @property
    def passed(self):
        return self.d2_decreasing and self.reports_passed


def converge_n(cfg, jobs=1):
    """Self-convergence at fixed epsilon: ``d2(rho_N(T), rho_2N(T))`` per N."""
    if cfg.epsilon is None:
        raise ConfigError("converge-n needs a fixed 'epsilon'")
    N_list = check_doubling(cfg.N_list)
    runs = _run_many(cfg, N_list + [2 * N_list[-1]], jobs)
    by_N = {r["N"]: r for r in runs}
    rows = []
    for N in N_list:
        here = by_N[N]
        nxt = by_N[2 * N]
        d2 = wasserstein2(QuantileFn.from_positions(here["final"]), QuantileFn.from_positions(nxt["final"]))
        state = dyn.ParticleState(here["final"], cfg.t_end, here["epsilon"])
        rows.append(
            {
                "N": N,
                "d2_to_next": d2,
                "L2norm": dg.lp_norm(state, 2),
                "entropy": dg.entropy(state),
            }
        )
    d2 = [r["d2_to_next"] for r in rows]
    decreasing = all(b < a for a, b in zip(d2, d2[1:]))
    return ConvergenceResult(rows, runs, decreasing, all(r["report_passed"] for r in runs))


def monotone_with_one_inversion(values, slack=0.05):
    """Decreasing except for at most one increase of at most ``slack`` (relative)."""
    inversions = 0
    for a, b in zip(values, values[1:]):
        if b >= a:
            if b > a * (1.0 + slack):
                return False
            inversions += 1
    return inversions <= 1


@dataclass
class JointLimitResult:
    rows: list
    runs: list
    j3: list
    fd_error: float
    monotone: bool
    halved: bool
    energy_passed: bool

    @property
    def fd_ok(self):
        return self.fd_error <= FD_TOLERANCE

    @property
    def passed(self):
        return self.monotone and self.halved and self.energy_passed and self.fd_ok


FD_TOLERANCE = 5e-3


def fd_reference(t0, T, M=4000):
    """Finite-difference PME solution started from the profile at ``t0``."""
    L = 1.25 * barenblatt_support(t0 + T)[1]
    start = barenblatt_density(t0, np.linspace(-L, L, M + 1))
    return fd_pme_solve(start, T, (-L, L, M))


def joint_limit(cfg, jobs=1, fd_cells=4000):
    """Joint particle/localization limit against the Barenblatt solution."""
    if cfg.epsilon_rule is None:
        raise ConfigError("joint-limit needs 'epsilon_rule'")
    b = cfg.barenblatt
    if b is None:
        raise ConfigError("joint-limit needs the barenblatt preset as initial data")
    N_list = sorted(cfg.N_list or ())
    if len(N_list) < 2:
        raise ConfigError("N_list needs at least two entries")
    j3 = cfg.epsilon_rule.check_j3(N_list)
    t_final = b.t0 + cfg.t_end
    fd = fd_reference(b.t0, cfg.t_end, fd_cells)
    fd_error = l2_distance_to_barenblatt(fd, t_final)
    exact_q = QuantileFn.from_callable(lambda z: barenblatt_quantile(z, t_final), 1 << 16)
    runs = _run_many(cfg, N_list, jobs)
    rows = []
    for r, j in zip(runs, j3):
        state = dyn.ParticleState(r["final"], cfg.t_end, r["epsilon"])
        rho = dg.reconstruct_density(state)
        rows.append(
            {
                "N": r["N"],
                "epsilon": r["epsilon"],
                "j3": j,
                "L2_error_exact": l2_distance_to_barenblatt(rho, t_final),
                "L2_error_fd": l2_distance(rho, fd),
                "d2_error_exact": wasserstein2(QuantileFn.from_positions(r["final"]), exact_q),
                "energy_passed": all(e[3] for e in r["energy"]),
                "energy_worst_margin": min(e[1] - e[2] for e in r["energy"]),
            }
        )
    errs = [row["L2_error_exact"] for row in rows]
    return JointLimitResult(
        rows=rows,
        runs=runs,
        j3=j3,
        fd_error=fd_error,
        monotone=monotone_with_one_inversion(errs),
        halved=errs[-1] <= 0.5 * errs[0],
        energy_passed=all(row["energy_passed"] for row in rows),
    )


# -- randomized invariant suite ------------------------------------------


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    detail: str
    repro: dict = field(default_factory=dict)


def _rel(a, b):
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / scale)


def random_state(rng, N, eps, spread=None, clusters=False):
    spread = rng.uniform(0.2, 5.0) if spread is None else spread
    x = np.sort(rng.uniform(-spread, spread, N + 1))
    if clusters:
        k = int(rng.integers(2, max(3, N // 5)))
        start = int(rng.integers(0, N + 1 - k))
        x[start : start + k] = x[start]
    return dyn.ParticleState(x, 0.0, eps)


def random_density(rng, m):
    b = np.cumsum(rng.uniform(0.01, 1.0, m + 1))
    b -= b.mean()
    v = rng.uniform(0.05, 1.0, m)
    v /= np.sum(v * np.diff(b))
    return PiecewiseConstantDensity(b, v)


def _check_kernel_derivatives(rng):
    eps = float(rng.uniform(0.1, 2.0))
    x = rng.uniform(0.05, 3.0, 32) * rng.choice([-1.0, 1.0], 32)
    h = 1e-6 * eps
    fd1 = (kernel.w(eps, x + h) - kernel.w(eps, x - h)) / (2 * h)
    got1 = kernel.w_prime(eps, x)
    err1 = _rel(got1, fd1)
    fd2 = (kernel.w_prime(eps, x + h) - kernel.w_prime(eps, x - h)) / (2 * h)
    err2 = _rel(kernel.w_second(eps, x), fd2)
    ok = err1 < 1e-6 and err2 < 1e-6
    return CheckOutcome(
        "kernel_derivatives", ok, f"rel err w'={err1:.2e}, w''={err2:.2e}", {"epsilon": eps, "x": x.tolist()}
    )


def _check_cell_integrals(rng):
    # Gauss-Legendre quadrature of w' itself over cells on one side of x
    eps = float(rng.uniform(0.1, 2.0))
    gx, gw = np.polynomial.legendre.leggauss(40)
    worst = 0.0
    for _ in range(8):
        a, b = np.sort(rng.uniform(-2, 2, 2))
        x = b + rng.uniform(0.01, 1.0) if rng.random() < 0.5 else a - rng.uniform(0.01, 1.0)
        y = 0.5 * (a + b) + 0.5 * (b - a) * gx
        quad = 0.5 * (b - a) * np.sum(gw * kernel.w_prime(eps, x - y))
        got = kernel.cell_integral(eps, a, b, x, order=1)
        worst = max(worst, abs(got - quad) / max(abs(quad), 1e-12))
    return CheckOutcome("cell_integral_order1", worst < 1e-9, f"rel err {worst:.2e}", {"epsilon": eps})


def _check_rhs(rng, N):
    eps = float(rng.uniform(0.05, 2.0))
    s = random_state(rng, N, eps)
    err = _rel(dyn.rhs_difference_quotient(s), dyn.rhs_convolution(s))
    return CheckOutcome("rhs_equivalence", err <= 1e-12, f"N={N} eps={eps:.3g} rel={err:.2e}",
                        {"N": N, "epsilon": eps, "positions": s.positions.tolist()})


def _check_elliptic(rng, m):
    eps = float(rng.uniform(0.05, 2.0))
    d = random_density(rng, m)
    q = 0.5 * (d.breakpoints[:-1] + d.breakpoints[1:])
    k = kernel.Kernel(eps)
    lhs = -eps ** 2 * kernel.conv_density(k, d, q, 2) + kernel.conv_density(k, d, q, 0)
    err = float(np.max(np.abs(lhs - d.values)))
    return CheckOutcome("elliptic_identity", err <= 1e-10, f"cells={m} eps={eps:.3g} abs={err:.2e}",
                        {"cells": m, "epsilon": eps})


def _check_scan_vs_direct(rng, m):
    eps = float(rng.uniform(0.05, 2.0))
    d = random_density(rng, m)
    lo, hi = d.breakpoints[0], d.breakpoints[-1]
    q = np.sort(rng.uniform(lo - 1, hi + 1, min(m, 500)))
    k = kernel.Kernel(eps)
    worst = max(_rel(kernel.conv_density(k, d, q, o), kernel.conv_density_direct(k, d, q, o)) for o in (0, 1, 2))
    return CheckOutcome("scan_vs_direct", worst <= 1e-12, f"cells={m} eps={eps:.3g} rel={worst:.2e}",
                        {"cells": m, "epsilon": eps})


def direct_energy(s):
    """O(N^2) double sum of exact cell-pair integrals."""
    eps = s.epsilon
    rho = dg.reconstruct_density(s)
    a, b, R = rho.breakpoints[:-1], rho.breakpoints[1:], rho.values
    w = b - a
    g = -np.expm1(-w / eps)
    sep = np.maximum(a[None, :] - b[:, None], a[:, None] - b[None, :])
    pair = 0.5 * eps * g[:, None] * g[None, :] * np.exp(-np.maximum(sep, 0.0) / eps)
    np.fill_diagonal(pair, w - eps * g)
    return 0.5 * float(R @ pair @ R)


def direct_dissipation(s, per_eps=8, order=12):
    """Composite Gauss quadrature of ``rho (w' * rho)^2`` with the O(N^2) convolution."""
    eps = s.epsilon
    rho = dg.reconstruct_density(s)
    gx, gw = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for a, b, R in zip(rho.breakpoints[:-1], rho.breakpoints[1:], rho.values):
        n = max(1, int(np.ceil((b - a) * per_eps / eps)))
        e = np.linspace(a, b, n + 1)
        mid, half = 0.5 * (e[:-1] + e[1:]), 0.5 * np.diff(e)
        y = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        F = kernel.conv_density_direct(eps, rho, y, order=1).reshape(n, order)
        total += R * float(np.sum(np.sum(F * F * gw[None, :], axis=1) * half))
    return total


def _check_energy_dissipation(rng, N):
    N = min(N, 500)
    eps = float(rng.uniform(0.05, 2.0))
    s = random_state(rng, N, eps)
    e_err = abs(dg.interaction_energy(s) - direct_energy(s)) / abs(direct_energy(s))
    n_small = min(N, 60)
    s_small = random_state(rng, n_small, eps)
    dd = direct_dissipation(s_small)
    d_err = abs(dg.dissipation(s_small) - dd) / abs(dd)
    ok = e_err <= 1e-10 and d_err <= 1e-10
    return CheckOutcome("energy_dissipation_vs_direct", ok, f"N={N} energy rel={e_err:.2e}, dissipation rel={d_err:.2e}",
                        {"N": N, "epsilon": eps})


def _check_cone(rng, n):
    eps = float(rng.uniform(0.05, 2.0))
    x = np.sort(rng.normal(size=min(n, 500)) * rng.uniform(0.1, 3))
    nv, rv = dg.cone_identity_check(x, eps)
    scale = dg.cone_identity_scale(x, eps)
    err = abs(nv - rv) / scale
    y = rng.permutation(x)
    ns, rs = dg.cone_identity_check(y, eps, require_sorted=False)
    differs = abs(ns - rs) / scale > 1e-9 or np.all(np.diff(y) >= 0)
    return CheckOutcome("cone_identity", err <= 1e-12 and differs, f"n={x.size} rel={err:.2e} shuffled differs={differs}",
                        {"epsilon": eps, "x": x.tolist()})


_RUN_CHECKS = (
    "mass", "gap_lower_bound", "gap_lower_bound_steps", "lp_monotone_2", "lp_monotone_3",
    "lp_monotone_inf", "entropy_decay", "entropy_identity", "entropy_production_sign",
    "lp_bound_2", "lp_bound_3", "lp_bound_inf", "smoothing_2", "smoothing_3", "smoothing_inf",
)


def _check_run(rng, N):
    N = min(N, 400)
    eps = float(rng.uniform(0.2, 1.0))
    s = random_state(rng, N, eps, clusters=True)
    traj = dyn.integrate(s, 0.2, snapshots=np.linspace(0.01, 0.2, 20), record_steps=True)
    rep = dg.bound_report(traj)
    bad = sorted({r.name for r in rep.failures() if r.name in _RUN_CHECKS})
    return CheckOutcome("run_invariants", not bad, f"N={N} eps={eps:.3g} failed={bad}",
                        {"N": N, "epsilon": eps, "positions": s.positions.tolist(), "t_end": 0.2})


def _check_weak(rng):
    N, eps = 100, 0.3
    cfg = config_from_dict({"initial": {"preset": "uniform"}, "N": N, "epsilon": eps, "t_end": 0.5})
    res = run_simulation(cfg)
    phi = dg.Bump(radius=float(rng.uniform(0.8, 1.5)), center=float(rng.uniform(-0.3, 0.3)))
    resid, bound = dg.weak_residual(res.trajectory, phi, phi.derivative, (0.0, 0.5))
    return CheckOutcome("weak_residual", resid <= 1.1 * bound, f"residual={resid:.3e} bound={bound:.3e}",
                        {"N": N, "epsilon": eps, "radius": phi.radius, "center": phi.center})


def verify_suite(seed=0, sizes=(10, 100, 500)):
    """Run every randomized invariant check; returns a list of outcomes."""
    rng = np.random.default_rng(seed)
    out = [_check_kernel_derivatives(rng), _check_cell_integrals(rng)]
    for n in sizes:
        out.append(_check_rhs(rng, n))
        out.append(_check_elliptic(rng, n))
        out.append(_check_scan_vs_direct(rng, n))
        out.append(_check_energy_dissipation(rng, n))
        out.append(_check_cone(rng, n))
        out.append(_check_run(rng, n))
    out.append(_check_weak(rng))
    return out


FAULT_ENV = "MORSEPART_INJECT_FAULT"


def inject_fault(name):
    """Deliberately break the package in-process (negative controls only)."""
    if name in (None, ""):
        return
    if name == "w_prime_sign":
        original = kernel.w_prime
        kernel.w_prime = lambda k, x: -original(k, x)
        return
    raise ConfigError(f"unknown fault {name!r}")


def default_output_dir():
    return os.environ.get("MORSEPART_OUT", "morsepart_out")
