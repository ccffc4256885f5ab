"""Command line entry point: ``morsepart {simulate,converge-n,joint-limit,verify}``.

Exit codes: 0 success, 2 configuration error, 3 integration failure,
4 a checked bound or property failed.
"""
import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import harness
from .config import experiment_config, parse_config, serialize_config
from .diagnostics import reconstruct_density
from .errors import ConfigError, IntegrationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_CHECK = 4


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, header, rows, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def write_trajectory(path, traj):
    N = traj.N
    header = ["t"] + [f"x{i}" for i in range(N + 1)]
    rows = ([t] + list(s.positions) for t, s in zip(traj.times, traj.states))
    write_csv(path, header, rows)


def write_density(path, state):
    rho = reconstruct_density(state)
    comment = f"N={state.N} epsilon={_fmt(state.epsilon)} t={_fmt(state.time)}"
    b = rho.breakpoints
    v = np.append(rho.values, 0.0)
    write_csv(path, ["breakpoint", "value"], zip(b, v), comment)


def _load_config(args):
    if args.experiment and args.config:
        raise ConfigError("use either --config or --experiment")
    if args.experiment:
        cfg = experiment_config(args.experiment)
    elif args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = parse_config(text)
    else:
        raise ConfigError("a --config file or --experiment name is required")
    return cfg


def _out_dir(args, cfg=None):
    out = args.out or (cfg.output_dir if cfg is not None else None) or harness.default_output_dir()
    os.makedirs(out, exist_ok=True)
    return out


def _manifest(cfg, command, args, extra=None):
    info = {
        "command": command,
        "config": json.loads(serialize_config(cfg)),
        "seed": args.seed if args.seed is not None else cfg.seed,
        "jobs": args.jobs,
        "numba": os.environ.get("MORSEPART_NUMBA", "1"),
    }
    info.update(extra or {})
    return info


def cmd_simulate(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    res = harness.run_simulation(cfg)
    traj, rep = res.trajectory, res.report
    write_trajectory(os.path.join(out, "trajectory.csv"), traj)
    write_density(os.path.join(out, "density_final.csv"), traj.final)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(rep.to_json())
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write(rep.to_csv())
    write_json(
        os.path.join(out, "summary.json"),
        _manifest(
            cfg,
            "simulate",
            args,
            {
                "N": res.N,
                "epsilon": res.epsilon,
                "accepted_steps": traj.accepted,
                "rejected_steps": traj.rejected,
                "detached": traj.detached,
                "eta": traj.eta,
                "eta_sensitivity": harness.eta_sensitivity(res, cfg),
                "report": rep.summary(),
            },
        ),
    )
    print(f"simulate N={res.N} eps={res.epsilon:.6g}: {traj.accepted} steps, checks "
          f"{'passed' if rep.passed else 'FAILED'}")
    for r in rep.failures():
        print(f"  FAIL {r.name} t={r.time:.6g} measured={r.measured:.6g} bound={r.bound:.6g}")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_converge(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    res = harness.converge_n(cfg, jobs=args.jobs)
    header = ["N", "d2_to_next", "L2norm", "entropy"]
    write_csv(os.path.join(out, "convergence.csv"), header, ([r[k] for k in header] for r in res.rows))
    write_json(
        os.path.join(out, "summary.json"),
        _manifest(
            cfg,
            "converge-n",
            args,
            {
                "d2_decreasing": res.d2_decreasing,
                "reports_passed": res.reports_passed,
                "runs": [{"N": r["N"], "failures": r["failures"], "report": r["report_summary"]} for r in res.runs],
            },
        ),
    )
    for r in res.rows:
        print(f"N={r['N']:6d} d2_to_next={r['d2_to_next']:.6e} L2={r['L2norm']:.6g} entropy={r['entropy']:.6g}")
    d2 = [r["d2_to_next"] for r in res.rows]
    ratios = [b / a for a, b in zip(d2, d2[1:])]
    print("d2 ratios: " + ", ".join(f"{x:.3f}" for x in ratios))
    if not res.d2_decreasing:
        print("FAIL d2 self-convergence is not strictly decreasing")
    for r in res.runs:
        if r["failures"]:
            print(f"FAIL N={r['N']} bound checks: {sorted(set(r['failures']))}")
    return EXIT_OK if res.passed else EXIT_CHECK


def cmd_joint(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    res = harness.joint_limit(cfg, jobs=args.jobs, fd_cells=args.fd_cells)
    header = ["N", "epsilon", "j3", "L2_error_exact", "L2_error_fd", "d2_error_exact",
              "energy_passed", "energy_worst_margin"]
    write_csv(os.path.join(out, "joint_limit.csv"), header, ([r[k] for k in header] for r in res.rows))
    checks = {
        "monotone": res.monotone,
        "halved": res.halved,
        "energy_passed": res.energy_passed,
        "fd_crosscheck": res.fd_ok,
    }
    write_json(
        os.path.join(out, "summary.json"),
        _manifest(cfg, "joint-limit", args, {"fd_error": res.fd_error, "checks": checks, "j3": res.j3}),
    )
    for r in res.rows:
        print(f"N={r['N']:6d} eps={r['epsilon']:.4f} 1/(N eps^3)={r['j3']:.4g} "
              f"L2 err={r['L2_error_exact']:.5e} (vs FD {r['L2_error_fd']:.5e})")
    print(f"FD reference vs exact: {res.fd_error:.3e}")
    for name, ok in checks.items():
        print(f"{'ok  ' if ok else 'FAIL'} {name}")
    return EXIT_OK if res.passed else EXIT_CHECK


def cmd_verify(args):
    seed = 0 if args.seed is None else args.seed
    sizes = tuple(args.sizes) if args.sizes else (10, 100, 500)
    if any(n < 2 for n in sizes):
        raise ConfigError("--sizes must all be at least 2")
    t0 = time.perf_counter()
    outcomes = harness.verify_suite(seed, sizes)
    failed = [o for o in outcomes if not o.passed]
    for o in outcomes:
        print(f"{'ok  ' if o.passed else 'FAIL'} {o.name}: {o.detail}")
    print(f"{len(outcomes) - len(failed)}/{len(outcomes)} checks passed in {time.perf_counter() - t0:.1f}s")
    if failed:
        print("minimal reproduction:")
        o = failed[0]
        print(json.dumps({"seed": seed, "sizes": list(sizes), "check": o.name, "params": o.repro},
                         sort_keys=True, default=float))
        return EXIT_CHECK
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="morsepart", description="Deterministic particle solver for the 1D quadratic PME.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON run configuration")
            sp.add_argument("--experiment", help="named built-in experiment")
        sp.add_argument("--out", help="output directory (default: $MORSEPART_OUT or ./morsepart_out)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for N sweeps")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--inject-fault", default=os.environ.get(harness.FAULT_ENV), help=argparse.SUPPRESS)

    common(sub.add_parser("simulate", help="run one configuration and check its bounds"))
    common(sub.add_parser("converge-n", help="self-convergence in N at fixed epsilon"))
    jl = sub.add_parser("joint-limit", help="joint N, epsilon limit against the Barenblatt solution")
    common(jl)
    jl.add_argument("--fd-cells", type=int, default=4000, help="cells of the finite-difference reference")
    vf = sub.add_parser("verify", help="randomized invariant checks")
    common(vf, config=False)
    vf.add_argument("--sizes", type=int, nargs="+", help="particle counts to exercise")
    return p


COMMANDS = {"simulate": cmd_simulate, "converge-n": cmd_converge, "joint-limit": cmd_joint, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        harness.inject_fault(args.inject_fault)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
