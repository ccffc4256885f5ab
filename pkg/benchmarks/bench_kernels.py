"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--sizes 1000 10000 100000] [--repeat 20]

The first numba call (compilation, or loading from the on-disk cache) is
reported separately and excluded from the timings.  The last table times a
whole integration in two subprocesses, one per MORSEPART_NUMBA setting.
"""
import argparse
import os
import subprocess
import sys
from timeit import default_timer as timer

import numpy as np

from morsepart import _scan


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = timer()
        fn(*args)
        times.append(timer() - t0)
    return min(times)


def kernel_cases(n, rng):
    d = rng.uniform(1e-3, 1.0, n)
    c = rng.uniform(0.0, 1.0, n)
    rho = np.maximum(0.5 - np.linspace(-1, 1, n) ** 2, 0.0)
    return {
        "exp_scan_left": (_scan.exp_scan_left_nb, _scan.exp_scan_left_np, (d, c, 0.3)),
        "exp_scan_right": (_scan.exp_scan_right_nb, _scan.exp_scan_right_np, (d, c, 0.3)),
        "gap_field": (_scan.gap_field_nb, _scan.gap_field_np, (d, 0.3, float(n))),
        "pme_steps(x10)": (_scan.pme_steps_nb, _scan.pme_steps_np, (rho, 0.1, 10)),
    }


INTEGRATE = (
    "import numpy as np, time\n"
    "from morsepart import ParticleState, integrate\n"
    "s = ParticleState(np.linspace(-1, 1, {n} + 1), 0.0, 0.3)\n"
    "integrate(s, 0.01, snapshots=[0.01])\n"
    "t0 = time.perf_counter()\n"
    "tr = integrate(s, 0.5, snapshots=[0.5])\n"
    "print(time.perf_counter() - t0, tr.accepted)\n"
)


def time_integration(n, flag):
    env = dict(os.environ, MORSEPART_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", INTEGRATE.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    secs, steps = out.stdout.split()
    return float(secs), int(steps)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[1000, 10000, 100000])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--integrate-sizes", type=int, nargs="+", default=[200, 2000])
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)

    warm = kernel_cases(8, rng)
    t0 = timer()
    for nb, _, a in warm.values():
        nb(*a)
    print(f"numba first-call overhead: {timer() - t0:.3f} s\n")

    print(f"{'kernel':<16}{'n':>9}{'numba [us]':>14}{'numpy [us]':>14}{'speedup':>10}")
    for n in args.sizes:
        for name, (nb, npy, a) in kernel_cases(n, rng).items():
            t_nb = best_of(nb, a, args.repeat)
            t_np = best_of(npy, a, args.repeat)
            print(f"{name:<16}{n:>9}{t_nb * 1e6:>14.1f}{t_np * 1e6:>14.1f}{t_np / t_nb:>10.2f}")

    print(f"\n{'integrate to t=0.5':<20}{'N':>7}{'steps':>8}{'numba [s]':>12}{'numpy [s]':>12}")
    for n in args.integrate_sizes:
        t_nb, steps = time_integration(n, "1")
        t_np, _ = time_integration(n, "0")
        print(f"{'':<20}{n:>7}{steps:>8}{t_nb:>12.3f}{t_np:>12.3f}")


if __name__ == "__main__":
    main()
