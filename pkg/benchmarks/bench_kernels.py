"""Compare the compiled and numpy extremal-functions kernels.

    python benchmarks/bench_kernels.py [--n 20000] [--p 10 30] [--repeat 3]

Both kernels consume the same counter-based variates, so besides timing the
script checks that their outputs agree.
"""

import argparse
import time

import numpy as np

from hrlatent import _backend
from hrlatent.simulate import SyntheticModelSpec, build_synthetic_model, sample_max_stable_hr


def best_time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--p", type=int, nargs="+", default=[10, 30])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    try:
        _backend.get_kernel("compiled")
        have_compiled = True
    except ImportError:
        have_compiled = False
        print("compiled kernels not available; timing the numpy fallback only")

    print(f"{'p':>4} {'n':>8} {'python s':>10} {'compiled s':>11} {'speedup':>8} {'max diff':>9}")
    for p in args.p:
        G = build_synthetic_model(SyntheticModelSpec(p=p, h=1, seed=1)).observed_variogram()
        t_py, x_py = best_time(lambda: sample_max_stable_hr(G, args.n, 0, "python"), args.repeat)
        if have_compiled:
            t_c, x_c = best_time(lambda: sample_max_stable_hr(G, args.n, 0, "compiled"),
                                 args.repeat)
            diff = float(np.max(np.abs(x_py - x_c) / x_c))
            print(f"{p:>4} {args.n:>8} {t_py:>10.3f} {t_c:>11.3f} {t_py / t_c:>7.1f}x {diff:>9.1e}")
        else:
            print(f"{p:>4} {args.n:>8} {t_py:>10.3f} {'-':>11} {'-':>8} {'-':>9}")


if __name__ == "__main__":
    main()
