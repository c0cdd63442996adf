"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--slots N] [--samples N] [--repeat R]

Prints one CSV row per (kernel, size) with the best-of-R wall time of each
path and the speedup.  JIT compilation is excluded by a warm-up call.
"""
import argparse
import csv
import sys
import timeit

import numpy as np

from winkurt import _accel


def best_time(fn, repeat):
    fn()  # warm-up / JIT
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_window_sums(slots, windows, repeat, rng):
    sp = rng.exponential(2.0, slots)
    for w in windows:
        t_np = best_time(lambda: _accel.window_sums_numpy(sp, w, 100, False), repeat)
        t_nb = best_time(lambda: _accel.window_sums_numba(sp, w, 100, False), repeat)
        yield "window_sums", f"slots={slots} w={w}", t_np, t_nb


def bench_kerr(samples, repeat, rng):
    f = rng.standard_normal((2, samples)) + 1j * rng.standard_normal((2, samples))
    work = f.copy()
    t_np = best_time(lambda: _accel.kerr_phase_numpy(work, 1e-3), repeat)
    t_nb = best_time(lambda: _accel.kerr_phase_numba(work, 1e-3), repeat)
    yield "kerr_phase", f"samples={samples}", t_np, t_nb


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=2**20)
    ap.add_argument("--samples", type=int, default=2**18)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    wr = csv.writer(sys.stdout, lineterminator="\n")
    wr.writerow(["kernel", "size", "numpy_s", "numba_s", "speedup"])
    rows = list(bench_window_sums(args.slots, (1, 16, 256), args.repeat, rng))
    rows += list(bench_kerr(args.samples, args.repeat, rng))
    for name, size, t_np, t_nb in rows:
        wr.writerow([name, size, f"{t_np:.5f}", f"{t_nb:.5f}", f"{t_np / t_nb:.2f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
