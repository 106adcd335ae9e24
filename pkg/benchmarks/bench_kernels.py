"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Kernel timings call both implementations in-process. ``--end-to-end`` also
times a 60-minute batch decode in two subprocesses, one with
UAAD_DISABLE_NUMBA=1.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from uaad import _kernels as k

E2E = """
import time
from uaad import synth, pipeline
segs = synth.generate(synth.SynthConfig(duration=3600, noise_power=8000, seed=0)).segments()
t = time.perf_counter()
pipeline.run_batch(segs)
print(f"{time.perf_counter() - t:.3f}")
"""


def cases(rng):
    C, L, K, T = 24, 17, 2, 64 * 600
    xp = rng.standard_normal((C, T + 64))
    W = rng.standard_normal((K, C, L))
    z = rng.standard_normal((K, T))
    v = rng.standard_normal((K, T))
    starts = np.arange(0, T - 640 + 1, 640, dtype=np.int64)
    y = np.r_[rng.normal(0, 1, 2000), rng.normal(3, 1, 2000)]
    ranks2 = 2 * np.arange(1, 26, dtype=np.int64)
    return {
        "lag_project": (k._np_lag_project, k._nb_lag_project if k.HAVE_NUMBA else None,
                        (xp, W, 40, T)),
        "window_moments": (k._np_window_moments,
                           k._nb_window_moments if k.HAVE_NUMBA else None, (z, v, starts, 640)),
        "em_two_gauss": (k._np_em_two_gauss, k._nb_em_two_gauss if k.HAVE_NUMBA else None,
                         (y, -0.5, 3.5, 1.5, 1.5, 0.5, True, 1e-8, 500, 1e-6)),
        "signed_rank_counts": (k._np_signed_rank_counts,
                               k._nb_signed_rank_counts if k.HAVE_NUMBA else None, (ranks2,)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (f_np, f_nb, a) in cases(rng).items():
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        if f_nb is None:
            print(f"{name:<20}{t_np:>12.3f}{'n/a':>12}")
            continue
        f_nb(*a)  # compile
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<20}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>9.1f}x")
    if args.end_to_end:
        for flag in ("0", "1"):
            env = dict(os.environ, UAAD_DISABLE_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", E2E], env=env, check=True,
                                 capture_output=True, text=True).stdout.strip()
            label = "numpy" if flag == "1" else "numba"
            print(f"run_batch 60 min ({label}): {out} s")


if __name__ == "__main__":
    main()
