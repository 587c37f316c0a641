"""Numba loop kernels against their numpy formulations, plus end-to-end sweeps.

Run with ``python3 benchmarks/bench_kernels.py``. The end-to-end part shows
how little the kernels matter once LAPACK calls dominate.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from flatskin import _accel
from flatskin._kernels import KERNELS
from flatskin.model import builtin_flatband3
from flatskin.spectra import pbc_bands


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    spec = builtin_flatband3()
    H0, Tp, Tm = spec.blocks((-1.06, -0.3, 0.9, 0.32))
    bands = pbc_bands(spec, (-1.06, -0.3, 0.9, 0.32), 2001)
    curve = np.exp(1j * np.linspace(0, 2 * np.pi, 20000, endpoint=False))
    vec = rng.standard_normal(6000) + 1j * rng.standard_normal(6000)
    return {
        "polygon_winding": (curve.real.copy(), curve.imag.copy(), 0.1, -0.2),
        "track_bands": (bands.values.copy(), bands.vectors.copy(), 1e-12),
        "assemble_chain": (H0, Tp, Tm, 200, False),
        "shuffle_matrix": (200,),
        "weighted_site_sum": (vec,),
    }


def run_kernels(repeat):
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    print(f"{'kernel':<20}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for name, (loop, vec) in KERNELS.items():
        args = cases[name]
        t_np = best_of(lambda: vec(*args), repeat)
        if _accel.HAVE_NUMBA:
            t_nb = best_of(lambda: loop(*args), repeat)
            print(f"{name:<20}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>10.1f}")
        else:
            print(f"{name:<20}{'n/a':>12}{1e3 * t_np:>12.3f}{'':>10}")


END_TO_END = """
import time
from flatskin.model import builtin_flatband3
from flatskin.response import chi_map
from flatskin.spectra import pbc_bands, pointgap_encloses
import numpy as np
spec = builtin_flatband3()
t0 = time.perf_counter()
chi_map(spec, (-1.06, -0.3, 0.5, 0.32), np.linspace(0, 2, 21), np.linspace(0, 2, 21), 20)
t1 = time.perf_counter()
for g1 in np.linspace(0.05, 2, 40):
    pointgap_encloses(pbc_bands(spec, (-1.06, -0.3, g1, 0.32), 801))
t2 = time.perf_counter()
print(f"{t1 - t0:.3f} {t2 - t1:.3f}")
"""


def run_end_to_end():
    print("\nend-to-end (fresh interpreter each, compile cache warm after first run)")
    print(f"{'backend':<10}{'chi 21x21 [s]':>16}{'40 windings [s]':>18}")
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, FLATSKIN_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"{label:<10}{float(out[0]):>16.3f}{float(out[1]):>18.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()
    print(f"numba available: {_accel.HAVE_NUMBA}; active backend: {_accel.backend()}\n")
    run_kernels(args.repeat)
    if not args.skip_end_to_end:
        run_end_to_end()


if __name__ == "__main__":
    main()
