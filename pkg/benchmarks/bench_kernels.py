"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--n 1000] [--repeat 20] [--fit]

Kernel timings are taken in-process against both modules. The optional
end-to-end fit runs in a subprocess per backend, since the backend is
chosen once at import (``DGMM_PURE_PYTHON=1`` forces the fallback).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dgmm import _kernels_py

try:
    from dgmm import _ext
except ImportError:
    _ext = None

FIT_SNIPPET = """
import time, numpy as np
from dgmm import _kernels
from dgmm.data import generate_smiley
from dgmm.model import DgmmSpec
from dgmm.sem import FitConfig, fit
ds = generate_smiley(1000, rng=np.random.default_rng(0))
t0 = time.perf_counter()
res = fit(DgmmSpec(3, (4, 2), (2, 1)), ds.x, FitConfig(n_starts=2, max_iters=100, seed=0))
print(_kernels.BACKEND, time.perf_counter() - t0, res.loglik)
"""


def kernel_cases(n, rng):
    d, r, K, m = 3, 2, 8, 10
    X = rng.standard_normal((n, d))
    means = rng.standard_normal((K, d))
    A = rng.standard_normal((K, d, d))
    covs = A @ np.swapaxes(A, 1, 2) + np.eye(d)
    chols = np.linalg.cholesky(covs)
    logw = rng.standard_normal((n, K))
    u = rng.random(n)
    Am = rng.standard_normal((K, r, d))
    b = rng.standard_normal((K, r))
    L = np.tril(rng.standard_normal((K, r, r)))
    idx = rng.integers(0, K, n)
    eps = rng.standard_normal((n, m, r))
    ebar = eps.mean(axis=1)
    F = np.tril(rng.standard_normal((n, r, r)))
    return {
        "mvn_logpdf": (X, means, chols),
        "logsumexp_rows": (logw,),
        "categorical": (logw, u),
        "affine_gather": (X, Am, b, L, idx, eps),
        "affine_moments": (X, Am, b, L, idx, eps),
        "affine_moments_stats": (X, Am, b, L, idx, ebar, F),
    }


def bench_kernels(n, repeat):
    cases = kernel_cases(n, np.random.default_rng(0))
    print(f"{'kernel':<22}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}{'max |diff|':>13}")
    for name, args in cases.items():
        py = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: py(*args), number=1, repeat=repeat)) * 1e6
        if _ext is None:
            print(f"{name:<22}{t_py:>14.1f}{'n/a':>14}")
            continue
        cy = getattr(_ext, name)
        t_cy = min(timeit.repeat(lambda: cy(*args), number=1, repeat=repeat)) * 1e6
        a, c = py(*args), cy(*args)
        a = a if isinstance(a, tuple) else (a,)
        c = c if isinstance(c, tuple) else (c,)
        diff = max(float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float)))) for x, y in zip(a, c))
        print(f"{name:<22}{t_py:>14.1f}{t_cy:>14.1f}{t_py / t_cy:>10.1f}{diff:>13.2e}")


def bench_fit():
    print("\nend-to-end fit (smiley n=1000, k=(4,2), r=(2,1), 2 starts, 100 iterations)")
    for pure in ("1", "0"):
        env = {**os.environ, "DGMM_PURE_PYTHON": pure}
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, secs, ll = out.stdout.split()
        print(f"  {backend:<8}{float(secs):8.2f} s   loglik {float(ll):.6f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--fit", action="store_true", help="also time a full fit with each backend")
    args = parser.parse_args()
    bench_kernels(args.n, args.repeat)
    if args.fit:
        bench_fit()


if __name__ == "__main__":
    main()
