"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 20000] [--repeat 5]

Each kernel runs on identical inputs under both backends; the table reports
the best wall time and the largest absolute difference between outputs.
"""

import argparse
import time

import numpy as np

from skewfa import _pykernels
from skewfa._orthant import chi_rule

try:
    from skewfa import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(n, rng):
    R2 = np.array([[1.0, -0.4], [-0.4, 1.0]])
    R3 = np.array([[1.0, 0.3, -0.2], [0.3, 1.0, 0.5], [-0.2, 0.5, 1.0]])
    h, k = rng.normal(size=(2, n))
    H1, H2, H3 = (rng.normal(size=(n // 20, r)) for r in (1, 2, 3))
    s, w = chi_rule(5.0)
    W = np.column_stack([w, w * s * s])
    return [
        ("bvn_cdf", lambda m: m.bvn_cdf(h, k, -0.4)),
        ("tvn_cdf", lambda m: m.tvn_cdf(H3 * 1.0, R3)),
        ("phi_grid r=1", lambda m: m.phi_grid(H1, s, np.eye(1))),
        ("phi_grid r=2", lambda m: m.phi_grid(H2, s, R2)),
        ("mixture_sums r=2", lambda m: m.mixture_sums(H2, s, W, R2)),
        ("mixture_sums r=3", lambda m: m.mixture_sums(H3, s, W, R3)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max |diff|':>13}")
    for name, call in cases(args.n, rng):
        tp, op = best_time(lambda: call(_pykernels), args.repeat)
        tc, oc = best_time(lambda: call(_ckernels), args.repeat)
        diff = float(np.max(np.abs(np.asarray(op) - np.asarray(oc))))
        print(f"{name:<18}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x{diff:>13.2e}")


if __name__ == "__main__":
    main()
