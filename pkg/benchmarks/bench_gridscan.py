"""Compare the compiled and numpy grid kernels on identical workloads.

Loads both kernel modules directly (bypassing the import-time backend
selection), times the per-direction mutual-information sweep at several grid
sizes, and checks the results agree.  Run as a script:

    python benchmarks/bench_gridscan.py [--sizes 2000,10000,50000] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qkdlab import _gridscan_py
from qkdlab.gridscan import build_grid

try:
    from qkdlab import _gridscan as _compiled
except ImportError:
    _compiled = None


def make_workload(rng: np.random.Generator, members: int = 4):
    """Random qubit ensemble as Bloch vectors plus weights."""
    vecs = rng.normal(size=(members, 3))
    vecs *= (rng.uniform(0.2, 1.0, size=members) / np.linalg.norm(vecs, axis=1))[:, None]
    probs = rng.dirichlet(np.ones(members))
    return np.ascontiguousarray(vecs), np.ascontiguousarray(probs)


def time_kernel(kernel, dirs, bloch, probs, repeats: int) -> tuple[float, np.ndarray]:
    out = np.empty(dirs.shape[0], dtype=np.float64)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        kernel.grid_mutual_info(dirs, bloch, probs, out)
        best = min(best, time.perf_counter() - t0)
    return best, out.copy()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="2000,10000,50000",
                        help="comma-separated grid sizes")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats; the minimum is reported")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    rng = np.random.default_rng(42)
    bloch, probs = make_workload(rng)

    if _compiled is None:
        print("compiled kernel not built; timing the numpy fallback only")
    header = f"{'grid':>8} {'numpy':>12} {'compiled':>12} {'speedup':>8} {'max|diff|':>10}"
    print(header)
    print("-" * len(header))
    for size in sizes:
        dirs = np.ascontiguousarray(build_grid(size))
        t_py, out_py = time_kernel(_gridscan_py, dirs, bloch, probs, args.repeats)
        if _compiled is None:
            print(f"{size:>8} {t_py * 1e3:>10.2f}ms {'-':>12} {'-':>8} {'-':>10}")
            continue
        t_cy, out_cy = time_kernel(_compiled, dirs, bloch, probs, args.repeats)
        diff = float(np.max(np.abs(out_py - out_cy)))
        print(
            f"{size:>8} {t_py * 1e3:>10.2f}ms {t_cy * 1e3:>10.2f}ms "
            f"{t_py / t_cy:>7.1f}x {diff:>10.2e}"
        )
        if diff > 1e-12:
            print(f"backends disagree at grid {size}: max diff {diff}")
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
