"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat 5] [--workers 1500]

Both backends are called on the same inputs; results are checked for
agreement before anything is timed.
"""

import argparse
import time

import numpy as np

from dateline import kernels
from dateline.synthgen import SynthSpec, generate
from dateline.uncertainty import eta_matrix


def best_of(fn, repeat):
    fn()  # warm up (and compile)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1500, help="preferences per worker")
    ap.add_argument("--objects", type=int, default=15)
    args = ap.parse_args()

    spec = SynthSpec(
        n_objects=args.objects,
        workers=[{"id": f"w{i}", "archetype": a, "n": args.workers}
                 for i, a in enumerate(["expert", "expert", "amateur", "spammer"])],
        k=[3, 5],
        seed=0,
    )
    ds, lam, profiles = generate(spec)
    packed, E, u = ds.packed(), eta_matrix(ds, profiles), np.log(lam)

    rows = []
    for grad in (False, True):
        for norm in (True, False):
            a = kernels.weighted_loglik(u, packed, E, grad, norm, backend="numba")
            b = kernels.weighted_loglik(u, packed, E, grad, norm, backend="numpy")
            assert abs(a[0] - b[0]) <= 1e-9 * abs(b[0])
            t_nb = best_of(lambda: kernels.weighted_loglik(u, packed, E, grad, norm, backend="numba"),
                           args.repeat)
            t_np = best_of(lambda: kernels.weighted_loglik(u, packed, E, grad, norm, backend="numpy"),
                           args.repeat)
            rows.append((f"loglik grad={grad} normalize={norm}", t_nb, t_np))

    rng = np.random.default_rng(0)
    for n in (10, 40, 80):
        A = rng.normal(size=(n, n))
        A = A + A.T
        wa = kernels.jacobi_eigh(A, backend="numba")[0]
        wb = kernels.jacobi_eigh(A, backend="numpy")[0]
        assert np.allclose(wa, wb, atol=1e-9)
        t_nb = best_of(lambda: kernels.jacobi_eigh(A, backend="numba"), args.repeat)
        t_np = best_of(lambda: kernels.jacobi_eigh(A, backend="numpy"), args.repeat)
        rows.append((f"jacobi n={n}", t_nb, t_np))

    print(f"{len(ds.preferences)} preferences, {args.objects} objects")
    print(f"{'kernel':<36}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, t_nb, t_np in rows:
        print(f"{name:<36}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
