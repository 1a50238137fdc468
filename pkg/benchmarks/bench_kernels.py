"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--rows 64] [--classes 20] [--k 3]

Part 1 times the row kernels in-process (both backends are importable at
once). Part 2 times one FWL epoch on the calibrated synthetic task in a
subprocess per ``FWL_BACKEND`` value, which is how the flag is used.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from fwl.kernels import numba_kernels, numpy_kernels

EPOCH_SNIPPET = """
import time, numpy as np
from fwl import kernels
from fwl.data import SyntheticTaskSpec, generate_synthetic
from fwl.deploy import EpochLedger, fwl_epoch
from fwl.estimator import FwlHyperparams
from fwl.mlp import AdamState, init_mlp
pool, _, _ = generate_synthetic(SyntheticTaskSpec())
model = init_mlp(pool.dim, 200, pool.num_classes, np.random.default_rng(0))
hyper = FwlHyperparams()
fwl_epoch(model, pool.subset(range(256)), hyper, AdamState.for_model(model), np.random.default_rng(0),
          EpochLedger(256, 3))  # warm-up / JIT
best = float("inf")
for rep in range(5):
    m = model.copy()
    t0 = time.perf_counter()
    fwl_epoch(m, pool, hyper, AdamState.for_model(m), np.random.default_rng(rep), EpochLedger(len(pool), 3))
    best = min(best, time.perf_counter() - t0)
print(kernels.BACKEND, best)
"""


def best_time(fn, repeats=7, target=0.2):
    fn()
    t0 = time.perf_counter()
    fn()
    once = max(time.perf_counter() - t0, 1e-7)
    loops = max(1, int(target / once))
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=64)
    ap.add_argument("--classes", type=int, default=20)
    ap.add_argument("--k", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    logits = rng.normal(0, 3, (args.rows, args.classes))
    probs = numpy_kernels.softmax_rows(logits)
    gold = rng.integers(0, args.classes, args.rows).astype(np.int64)
    u = rng.random((args.rows, args.k))

    cases = {
        "softmax_rows": lambda k: k.softmax_rows(logits),
        "ce_logit_grad": lambda k: k.ce_logit_grad(probs, gold),
        "fwl_logit_grad": lambda k: k.fwl_logit_grad(probs, gold, 0.97, 76.0, u),
    }
    print(f"row kernels, batch {args.rows} x {args.classes} classes, K={args.k}")
    print(f"{'kernel':<16}{'numpy us':>10}{'numba us':>10}{'speedup':>9}")
    for name, call in cases.items():
        t_np = best_time(lambda: call(numpy_kernels))
        if numba_kernels is None:
            print(f"{name:<16}{t_np * 1e6:10.1f}{'n/a':>10}")
            continue
        t_nb = best_time(lambda: call(numba_kernels))
        print(f"{name:<16}{t_np * 1e6:10.1f}{t_nb * 1e6:10.1f}{t_np / t_nb:9.2f}x")

    print("\none FWL epoch over the 4000-example synthetic pool (best of 5)")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, FWL_BACKEND=backend)
        r = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True)
        if r.returncode:
            print(f"{backend:<8} failed: {r.stderr.strip().splitlines()[-1]}")
            continue
        name, secs = r.stdout.split()
        print(f"{name:<8}{float(secs) * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
