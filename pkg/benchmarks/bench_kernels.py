"""Compiled kernels against the pure-Python fallback.

Times one coordinate-descent sweep over the stacked design, one sweep of
the dense kernel, and a block of Gibbs sweeps, on identical inputs for both
backends, and checks that the outputs agree.

    python3 benchmarks/bench_kernels.py [--p 20] [--n 1000] [--repeats 5]
"""
import argparse
import statistics
import time

import numpy as np

from plgnet import _fallback
from plgnet.transform import build_stacked

try:
    from plgnet import _core
except ImportError:
    _core = None


def _time(fn, repeats):
    fn()
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        out.append(time.perf_counter_ns() - t0)
    return statistics.median(out)


def pairwise_case(p, n, seed):
    rng = np.random.default_rng(seed)
    X = (rng.random((n, p)) < 0.4).astype(float)
    sp = build_stacked(X)
    d = sp.design
    k = d.n_features
    w = np.full(d.n_obs, 0.25)
    beta = np.zeros(k)
    r = (sp.response - 0.5) / 0.25
    xwx = d.weighted_col_sq_norms(w)
    thresh = np.where(sp.penalty_factors > 0, 0.01, 0.0)
    coords = np.arange(k, dtype=np.intp)

    def run(mod):
        rr, bb = r.copy(), beta.copy()
        mod.cd_epoch_pairwise(d.xt, w, rr, bb, xwx, thresh, coords, d.pair_s, d.pair_t, float(d.n_obs))
        return bb

    return run


def dense_case(p, n, seed):
    rng = np.random.default_rng(seed)
    dt = np.ascontiguousarray((rng.random((p, n)) < 0.4).astype(float))
    w = np.full(n, 0.25)
    r = rng.standard_normal(n)
    xwx = (dt * dt) @ w
    thresh = np.full(p, 0.01)
    coords = np.arange(p, dtype=np.intp)

    def run(mod):
        rr, bb = r.copy(), np.zeros(p)
        mod.cd_epoch_dense(dt, w, rr, bb, xwx, thresh, coords, float(n))
        return bb

    return run


def gibbs_case(p, sweeps, seed):
    rng = np.random.default_rng(seed)
    th = rng.uniform(-1, 1, (p, p))
    th = np.ascontiguousarray((th + th.T) / 2)
    u = rng.random((sweeps, p))

    def run(mod):
        x = np.zeros(p, dtype=np.uint8)
        out = np.empty((sweeps, p), dtype=np.uint8)
        mod.gibbs_sweeps(th, x, u, out)
        return out

    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--p", type=int, default=20)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--sweeps", type=int, default=2000, help="Gibbs sweeps per timed call")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; nothing to compare")
        return 1

    cases = [
        ("cd sweep, stacked design", pairwise_case(args.p, args.n, args.seed)),
        ("cd sweep, dense design", dense_case(args.p, args.n, args.seed)),
        ("gibbs sweeps", gibbs_case(args.p, args.sweeps, args.seed)),
    ]
    print(f"p={args.p} N={args.n} repeats={args.repeats}")
    print(f"{'kernel':<28}{'cython ms':>12}{'python ms':>12}{'speedup':>10}  agree")
    for name, run in cases:
        a, b = run(_core), run(_fallback)
        agree = np.array_equal(a, b) if a.dtype == np.uint8 else np.allclose(a, b, rtol=1e-12, atol=1e-14)
        tc = _time(lambda: run(_core), args.repeats)
        tp = _time(lambda: run(_fallback), args.repeats)
        print(f"{name:<28}{tc / 1e6:>12.3f}{tp / 1e6:>12.3f}{tp / tc:>10.1f}  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
