"""Compare the compiled and NumPy kernel backends.

    python benchmarks/bench_kernels.py [--samples 100000] [--slots 20000] [--repeat 3]

Each kernel is run on identical inputs by every importable backend; the
script prints the best-of-``repeat`` wall time per backend and the speedup,
and checks that both backends agree on the result.
"""
import argparse
import time

import numpy as np

from cogharq.channel import sample_block, table_block
from cogharq.config import ScenarioConfig
from cogharq.kernels import implementations


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def sim_inputs(cfg, slots):
    N = cfg.n_users
    S = 1 + (cfg.arq_deadline - 1) * (1 << N)
    A = 1 << N
    rng = np.random.default_rng(7)
    mu = rng.random((S, A))
    cum = np.cumsum(mu / mu.sum(axis=1, keepdims=True), axis=1)
    cum[:, -1] = 1.0
    rates = np.zeros((N, A, A))
    for a in range(A):
        for n in range(N):
            if (a >> n) & 1:
                rates[n, a, :] = 1.0 + 0.5 * rng.random(A)
    gains = sample_block(cfg, 1 << 40, slots)
    unif = rng.random((slots, N))
    return cum, rates, gains, unif


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--slots", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = ScenarioConfig.defaults(3, mc_samples=args.samples)
    N = cfg.n_users
    impls = implementations()
    gains_all = table_block(cfg, 7, 0)
    # receiver 0 under action 7, knowledge state all-U: three SU messages plus the PU message
    cols = [1 + 2 * N + m * N for m in range(N)] + [1]
    gains = np.ascontiguousarray(gains_all[:, cols])
    noise = np.ones(gains.shape[0])
    rates = np.array([1.0, 0.8, 0.6, cfg.rp])
    pts = cfg.rate_grid.points()
    cum, sim_rates, sim_gains, unif = sim_inputs(cfg, args.slots)
    S = cum.shape[0]

    cases = {
        "decodable_mask": lambda k: k.decodable_mask(0, rates, gains, noise),
        "rate_threshold": lambda k: k.rate_threshold(0, 0, rates, gains, noise),
        "threshold_grid_counts": lambda k: k.threshold_grid_counts(0, 0, rates, gains, noise, pts),
        "simulate_chunk": lambda k: (k.simulate_chunk(
            N, cfg.arq_deadline, cfg.rp, sim_gains, unif, 0, cum, np.zeros((N, S)), sim_rates,
            1, 0, 0, 0, su := np.zeros(N), np.zeros(2), np.zeros(S, dtype=np.int64)), su.copy()),
    }
    print(f"backends: {', '.join(impls)}; samples={gains.shape[0]} slots={args.slots}")
    print(f"{'kernel':24s}" + "".join(f"{name:>12s}" for name in impls) + f"{'speedup':>10s}  agree")
    for name, fn in cases.items():
        times, outs = {}, {}
        for bname, mod in impls.items():
            times[bname], outs[bname] = best_time(lambda: fn(mod), args.repeat)
        row = f"{name:24s}" + "".join(f"{times[b] * 1e3:10.1f}ms" for b in impls)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:9.1f}x"
            a, b = outs["python"], outs["cython"]
            if name == "simulate_chunk":
                same = a[0] == b[0] and np.allclose(a[1], b[1])
            else:
                same = np.allclose(a, b, rtol=1e-12, atol=0, equal_nan=True)
            row += f"  {same}"
        print(row)


if __name__ == "__main__":
    main()
