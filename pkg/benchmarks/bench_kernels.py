"""Time the numba kernels against their pure-numpy twins.

    python benchmarks/bench_kernels.py [--trials 5000] [--repeat 3]

Each case is run on both backends, the outputs are checked to be
bit-identical, and the best-of-``repeat`` wall time is reported.
"""

import argparse
import time

import numpy as np

from xfpt import kernels
from xfpt.fpt import fpt
from xfpt.graphs import build_bethe, build_clique_head, build_comet, build_leaky_loop
from xfpt.mc import compile_chain


def cases(trials):
    leaky50 = build_leaky_loop(0.5, 0.9, 50)
    comet = build_comet(build_clique_head(4, 0, 3), 20, 0.9)
    bethe = build_bethe(3, 6)
    out = []
    for name, model, N in (("leaky d=50 N=349", leaky50, 349), ("comet d=22 N=200", comet, 200), ("bethe d=6 N=729", bethe, 729)):
        t_max = model.distance + 200
        c = compile_chain(model, t_max)
        out.append((
            f"direct-walk {name}",
            lambda backend, c=c, N=N, t_max=t_max: kernels.chain_min_arrivals(
                c.nxt, c.cum, c.dist, c.start, 1, 0, trials, N, t_max, backend
            ),
        ))
    dist = fpt(leaky50, 200)
    out.append((
        "inverse-cdf leaky d=50 N=349",
        lambda backend: kernels.inverse_cdf_min_arrivals(dist.cdf, dist.d, 1, 0, trials, 349, backend),
    ))
    x = np.random.default_rng(0).random(10**6)
    out.append(("compensated cumsum n=1e6", lambda backend: kernels.compensated_cumsum(x, backend)))
    return out


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'case':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  identical")
    for name, fn in cases(args.trials):
        fn("numba")  # compile outside the timing
        t_nb, r_nb = best_time(lambda: fn("numba"), args.repeat)
        t_np, r_np = best_time(lambda: fn("numpy"), args.repeat)
        same = np.array_equal(r_nb, r_np)
        print(f"{name:34s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}x  {same}")


if __name__ == "__main__":
    main()
