"""Compare the numba and pure-numpy kernel backends on LS1-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from interlace import _accel as A
from interlace import lattice as L


def timeit(fn, repeat):
    fn()  # warm-up (includes JIT compile on first call)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    spec = L.LatticeSpec(interlace=(L.InterlaceLevel("secondary", "honeycomb", "all"),))
    g = L.build_panel(spec)
    xy = g.nodes * 1e-3
    w = g.widths * 1e-3
    fe = (xy, g.edges.astype(np.int64), 3.5e9 * w * 5e-3, 3.5e9 * 5e-3 * w**3 / 12, 1240 * w * 5e-3)

    rng = np.random.default_rng(0)
    p0 = rng.uniform(0, 256, size=(g.n_edges, 2))
    p1 = p0 + rng.uniform(-10, 10, size=(g.n_edges, 2))
    hw = np.full(g.n_edges, 1.0)
    coef = rng.normal(size=300)
    wn = np.sort(rng.uniform(100, 7.5e4, size=300))
    om = 2 * np.pi * np.arange(10, 10001, 10.0)

    cases = {
        "frame_elements": (lambda: A.frame_elements_np(*fe), lambda: A.frame_elements_nb(*fe)),
        "points_on_segments": (lambda: A.points_on_segments_np(g.nodes, g.edges, 1e-6),
                               lambda: A.points_on_segments_nb(g.nodes, g.edges.astype(np.int64), 1e-6)),
        "raster_segments": (lambda: A.raster_segments_np(p0, p1, hw, 128, 256),
                            lambda: A.raster_segments_nb(p0, p1, hw, 128, 256)),
        "modal_response": (lambda: A.modal_response_np(coef, wn, 1e-3, om),
                           lambda: A.modal_response_nb(coef, wn, 1e-3, om)),
    }
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, (f_np, f_nb) in cases.items():
        t_np = timeit(f_np, args.repeat)
        t_nb = timeit(f_nb, args.repeat)
        print(f"{name:<20}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
