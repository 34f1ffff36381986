"""Compare the compiled and numpy kernel backends on representative inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from hoverdepth import kernels


def cases(rng):
    img = rng.uniform(0, 255, (120, 160, 3))
    blocky = (rng.integers(0, 6, (60, 80, 3)) * 20.0).repeat(2, 0).repeat(2, 1)
    n_views, n_cand = 8, 17
    images = rng.uniform(0, 255, (n_views, 240, 320))
    grads = rng.uniform(0, 50, (n_views, 240, 320))
    H = np.tile(np.eye(3), (n_cand, n_views, 1, 1))
    H[:, :, :2, 2] = rng.uniform(-3, 3, (n_cand, n_views, 2))
    w = np.full(n_views, 1.0 / n_views)
    ys, xs = np.mgrid[100:116, 140:156]
    return {
        "bilateral_filter 160x120x3 r=4": lambda b: kernels.bilateral_filter(img, 2.0, 20.0, 4, backend=b),
        "region_grow 160x120x3": lambda b: kernels.region_grow(blocky, 25.0, backend=b),
        "photometric_costs 17 cand x 8 views x 256 px":
            lambda b: kernels.photometric_costs(images, grads, H, w, xs.ravel(), ys.ravel(), backend=b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':48s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases(np.random.default_rng(0)).items():
        times = []
        for b in backends:
            fn(b)  # warm up
            number = 1 if b == "python" else 5
            times.append(min(timeit.repeat(lambda: fn(b), number=number, repeat=args.repeat)) / number)
        row = f"{name:48s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
