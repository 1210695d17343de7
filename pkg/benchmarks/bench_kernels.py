"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Prints the best wall time per backend for each workload, the speed-up, and
whether the outputs agree.
"""
import argparse
import math
import time

import numpy as np

from nuelab import kernels


def _best(fn, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads(quick):
    rng = np.random.default_rng(0)
    S, N = (200, 200) if quick else (1000, 500)
    # Lyapunov-like increments: mostly expanding with occasional contraction
    a = np.log(2.0 * np.abs(rng.uniform(-1.8, 1.8, size=(S, N))))
    r = np.maximum(-np.log(np.abs(rng.uniform(-1.0, 1.0, size=(S, N)))) - 9.2, 0.0)
    r12 = np.ascontiguousarray(np.stack([r, r], axis=1))
    ls = -math.log(math.exp(-0.3 / 8.0))
    yield "hyperbolic mask", lambda k: k.window_scan(a, ls, None, None, r, 0.125 * ls)
    yield "super mask", lambda k: k.window_scan(a, 0.3 / 4.0, r12, np.array([0.2, 0.2]), None, 0.0)
    L = 10000 if quick else 40000
    x = np.exp(-np.sqrt(np.arange(L, dtype=float)))
    yield "convolve", lambda k: k.convolve(x, x)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args(argv)
    mods = kernels.backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(mods)}")
    print(f"{'workload':<18}" + "".join(f"{name:>12}" for name in mods) + f"{'speed-up':>10}  agree")
    for label, fn in workloads(args.quick):
        times, outs = {}, {}
        for name, mod in mods.items():
            times[name], outs[name] = _best(lambda: fn(mod), args.repeat)
        ref = outs["python"]
        agree = all(np.array_equal(o, ref) if o.dtype == np.uint8 else
                    np.allclose(o, ref, rtol=1e-12, atol=1e-300) for o in outs.values())
        sp = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<18}" + "".join(f"{times[n]:>11.4f}s" for n in mods)
              + f"{sp:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
