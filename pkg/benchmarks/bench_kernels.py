"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import random
import timeit

from vpass import kernels
from vpass.core import units


def workloads(rng):
    z, n = 95, 8
    xs = [rng.randrange(z) for _ in range(n)]
    ys = [rng.randrange(z) for _ in range(n)]
    ks = [rng.randrange(z) for _ in range(n)]  # almost surely unmatched: a full scan
    salts = [tuple(rng.randrange(5) for _ in range(3)) for _ in range(2)]
    resps = [tuple(rng.randrange(5) for _ in range(3)) for _ in range(2)]
    return {
        "response Z=95 n=8 (x2000)": (lambda m: [m.response(xs, 3, ys, 7, z) for _ in range(2000)]),
        "scan_c Z=95 n=8 (x500)": (lambda m: [m.scan_c(xs, 3, ys, ks, z) for _ in range(500)]),
        "consistent_keys Z=5 n=3": (lambda m: m.consistent_keys(units(5), 3, 5, salts, resps)),
        "reachable_keys_modified Z=5 n=3": (lambda m: m.reachable_keys_modified(units(5), 3, 5, resps[:1])),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled backend unavailable; only the fallback will be timed")
    names = sorted(backends)
    print(f"{'workload':36}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for label, fn in workloads(random.Random(0)).items():
        times = {n: min(timeit.repeat(lambda: fn(backends[n]), number=1, repeat=args.repeat)) for n in names}
        row = f"{label:36}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if len(names) == 2:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
