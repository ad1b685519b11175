"""Compare the compiled and numpy copula kernels.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Times cdf, partial_u and conditional_inverse for each family on the same
random inputs, checks the two backends agree, and prints the speedup.
"""

import argparse
import timeit

import numpy as np

from ordinal_causal import copula
from ordinal_causal.copula import CopulaSpec, Family, _backend

FAMILIES = (Family.GUMBEL, Family.CLAYTON, Family.FRANK, Family.GAUSSIAN)
OPS = {
    "cdf": lambda s, u, v, k: copula.cdf(s, u, v, kernels=k),
    "partial_u": lambda s, u, v, k: copula.partial_u(s, u, v, kernels=k),
    "cond_inverse": lambda s, u, v, k: copula.conditional_inverse(s, u, v, kernels=k),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--tau", type=float, default=0.5)
    args = ap.parse_args(argv)

    names = _backend.available()
    if "cython" not in names:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace`")
    backends = {name: _backend.load(name) for name in names}
    rng = np.random.default_rng(0)
    u, v = rng.uniform(0.001, 0.999, size=(2, args.n))

    header = f"{'family':<9} {'op':<13}" + "".join(f"{n + ' ms':>12}" for n in names)
    print(f"n={args.n}, best of {args.repeat}\n" + header + ("  speedup  max|diff|" if len(names) > 1 else ""))
    for fam in FAMILIES:
        spec = CopulaSpec.from_tau(fam, args.tau)
        for op, fn in OPS.items():
            times, outs = [], []
            for k in backends.values():
                outs.append(np.asarray(fn(spec, u, v, k)))
                best = min(timeit.repeat(lambda: fn(spec, u, v, k), number=1, repeat=args.repeat))
                times.append(1e3 * best)
            line = f"{fam.value:<9} {op:<13}" + "".join(f"{t:12.2f}" for t in times)
            if len(times) > 1:
                line += f"  {times[1] / times[0]:7.1f}x  {np.max(np.abs(outs[0] - outs[1])):.1e}"
            print(line)


if __name__ == "__main__":
    main()
