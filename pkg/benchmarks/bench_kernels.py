"""Time the compiled and pure-Python log-likelihood kernels on simulated data.

    python benchmarks/bench_kernels.py --n 2000 --batch 25 --repeat 5
"""
import argparse
import timeit

import numpy as np

from defcure.likelihood import LogLikelihood, get_kernel
from defcure.simulation import SimScenario, generate_dataset


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--batch", type=int, default=25, help="parameter vectors per call")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)

    backends = ["python"]
    try:
        get_kernel("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled kernel not built; timing the Python kernel only")

    rng = np.random.default_rng(args.seed)
    for sc in (SimScenario.table1(args.n), SimScenario.table3(args.n)):
        ds = generate_dataset(sc, seed=args.seed)
        theta0 = sc.true_params.to_vector()
        thetas = theta0 + rng.normal(0, 0.05, size=(args.batch, theta0.size))
        timings = {}
        for backend in backends:
            ll = LogLikelihood(sc.family, ds, backend)
            best = min(timeit.repeat(lambda: ll.batch(thetas), number=1, repeat=args.repeat))
            timings[backend] = best
            print(f"{sc.family.value:17s} {backend:7s} n={args.n} batch={args.batch}: "
                  f"{best * 1e3:9.2f} ms  ({best / args.batch * 1e6:8.1f} us/eval)")
        if len(timings) == 2:
            v_c = LogLikelihood(sc.family, ds, "cython").batch(thetas)[0]
            v_p = LogLikelihood(sc.family, ds, "python").batch(thetas)[0]
            print(f"{'':17s} speedup x{timings['python'] / timings['cython']:.1f}, "
                  f"max |diff| {np.max(np.abs(v_c - v_p)):.2e}")


if __name__ == "__main__":
    main()
