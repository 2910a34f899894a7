"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --particles 2000 --steps 256

Both backends consume the same random stream, so the script also reports the
largest difference between their outputs.
"""
import argparse
import time

import numpy as np

from occlab import kernels
from occlab.dynamics import Brownian, DynamicsSpec, EllipticDiffusion, SineSquaredCoefficient, Stable
from occlab.rng import RngStream


def occupation_case(spec, n, steps):
    code, params = spec.kernel_params()
    starts = RngStream(1).generator().uniform(-6, 6, (n, spec.ambient_dim))

    def run():
        u, status = kernels.occupation(
            code, params, starts, spec.weights, 0, [-1.0], [1.0], 1.0, steps, 0.05, RngStream(2).generator()
        )
        assert status == 0
        return u

    return run


def dyson_case(n, steps):
    starts = np.sort(RngStream(3).generator().uniform(-2, 2, (n, 3)), axis=1)

    def run():
        u, _, status = kernels.dyson_occupation(starts, np.ones(3), 0, -1.0, 1.0, 1.0, steps, 0.05, RngStream(4).generator())
        assert status == 0
        return u

    return run


def jacobi_case(n):
    a = RngStream(5).generator().standard_normal((n, 6, 6))
    batch = a + np.swapaxes(a, 1, 2)

    def run():
        vals, ok = kernels.jacobi_eigenvalues(batch)
        assert np.all(ok)
        return vals

    return run


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--particles", type=int, default=2000)
    parser.add_argument("--steps", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    n, steps = args.particles, args.steps
    cases = {
        "brownian": occupation_case(DynamicsSpec(Brownian()), n, steps),
        "stable 1.5": occupation_case(DynamicsSpec(Stable(1.5)), n, steps),
        "diffusion": occupation_case(DynamicsSpec(EllipticDiffusion(SineSquaredCoefficient())), n, steps),
        "dyson 3": dyson_case(max(1, n // 10), steps),
        "jacobi 6x6": jacobi_case(n),
    }
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is timed")
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max diff':>11}")
    for name, fn in cases.items():
        times, outs = {}, {}
        for b in backends:
            with kernels.use_backend(b):
                times[b], outs[b] = best_of(fn, args.repeat)
        row = f"{name:<12}" + "".join(f"{times[b]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            diff = float(np.max(np.abs(outs["compiled"] - outs["python"])))
            row += f"{times['python'] / times['compiled']:>9.1f}x{diff:>11.1e}"
        print(row)


if __name__ == "__main__":
    main()
