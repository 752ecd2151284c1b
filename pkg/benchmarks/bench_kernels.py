"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each workload runs on both backends with identical inputs; the table shows
the best wall time of ``--repeat`` runs, the speed-up and the largest
difference between the two outputs.
"""

import argparse
import time

import numpy as np

from curvegas import CurveSpec, _backend, build_arclength_curve


def workloads(curve):
    kc = curve.kernel
    l = curve.length
    rng = np.random.default_rng(0)
    X = np.sort(rng.uniform(0.0, l, size=(2000, 16)), axis=1)
    X0 = np.repeat(np.linspace(0.0, 0.8 * l, 8)[None, :], 50, axis=0)
    steps = np.array([0, 200], dtype=np.int64)
    M0 = np.sort(rng.uniform(0.0, l, size=(4, 8)), axis=1)
    scales = np.full(4, 0.3)
    return {
        "drift_batch 2000x16": lambda k: k.drift_batch(X, 1.0, kc),
        "energy_batch 2000x16": lambda k: k.energy_batch(X, kc),
        "em_run 50 traj x 200 steps, N=8": lambda k: k.em_run(
            X0, 1.0, 1.0, 1e-3, steps, 0, 0, 0, 10, kc)[0],
        "mcmc_run 4 chains x 200 sweeps, N=8": lambda k: k.mcmc_run(
            M0, 2.0, scales, 200, 200, 0, 0, 0, kc)[0],
    }


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, np.asarray(out)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--curve", choices=["circle", "ellipse"], default="ellipse")
    args = parser.parse_args(argv)
    names = _backend.available()
    if "cython" not in names:
        print("compiled kernels not built; only the numpy fallback is available")
    spec = CurveSpec.ellipse(2.0, 1.0) if args.curve == "ellipse" else CurveSpec.circle(1.0)
    curve = build_arclength_curve(spec)
    backends = {name: _backend.load(name) for name in names}
    print(f"{'workload':38s}" + "".join(f"{n:>12s}" for n in names) + f"{'speed-up':>10s}"
          f"{'max diff':>11s}")
    for label, fn in workloads(curve).items():
        times, outs = {}, {}
        for name, kern in backends.items():
            times[name], outs[name] = best_time(lambda: fn(kern), args.repeat)
        row = f"{label:38s}" + "".join(f"{times[n] * 1e3:10.1f}ms" for n in names)
        if len(names) == 2:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            row += f"{times['python'] / times['cython']:9.1f}x{diff:11.1e}"
        print(row)


if __name__ == "__main__":
    main()
