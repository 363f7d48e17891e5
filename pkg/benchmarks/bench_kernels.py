"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends run on identical inputs; the script also reports the largest
difference between their outputs.
"""
import argparse
import timeit

import numpy as np

from readoutbench import kernels
from readoutbench.core import ginibre_density, make_rng
from readoutbench.noise import (
    CoherentRotation, sample_counts, setting_povms, tetrahedron_states,
)


def qst_case(n):
    rng = make_rng(1, n)
    povms = setting_povms(n, CoherentRotation.about_axis(0.2, "X", n))
    counts = sample_counts([ginibre_density(2 ** n, 2, rng)], povms, 1000, rng).counts[0]
    effects = np.concatenate([p.effects for p in povms])
    d = 2 ** n
    return (np.eye(d, dtype=complex) / d, effects, counts.reshape(-1).astype(float),
            0.5, 300, 1e-12)


def qdt_case(n):
    rng = make_rng(2, n)
    states = tetrahedron_states(n)
    truth = setting_povms(n, CoherentRotation.about_axis(0.2, "X", n), ["Z" * n])[0]
    counts = sample_counts(states, [truth], 1000, rng).counts[:, 0].astype(float)
    rhos = np.array([np.outer(s.amplitudes, s.amplitudes.conj()) for s in states])
    d = 2 ** n
    m0 = np.repeat(np.eye(d, dtype=complex)[None] / d, d, axis=0)
    return m0, rhos, counts, 300, 1e-12


def bme_case(n, length=5000):
    rng = make_rng(3, n)
    effects, counts = qst_case(n)[1:3]
    d = 2 ** n
    normals = (rng.standard_normal((length, d, d))
               + 1j * rng.standard_normal((length, d, d))) / np.sqrt(2)
    log_u = np.log(rng.random(length))
    g0 = np.eye(d, dtype=complex) * np.sqrt(d)
    return g0, effects, counts, normals, log_u, 0.02, length // 10, 50


CASES = {
    "qst_mle_loop": qst_case,
    "qdt_mle_loop": qdt_case,
    "bme_chain": bme_case,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--qubits", type=int, nargs="+", default=[1, 2, 3])
    args = ap.parse_args()
    backends = sorted(kernels.BACKENDS)
    if "cython" not in backends:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<14}{'qubits':>7}" + "".join(f"{b + ' [ms]':>15}" for b in backends)
          + f"{'speedup':>10}{'max |diff|':>13}")
    for name, make in CASES.items():
        for n in args.qubits:
            case = make(n)
            times, outs = {}, {}
            for b in backends:
                fn = getattr(kernels.BACKENDS[b], name)
                outs[b] = fn(*case)
                times[b] = min(timeit.repeat(lambda: fn(*case), number=1,
                                             repeat=args.repeat)) * 1e3
            row = f"{name:<14}{n:>7}" + "".join(f"{times[b]:>15.2f}" for b in backends)
            if len(backends) == 2:
                diff = float(np.max(np.abs(outs["cython"][0] - outs["python"][0])))
                row += f"{times['python'] / times['cython']:>9.1f}x{diff:>13.1e}"
            print(row)


if __name__ == "__main__":
    main()
