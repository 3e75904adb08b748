"""Time the LSTM recurrence kernels: numba loops versus vectorised numpy.

    python benchmarks/bench_kernels.py [--d-h 150] [--n 30] [--repeat 200]

Both backends are imported directly, so ``AOA_NO_NUMBA`` has no effect here.
"""

import argparse
import timeit

import numpy as np

from aoa_lstm.kernels import (
    HAVE_NUMBA,
    recurrence_backward_numba,
    recurrence_backward_numpy,
    recurrence_numba,
    recurrence_numpy,
)


def bench(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d-h", type=int, default=150)
    ap.add_argument("--n", type=int, nargs="+", default=[5, 30, 80])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    rng = np.random.default_rng(0)
    d_h = args.d_h
    U = rng.uniform(-0.1, 0.1, (4 * d_h, d_h))
    print(f"d_h={d_h}, best of {args.repeat}, microseconds per call")
    print(f"{'n':>4} {'pass':>9} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for n in args.n:
        xw = rng.uniform(-1, 1, (n, 4 * d_h))
        H, C, G = recurrence_numpy(xw, U)
        dH = rng.normal(size=H.shape)
        Hn, _, _ = recurrence_numba(xw, U)
        assert np.allclose(H, Hn, atol=1e-12)
        for name, f_np, f_nb, call in (
            ("forward", recurrence_numpy, recurrence_numba, (xw, U)),
            ("backward", recurrence_backward_numpy, recurrence_backward_numba, (dH, U, C, G)),
        ):
            t_np = bench(f_np, call, args.repeat) * 1e6
            t_nb = bench(f_nb, call, args.repeat) * 1e6
            print(f"{n:>4} {name:>9} {t_np:>10.1f} {t_nb:>10.1f} {t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()
