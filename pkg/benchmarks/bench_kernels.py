"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--seed 0]

Each kernel is run once untimed first so numba compilation is excluded, and
the two backends' outputs are compared before timing.
"""

import argparse
import time

import numpy as np

from cswitch import _accel


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    ref = rng.integers(0, 50, size=400)
    hyp = ref.copy()
    flip = rng.random(400) < 0.2
    hyp[flip] = rng.integers(0, 50, size=flip.sum())
    hyp = np.delete(hyp, rng.choice(400, 20, replace=False))

    values = rng.integers(0, 30, size=(4, 2000))
    idx = rng.integers(0, 2000, size=(1000, 2000))

    probs = rng.random((3, 20000)) * 0.01 + 1e-6
    w0 = np.full(3, 1 / 3)
    return [
        ("edit_ops (400 x 380 tokens)", _accel.edit_ops_numpy, _accel.edit_ops_numba, (ref, hyp)),
        ("resample_sums (1000 x 2000 utts)", _accel.resample_sums_numpy, _accel.resample_sums_numba, (values, idx)),
        ("em_fit (3 comps, 20k events)", _accel.em_fit_numpy, _accel.em_fit_numba, (probs, w0, 100, 1e-9)),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if a.dtype.kind == "f":
        return np.allclose(a, b, rtol=1e-10, atol=1e-12)
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not _accel.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return
    rng = np.random.default_rng(args.seed)
    print(f"active backend: {_accel.BACKEND}")
    print(f"{'kernel':<34}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}  agree")
    for name, slow, fast, a in cases(rng):
        agree = same(slow(*a), fast(*a))
        t_np = best_of(lambda: slow(*a), args.repeat)
        t_nb = best_of(lambda: fast(*a), args.repeat)
        print(f"{name:<34}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>8.1f}x  {agree}")


if __name__ == "__main__":
    main()
