"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 7]

Both implementations are called directly, so the result does not depend on
COHRCF_DISABLE_NUMBA.  Each kernel is run once untimed first so JIT
compilation is not counted.
"""
import argparse
import time

import numpy as np

from cohrcf import _accel, cluster, spectral


def best_of(fn, make_args, repeat):
    fn(*make_args())  # warm-up
    times = []
    for _ in range(repeat):
        args = make_args()
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    # FFT over many short rows, the shape Welch segmenting produces
    fft_in = rng.normal(size=(4000, 32)) + 1j * rng.normal(size=(4000, 32))
    yield ("fft_rows 4000x32",
           spectral._fft_rows_numba, spectral._fft_rows_numpy,
           lambda: (fft_in.copy(), False))

    big = rng.normal(size=(8, 8192)) + 1j * rng.normal(size=(8, 8192))
    yield ("fft_rows 8x8192",
           spectral._fft_rows_numba, spectral._fft_rows_numpy,
           lambda: (big.copy(), False))

    users = rng.integers(0, 6, size=(943, 1682)).astype(np.float64)
    protos = rng.random((100, 1682)) * 5
    yield ("sq_dists 943x100x1682",
           cluster._sq_dists_numba, cluster._sq_dists_numpy,
           lambda: (users, protos))

    cfg = cluster.SomConfig()
    coords = cfg.grid_coords()
    lateral = np.ascontiguousarray(cluster.sq_distances(coords, coords))
    sample = users[:750]
    w0 = rng.random((cfg.n_neurons, sample.shape[1])) * 5
    picks = rng.integers(0, sample.shape[0], size=cfg.ordering_steps + cfg.tuning_steps)
    yield ("som_train 10x10, 3000 steps",
           cluster._som_train_numba, cluster._som_train_numpy,
           lambda: (w0.copy(), sample, picks, cfg.sigmas(), lateral))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':30s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fast, slow, make_args in cases(np.random.default_rng(args.seed)):
        t_fast = best_of(fast, make_args, args.repeat)
        t_slow = best_of(slow, make_args, args.repeat)
        print(f"{name:30s} {t_fast * 1e3:10.2f} {t_slow * 1e3:10.2f} {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
