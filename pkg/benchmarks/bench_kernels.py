"""Compare the numba and pure-numpy kernel paths.

    python benchmarks/bench_kernels.py --students 200 --ticks 500 --repeat 5

Both paths are checked for bit-identical output before timing. Numba compile
time is reported separately (first call) and excluded from the steady-state
numbers.
"""

import argparse
import time

import numpy as np

from affectfuse import _kernels, default_config, default_mapping, fuse_batch
from affectfuse.simulator import generate


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--students", type=int, default=200)
    ap.add_argument("--ticks", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    table, config = default_mapping(), default_config()
    n = args.students * args.ticks

    t0 = time.perf_counter()
    sess_nb = generate(args.students, args.ticks, seed=args.seed, use_numba=True)
    labels = sess_nb.labels.reshape(-1, 4)
    fuse_batch(labels, config, table, use_numba=True)
    first_call = time.perf_counter() - t0

    sess_np = generate(args.students, args.ticks, seed=args.seed, use_numba=False)
    assert np.array_equal(sess_nb.labels, sess_np.labels) and np.array_equal(sess_nb.truth, sess_np.truth)
    d_nb, s_nb = fuse_batch(labels, config, table, use_numba=True)
    d_np, s_np = fuse_batch(labels, config, table, use_numba=False)
    assert np.array_equal(d_nb, d_np) and np.array_equal(s_nb, s_np)

    rows = []
    for name, fn in [
        ("generate", lambda flag: generate(args.students, args.ticks, seed=args.seed, use_numba=flag)),
        ("fuse_batch", lambda flag: fuse_batch(labels, config, table, use_numba=flag)),
    ]:
        t_nb = best_of(lambda: fn(True), args.repeat)
        t_np = best_of(lambda: fn(False), args.repeat)
        rows.append((name, t_nb, t_np))

    print(f"{args.students} students x {args.ticks} ticks = {n} windows; outputs identical")
    print(f"numba first call (compile or cache load): {first_call:.3f} s")
    print(f"{'kernel':<12} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'Mwin/s nb':>10}")
    for name, t_nb, t_np in rows:
        print(f"{name:<12} {t_nb * 1e3:>10.2f} {t_np * 1e3:>10.2f} {t_np / t_nb:>8.1f} {n / t_nb / 1e6:>10.2f}")


if __name__ == "__main__":
    main()
