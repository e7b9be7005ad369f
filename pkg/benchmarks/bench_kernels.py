"""Compare the compiled and numpy kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 200]

Times each kernel at training-sized inputs, then one PLFM training epoch per
backend (the backend is switched by patching ``bandcast._backend.kernels``).
"""

import argparse
import timeit

import numpy as np

from bandcast import _backend
from bandcast.data import SplitSpec, SyntheticSpec, gen_synthetic, make_windows, split
from bandcast.nn import TrainHyper
from bandcast.plfm import PlfmConfig, train_plfm


def kernel_cases(rng):
    short = rng.normal(size=(16, 1))
    batch = rng.normal(size=(16, 32))
    hist = rng.normal(size=(64, 32))
    long = rng.normal(size=(1024, 4))
    z = np.fft.fft(batch, axis=0)
    w = z + rng.normal(size=z.shape)
    return [
        ("dft 16x1", "dft", (short,)),
        ("dft 16x32", "dft", (batch,)),
        ("dft 1024x4", "dft", (long,)),
        ("idft 16x32", "idft", (z,)),
        ("faloss_grad 16x32", "faloss_grad", (z, w)),
        ("patch_dft 64x32 P12 S6", "patch_dft", (hist, 12, 6)),
    ]


def time_call(fn, args, repeat):
    t = timeit.repeat(lambda: fn(*args), number=repeat, repeat=3)
    return min(t) / repeat * 1e6


def time_epoch(name, windows, repeat=5):
    """Best of ``repeat`` single-epoch runs, after one warm-up run."""
    _backend.kernels = _backend.get(name)
    cfg = PlfmConfig(64, 16, patch_len=12, stride=6, hidden_dim=64)
    hyper = TrainHyper(epochs=1, seed=0)
    train_plfm(cfg, windows, hyper)
    return min(timeit.repeat(lambda: train_plfm(cfg, windows, hyper), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    names = _backend.available()
    if "cython" not in names:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}" + "".join(f"{n + ' (us)':>16}" for n in names) + (f"{'speedup':>10}" if len(names) > 1 else ""))
    for label, fname, fargs in kernel_cases(rng):
        times = [time_call(getattr(_backend.get(n), fname), fargs, args.repeat) for n in names]
        line = f"{label:<26}" + "".join(f"{t:>16.1f}" for t in times)
        if len(times) > 1:
            line += f"{times[1] / times[0]:>9.2f}x"
        print(line)

    ds = gen_synthetic(SyntheticSpec(2000, 1, ((2, 1.0, 0.0), (25, 0.5, 0.0)), 0.3, 0))
    train, _, _ = split(make_windows(ds, 64, 16), SplitSpec())
    active = _backend.kernels
    try:
        epochs = [time_epoch(n, train) for n in names]
    finally:
        _backend.kernels = active
    line = f"{'PLFM epoch (s)':<26}" + "".join(f"{t:>16.3f}" for t in epochs)
    if len(epochs) > 1:
        line += f"{epochs[1] / epochs[0]:>9.2f}x"
    print(line)


if __name__ == "__main__":
    main()
