import numpy as np
import pytest

from bandcast.data import SplitSpec, SyntheticSpec, gen_synthetic, make_windows, split


def sinusoid(n, k, amp=1.0, phase=0.0):
    t = np.arange(n)
    return amp * np.cos(2.0 * np.pi * k * t / n + phase)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


def central_diff(f, arr, h=1e-5):
    """Finite-difference gradient of scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_windows():
    ds = gen_synthetic(SyntheticSpec(240, 2, ((3, 1.0, 0.3), (40, 0.4, 1.0)), 0.05, 7))
    return ds, split(make_windows(ds, 16, 4), SplitSpec())
