"""Pure-numpy spectral kernels.

Same signatures as the compiled ``_kernels`` module. Every array argument is
laid out with time on axis 0 and independent series on axis 1.
"""

import numpy as np

NAME = "python"


def _check_2d(a, what):
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"{what} must be a non-empty (N, M) array, got shape {a.shape}")


def dft(x):
    """Unnormalized forward DFT of each column of a real (N, M) array."""
    x = np.asarray(x, dtype=np.float64)
    _check_2d(x, "x")
    return np.fft.fft(x, axis=0)


def idft(z):
    """Inverse DFT (1/N normalized) of each column of a complex (N, M) array."""
    z = np.asarray(z, dtype=np.complex128)
    _check_2d(z, "z")
    return np.fft.ifft(z, axis=0)


def faloss_grad(target, pred):
    """Sum of complex moduli of ``target - pred`` and the unit-phasor gradient.

    The returned gradient is ``-(target - pred) / |target - pred|`` with the
    zero-modulus entries set to 0; the caller applies the mean scaling.
    """
    target = np.asarray(target, dtype=np.complex128)
    pred = np.asarray(pred, dtype=np.complex128)
    if target.shape != pred.shape:
        raise ValueError(f"target {target.shape} and pred {pred.shape} differ in shape")
    diff = target - pred
    mod = np.abs(diff)
    grad = np.zeros_like(diff)
    nz = mod > 0.0
    grad[nz] = -diff[nz] / mod[nz]
    return float(mod.sum()), grad


def patch_dft(x, patch_len, stride):
    """Concatenated per-patch DFTs of each column: (patch_len * n_patches, M)."""
    x = np.asarray(x, dtype=np.float64)
    _check_2d(x, "x")
    n = x.shape[0]
    if patch_len < 1 or stride < 1 or patch_len > n:
        raise ValueError(f"invalid patching P={patch_len}, S={stride} for N={n}")
    n_patches = (n - patch_len) // stride + 1
    # windows: (n_patches, M, patch_len)
    windows = np.lib.stride_tricks.sliding_window_view(x, patch_len, axis=0)[::stride][:n_patches]
    spec = np.fft.fft(windows, axis=2)
    return np.ascontiguousarray(spec.transpose(0, 2, 1).reshape(n_patches * patch_len, x.shape[1]))
