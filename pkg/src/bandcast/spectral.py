"""Discrete Fourier transforms, band filters and overlapping patching.

Signals are real arrays with time on axis 0. A 1-D array is a single
channel; outputs keep the dimensionality of the input. Spectra are plain
complex arrays of the same shape, so the original length is ``len(spec)``.

The forward transform is unnormalized, ``X[k] = sum_n x[n] exp(-2j*pi*n*k/N)``;
the inverse carries the ``1/N`` factor.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import _backend
from .errors import InvalidInput, NonRealReconstruction

IMAG_TOL = 1e-8


def _as_2d(x, dtype, name="signal"):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise InvalidInput(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite values")
    return arr


def _restore(arr, like):
    return arr[:, 0] if np.ndim(like) == 1 else arr


def dft(signal):
    """Full complex DFT of every channel.

    Parameters
    ----------
    signal : array_like, shape (N,) or (N, C)

    Returns
    -------
    numpy.ndarray
        Complex spectrum with the same shape as ``signal``.
    """
    x = _as_2d(signal, np.float64)
    return _restore(_backend.kernels.dft(x), signal)


def idft(spectrum, imag_tol=IMAG_TOL):
    """Inverse DFT returning the real part.

    The imaginary residue must satisfy
    ``max|imag| <= imag_tol * (1 + max|real|)``; otherwise
    :class:`NonRealReconstruction` is raised. Pass ``imag_tol=None`` to skip
    the check and keep the Hermitian part silently.
    """
    z = _as_2d(spectrum, np.complex128, "spectrum")
    out = _backend.kernels.idft(z)
    if imag_tol is not None:
        max_imag = float(np.max(np.abs(out.imag)))
        limit = imag_tol * (1.0 + float(np.max(np.abs(out.real))))
        if max_imag > limit:
            raise NonRealReconstruction(max_imag, limit)
    return _restore(np.ascontiguousarray(out.real), spectrum)


def cutoff_bins(n, keep_fraction):
    """Number K of lowest non-negative frequency bins kept by the filters."""
    if not (0.0 < keep_fraction <= 1.0):
        raise InvalidInput(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    half = n // 2 + 1
    # guard against 0.1 * 10 -> 1.0000000000000002 rounding up
    return max(1, min(half, math.ceil(keep_fraction * half - 1e-9)))


def low_band_mask(n, keep_fraction):
    """Boolean mask over the N full-DFT bins that belong to the low band."""
    k = cutoff_bins(n, keep_fraction)
    bins = np.arange(n)
    return np.minimum(bins, n - bins) < k


def _filter(signal, keep_fraction, low):
    x = _as_2d(signal, np.float64)
    mask = low_band_mask(x.shape[0], keep_fraction)
    if not low:
        mask = ~mask
    if mask.all():
        return _restore(x.copy(), signal)
    if not mask.any():
        return _restore(np.zeros_like(x), signal)
    spec = _backend.kernels.dft(x)
    spec[~mask] = 0.0
    out = _backend.kernels.idft(spec).real
    return _restore(np.ascontiguousarray(out), signal)


def low_pass(signal, keep_fraction):
    """Keep the lowest ``K = max(1, ceil(rho * (N//2 + 1)))`` bins and their mirrors."""
    return _filter(signal, keep_fraction, low=True)


def high_pass(signal, keep_fraction):
    """Complement of :func:`low_pass` with the same cutoff."""
    return _filter(signal, keep_fraction, low=False)


def _check_patching(n, patch_len, stride):
    if stride < 1:
        raise InvalidInput(f"stride must be >= 1, got {stride}")
    if stride >= patch_len:
        raise InvalidInput(f"stride ({stride}) must be smaller than patch_len ({patch_len})")
    if patch_len > n:
        raise InvalidInput(f"patch_len ({patch_len}) exceeds signal length ({n})")


def num_patches(n, patch_len, stride):
    """Window count ``(n - patch_len) // stride + 1``."""
    _check_patching(n, patch_len, stride)
    return (n - patch_len) // stride + 1


def patch(signal, patch_len, stride):
    """Split a signal into overlapping windows; rows past the last full window are dropped."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 0 or x.shape[0] == 0:
        raise InvalidInput("signal is empty")
    count = num_patches(x.shape[0], patch_len, stride)
    return [x[i * stride : i * stride + patch_len].copy() for i in range(count)]


@dataclass(frozen=True)
class PatchSpectra:
    """Per-patch DFTs stacked along the frequency axis, shape (P * N_p, C)."""

    coeffs: np.ndarray
    patch_len: int
    stride: int
    num_patches: int

    def block(self, i):
        """Spectrum of patch ``i``."""
        return self.coeffs[i * self.patch_len : (i + 1) * self.patch_len]


def patch_spectra(signal, patch_len, stride):
    x = _as_2d(signal, np.float64)
    count = num_patches(x.shape[0], patch_len, stride)
    coeffs = _backend.kernels.patch_dft(x, patch_len, stride)
    return PatchSpectra(_restore(coeffs, signal), patch_len, stride, count)


def energy(signal):
    x = np.asarray(signal, dtype=np.float64)
    return float(np.sum(x * x))


def parseval_gap(signal, dft_fn=None):
    """Per-channel ``|sum|x|^2 - sum|X|^2 / N|``, summed over channels.

    ``dft_fn`` substitutes the transform under test (defaults to :func:`dft`).
    """
    x = _as_2d(signal, np.float64)
    spec = np.asarray((dft_fn or dft)(x))
    n = x.shape[0]
    temporal = np.sum(x * x, axis=0)
    spectral = np.sum(np.abs(spec) ** 2, axis=0) / n
    return float(np.sum(np.abs(temporal - spectral)))
