# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled spectral kernels.

Direct DFT summation over a precomputed twiddle table. For the short windows
used in training this beats a general FFT plus the numpy temporaries around
it; longer transforms are handed to numpy. Signatures mirror ``_kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, M_PI

cnp.import_array()

NAME = "cython"


def _check_2d(a, what):
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"{what} must be a non-empty (N, M) array, got shape {a.shape}")
# direct summation only while its multiply count stays below this; larger
# transforms go to numpy's FFT
DIRECT_WORK = 8192
# the inverse has no real-input symmetry to exploit, so it crosses over sooner
IDFT_WORK = 2048


cdef void _twiddles(Py_ssize_t n, double[::1] c, double[::1] s) noexcept nogil:
    cdef Py_ssize_t j
    cdef double w = 2.0 * M_PI / n
    for j in range(n):
        c[j] = cos(w * j)
        s[j] = sin(w * j)


def dft(x):
    """Unnormalized forward DFT of each column of a real (N, M) array."""
    x = np.asarray(x, dtype=np.float64)
    _check_2d(x, "x")
    if x.shape[0] * (x.shape[0] // 2 + 1) * x.shape[1] > DIRECT_WORK:
        return np.fft.fft(x, axis=0)
    cdef double[:, ::1] xv = np.ascontiguousarray(x)
    cdef Py_ssize_t n = xv.shape[0], m = xv.shape[1]
    out = np.zeros((n, m), dtype=np.complex128)
    # interleaved (re, im) view of the complex output
    cdef double[:, ::1] ov = out.view(np.float64)
    cdef double[::1] c = np.empty(n)
    cdef double[::1] s = np.empty(n)
    cdef Py_ssize_t k, t, j, idx, half = n // 2
    cdef double cv, sv, v
    with nogil:
        _twiddles(n, c, s)
        for k in range(half + 1):
            idx = 0
            for t in range(n):
                cv = c[idx]
                sv = s[idx]
                for j in range(m):
                    v = xv[t, j]
                    ov[k, 2 * j] += v * cv
                    ov[k, 2 * j + 1] -= v * sv
                idx += k
                if idx >= n:
                    idx -= n
        # real input: X[n - k] = conj(X[k])
        for k in range(half + 1, n):
            for j in range(m):
                ov[k, 2 * j] = ov[n - k, 2 * j]
                ov[k, 2 * j + 1] = -ov[n - k, 2 * j + 1]
    return out


def idft(z):
    """Inverse DFT (1/N normalized) of each column of a complex (N, M) array."""
    z = np.asarray(z, dtype=np.complex128)
    _check_2d(z, "z")
    if z.shape[0] * z.shape[0] * z.shape[1] > IDFT_WORK:
        return np.fft.ifft(z, axis=0)
    cdef double[:, ::1] zv = np.ascontiguousarray(z).view(np.float64)
    cdef Py_ssize_t n = zv.shape[0], m = zv.shape[1] // 2
    out = np.zeros((n, m), dtype=np.complex128)
    cdef double[:, ::1] ov = out.view(np.float64)
    cdef double[::1] c = np.empty(n)
    cdef double[::1] s = np.empty(n)
    cdef Py_ssize_t k, t, j, idx
    cdef double cv, sv, a, b
    cdef double inv_n = 1.0 / n
    with nogil:
        _twiddles(n, c, s)
        for t in range(n):
            idx = 0
            for k in range(n):
                cv = c[idx]
                sv = s[idx]
                for j in range(m):
                    a = zv[k, 2 * j]
                    b = zv[k, 2 * j + 1]
                    ov[t, 2 * j] += a * cv - b * sv
                    ov[t, 2 * j + 1] += a * sv + b * cv
                idx += t
                if idx >= n:
                    idx -= n
            for j in range(2 * m):
                ov[t, j] *= inv_n
    return out


def faloss_grad(target, pred):
    """Sum of complex moduli of ``target - pred`` and the unit-phasor gradient."""
    shape = np.shape(target)
    if np.shape(pred) != shape:
        raise ValueError(f"target {shape} and pred {np.shape(pred)} differ in shape")
    cdef double[::1] tv = np.ascontiguousarray(target, dtype=np.complex128).reshape(-1).view(np.float64)
    cdef double[::1] pv = np.ascontiguousarray(pred, dtype=np.complex128).reshape(-1).view(np.float64)
    cdef Py_ssize_t size = tv.shape[0] // 2, i
    grad = np.zeros(size, dtype=np.complex128)
    cdef double[::1] gv = grad.view(np.float64)
    cdef double dr, di, mod, total = 0.0
    with nogil:
        for i in range(size):
            dr = tv[2 * i] - pv[2 * i]
            di = tv[2 * i + 1] - pv[2 * i + 1]
            mod = sqrt(dr * dr + di * di)
            total += mod
            if mod > 0.0:
                gv[2 * i] = -dr / mod
                gv[2 * i + 1] = -di / mod
    return total, grad.reshape(shape)


def patch_dft(x, Py_ssize_t patch_len, Py_ssize_t stride):
    """Concatenated per-patch DFTs of each column: (patch_len * n_patches, M)."""
    x = np.asarray(x, dtype=np.float64)
    _check_2d(x, "x")
    if patch_len < 1 or stride < 1 or patch_len > x.shape[0]:
        raise ValueError(f"invalid patching P={patch_len}, S={stride} for N={x.shape[0]}")
    cdef double[:, ::1] xv = np.ascontiguousarray(x)
    cdef Py_ssize_t n = xv.shape[0], m = xv.shape[1]
    cdef Py_ssize_t n_patches = (n - patch_len) // stride + 1
    out = np.zeros((n_patches * patch_len, m), dtype=np.complex128)
    cdef double[:, ::1] ov = out.view(np.float64)
    cdef double[::1] c = np.empty(patch_len)
    cdef double[::1] s = np.empty(patch_len)
    cdef Py_ssize_t p, k, t, j, idx, row, start
    cdef double cv, sv, v
    with nogil:
        _twiddles(patch_len, c, s)
        for p in range(n_patches):
            start = p * stride
            for k in range(patch_len):
                row = p * patch_len + k
                idx = 0
                for t in range(patch_len):
                    cv = c[idx]
                    sv = s[idx]
                    for j in range(m):
                        v = xv[start + t, j]
                        ov[row, 2 * j] += v * cv
                        ov[row, 2 * j + 1] -= v * sv
                    idx += k
                    if idx >= patch_len:
                        idx -= patch_len
    return out
