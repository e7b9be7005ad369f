"""Frequency alignment loss and temporal reference losses."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .errors import InvalidInput
from .spectral import _as_2d, dft


@dataclass
class LossValue:
    """A loss and, when requested, its gradient w.r.t. the prediction.

    For spectral losses ``gradient`` is complex: the real part holds the
    derivative w.r.t. the prediction's real parts, the imaginary part the
    derivative w.r.t. its imaginary parts.
    """

    value: float
    gradient: Optional[np.ndarray] = None


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise InvalidInput(f"shape mismatch: {a.shape} vs {b.shape}")


def faloss(target_spectrum, pred_spectrum, grad=False):
    """Mean complex modulus of the spectral difference.

    ``value = sum |T - P| / T.size``; with ``grad=True`` the gradient is
    ``-(T - P) / |T - P| / T.size`` and 0 where the moduli vanish.
    """
    t = np.asarray(target_spectrum, dtype=np.complex128)
    p = np.asarray(pred_spectrum, dtype=np.complex128)
    _check_shapes(t, p)
    if t.size == 0:
        raise InvalidInput("empty spectra")
    total, g = _backend.kernels.faloss_grad(t, p)
    value = total / t.size
    if not grad:
        return LossValue(value)
    return LossValue(value, g / t.size)


def spectral_grad_to_temporal(g):
    """Pull a complex spectral gradient back through the forward DFT.

    With ``P = F p`` for real ``p``, ``dL/dp = N * Re(ifft(g))`` column-wise.
    Works on (N,) , (N, C) or (B, N, C) arrays (time on axis -2 for 3-D).
    """
    g = np.asarray(g, dtype=np.complex128)
    if g.ndim == 3:
        b, n, c = g.shape
        cols = g.transpose(1, 0, 2).reshape(n, b * c)
        back = n * _backend.kernels.idft(cols).real
        return back.reshape(n, b, c).transpose(1, 0, 2)
    if g.ndim == 1:
        return g.shape[0] * _backend.kernels.idft(g[:, None]).real[:, 0]
    return g.shape[0] * _backend.kernels.idft(g).real


def faloss_temporal(target, pred, grad=False):
    """:func:`faloss` applied to the DFTs of two real signals."""
    t = _as_2d(target, np.float64, "target")
    p = _as_2d(pred, np.float64, "pred")
    _check_shapes(t, p)
    out = faloss(dft(t), dft(p), grad=grad)
    if grad:
        g = spectral_grad_to_temporal(out.gradient)
        out.gradient = g[:, 0] if np.ndim(pred) == 1 else g
    return out


def mae(target, pred):
    t, p = np.asarray(target, dtype=np.float64), np.asarray(pred, dtype=np.float64)
    _check_shapes(t, p)
    return float(np.mean(np.abs(t - p)))


def mse(target, pred):
    t, p = np.asarray(target, dtype=np.float64), np.asarray(pred, dtype=np.float64)
    _check_shapes(t, p)
    return float(np.mean((t - p) ** 2))


def check_mae_bound(target, pred, dft_fn=None):
    """Temporal MAE and the spectral bound ``sum_c sum_k |T[k,c] - P[k,c]|``.

    The bound always dominates the MAE. ``dft_fn`` substitutes the transform
    under test.
    """
    t = _as_2d(target, np.float64, "target")
    p = _as_2d(pred, np.float64, "pred")
    _check_shapes(t, p)
    transform = dft_fn or dft
    bound = float(np.sum(np.abs(np.asarray(transform(t)) - np.asarray(transform(p)))))
    return mae(t, p), bound
