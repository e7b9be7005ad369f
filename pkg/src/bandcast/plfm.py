"""Patch low-frequency forecaster.

The history is z-scored, cut into overlapping patches and each patch is
Fourier transformed. The concatenated real parts feed one MLP and the
imaginary parts an identically shaped second MLP; their outputs are the
real and imaginary parts of the forecast spectrum (``L`` bins). Weights are
shared across channels. Training minimizes the frequency alignment loss
against the spectrum of the low-passed target.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import _backend
from . import checkpoint as ckpt
from .data import Normalizer, stack_windows
from .errors import IncompatibleCheckpoint, InvalidInput
from .loss import faloss
from .nn import ACTIVATIONS, MLP, TrainHyper, fit
from .spectral import dft, idft, low_pass, num_patches

FORMAT = "plfm-v1"
# The learned spectrum is not constrained to be Hermitian, so by default the
# token keeps the real part of the inverse (the Hermitian projection) without
# a residue check. Pass a relative tolerance to enforce one.
TOKEN_IMAG_TOL = None


@dataclass(frozen=True)
class PlfmConfig:
    history_len: int
    horizon: int
    channels: int = 1
    patch_len: int = 12
    stride: int = 6
    hidden_dim: int = 64
    keep_fraction: float = 0.4
    activation: str = "silu"

    def __post_init__(self):
        if not 1 <= self.stride < self.patch_len <= self.history_len:
            raise InvalidInput(
                f"need 1 <= stride < patch_len <= history_len, got "
                f"S={self.stride}, P={self.patch_len}, H={self.history_len}"
            )
        if self.hidden_dim < 1 or self.horizon < 1 or self.channels < 1:
            raise InvalidInput("hidden_dim, horizon and channels must be >= 1")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise InvalidInput(f"keep_fraction must lie in (0, 1], got {self.keep_fraction}")
        if self.activation not in ACTIVATIONS:
            raise InvalidInput(f"activation must be one of {ACTIVATIONS}")

    @property
    def num_patches(self):
        return num_patches(self.history_len, self.patch_len, self.stride)

    @property
    def input_dim(self):
        return self.patch_len * self.num_patches


class PLFM:
    """Dual real/imaginary MLPs over concatenated patch spectra."""

    def __init__(self, config, seed=0, normalizer=None):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.real = MLP(c.input_dim, c.hidden_dim, c.horizon, c.activation, rng)
        self.imag = MLP(c.input_dim, c.hidden_dim, c.horizon, c.activation, rng)
        self.normalizer = normalizer or Normalizer.identity(c.channels)
        self.history = None

    def parameters(self):
        """Flat view of every weight tensor, keyed ``real.W1`` ... ``imag.b2``."""
        out = {f"real.{k}": v for k, v in self.real.params.items()}
        out.update({f"imag.{k}": v for k, v in self.imag.params.items()})
        return out

    def num_params(self):
        return self.real.num_params() + self.imag.num_params()

    def _check(self, x):
        c = self.config
        if x.shape[-2:] != (c.history_len, c.channels):
            raise InvalidInput(
                f"history must be ({c.history_len}, {c.channels}), got {x.shape[-2:]}"
            )

    def spectral_inputs(self, xn):
        """Patch spectra of normalized histories (B, H, C) as two (B*C, P*N_p) row blocks."""
        b, h, ch = xn.shape
        cols = xn.transpose(1, 0, 2).reshape(h, b * ch)
        spec = _backend.kernels.patch_dft(cols, self.config.patch_len, self.config.stride)
        return np.ascontiguousarray(spec.real.T), np.ascontiguousarray(spec.imag.T)

    def _rows_to_spectrum(self, out_re, out_im, batch):
        ch, l = self.config.channels, self.config.horizon
        z = out_re + 1j * out_im
        return z.reshape(batch, ch, l).transpose(0, 2, 1)

    def forward(self, history):
        """Forecast spectrum, shape (L, C) (or (B, L, C) for batched input), normalized units."""
        x = np.asarray(history, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        self._check(x)
        zr, zi = self.spectral_inputs(self.normalizer.transform(x))
        out = self._rows_to_spectrum(self.real(zr), self.imag(zi), x.shape[0])
        return out[0] if single else out

    def low_token_normalized(self, history, imag_tol=TOKEN_IMAG_TOL):
        spec = self.forward(history)
        if spec.ndim == 2:
            return idft(spec, imag_tol=imag_tol)
        b, l, ch = spec.shape
        cols = idft(spec.transpose(1, 0, 2).reshape(l, b * ch), imag_tol=imag_tol)
        return cols.reshape(l, b, ch).transpose(1, 0, 2)

    def low_token(self, history, imag_tol=TOKEN_IMAG_TOL):
        """Real low-frequency token in the data's original scale, (L, C)."""
        return self.normalizer.inverse(self.low_token_normalized(history, imag_tol))

    def state_dict(self):
        return {
            "format": FORMAT,
            "config": asdict(self.config),
            "normalization": self.normalizer.to_dict(),
            "tensors": {k: ckpt.encode_tensor(v) for k, v in sorted(self.parameters().items())},
        }

    @classmethod
    def from_state_dict(cls, payload):
        if payload.get("format") != FORMAT:
            raise IncompatibleCheckpoint(f"expected {FORMAT!r}, found {payload.get('format')!r}")
        config = PlfmConfig(**payload["config"])
        model = cls.__new__(cls)
        model.config = config
        model.normalizer = Normalizer.from_dict(payload["normalization"])
        tensors = {k: ckpt.decode_tensor(v) for k, v in payload["tensors"].items()}
        model.real = MLP.from_params({k[5:]: v for k, v in tensors.items() if k.startswith("real.")}, config.activation)
        model.imag = MLP.from_params({k[5:]: v for k, v in tensors.items() if k.startswith("imag.")}, config.activation)
        model.history = None
        expected = PLFM(config).parameters()
        for k, v in model.parameters().items():
            if v.shape != expected[k].shape:
                raise IncompatibleCheckpoint(f"tensor {k} has shape {v.shape}, expected {expected[k].shape}")
        return model

    def checksum(self):
        return ckpt.checksum(self.state_dict())

    def save(self, path):
        return ckpt.save(path, self.state_dict())

    @classmethod
    def load(cls, path):
        return cls.from_state_dict(ckpt.load(path, FORMAT))


def plfm_forward(model, history):
    return model.forward(history)


def plfm_target(target, keep_fraction):
    """Supervision spectrum: DFT of the low-passed target."""
    return dft(low_pass(target, keep_fraction))


def plfm_low_token(model, history, imag_tol=TOKEN_IMAG_TOL):
    return model.low_token(history, imag_tol)


def _batched_targets(yn, keep_fraction):
    """DFT of the low-passed normalized targets, (B, L, C) -> (B, L, C) complex."""
    b, l, ch = yn.shape
    cols = yn.transpose(1, 0, 2).reshape(l, b * ch)
    spec = dft(low_pass(cols, keep_fraction))
    return spec.reshape(l, b, ch).transpose(1, 0, 2)


class _Batches:
    """Precomputed spectral inputs and targets for one window set."""

    def __init__(self, model, windows):
        x, y = stack_windows(windows)
        model._check(x)
        if y.shape[1:] != (model.config.horizon, model.config.channels):
            raise InvalidInput(f"targets must be ({model.config.horizon}, {model.config.channels})")
        ch = model.config.channels
        zr, zi = model.spectral_inputs(model.normalizer.transform(x))
        self.zr = zr.reshape(len(windows), ch, -1)
        self.zi = zi.reshape(len(windows), ch, -1)
        self.target = _batched_targets(model.normalizer.transform(y), model.config.keep_fraction)
        self.n = len(windows)


def _loss_and_grads(model, batches, idx, grad=True):
    ch, l = model.config.channels, model.config.horizon
    zr = batches.zr[idx].reshape(len(idx) * ch, -1)
    zi = batches.zi[idx].reshape(len(idx) * ch, -1)
    out_re, cache_re = model.real.forward(zr)
    out_im, cache_im = model.imag.forward(zi)
    pred = model._rows_to_spectrum(out_re, out_im, len(idx))
    res = faloss(batches.target[idx], pred, grad=grad)
    if not grad:
        return res.value, None
    g = res.gradient.transpose(0, 2, 1).reshape(len(idx) * ch, l)
    grads = {f"real.{k}": v for k, v in model.real.backward(cache_re, np.ascontiguousarray(g.real)).items()}
    grads.update({f"imag.{k}": v for k, v in model.imag.backward(cache_im, np.ascontiguousarray(g.imag)).items()})
    return res.value, grads


def plfm_loss(model, windows):
    """Mean frequency alignment loss of ``model`` on ``windows``."""
    batches = _Batches(model, windows)
    return _loss_and_grads(model, batches, np.arange(batches.n), grad=False)[0]


def train_plfm(config, train, hyper=TrainHyper(), val=None, normalizer=None):
    """Fit a PLFM with mini-batch Adam on the frequency alignment loss.

    Parameters
    ----------
    config : PlfmConfig
    train : list of SeriesWindow
    hyper : TrainHyper
    val : list of SeriesWindow, optional
        Selection set; the training set is used when absent.
    normalizer : Normalizer, optional
        Defaults to statistics fitted on ``train``.

    Returns
    -------
    PLFM
        Parameters of the epoch with the lowest selection loss; the loss
        curves are on ``model.history``.
    """
    if not train:
        raise InvalidInput("training set is empty")
    model = PLFM(config, seed=hyper.seed, normalizer=normalizer or Normalizer.fit(train))
    tr = _Batches(model, train)
    sel = _Batches(model, val) if val else tr
    all_sel = np.arange(sel.n)
    model.history = fit(
        model.parameters(),
        lambda idx: _loss_and_grads(model, tr, idx),
        lambda: _loss_and_grads(model, sel, all_sel, grad=False)[0],
        tr.n,
        hyper,
    )
    return model
