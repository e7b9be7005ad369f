"""High-frequency residual learner trained on top of a frozen PLFM."""

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import checkpoint as ckpt
from .data import Normalizer, stack_windows
from .errors import IncompatibleCheckpoint, InvalidInput
from .loss import faloss, spectral_grad_to_temporal
from .nn import MLP, TrainHyper, fit
from .spectral import dft, high_pass

FORMAT = "resid-v1"


class ResidualBackbone(Protocol):
    """Maps a high-passed history batch (B, H, C) to a residual batch (B, L, C)."""

    kind: str

    def forward(self, x): ...

    def backward(self, cache, dout): ...

    def parameters(self): ...

    def config(self): ...


class MLPBackbone:
    """Two-layer MLP over the flattened (H * C) input, producing L * C outputs.

    The output layer starts at zero, so an untrained backbone predicts a zero
    residual.
    """

    kind = "mlp"

    def __init__(self, history_len, horizon, channels=1, hidden_dim=64, activation="silu", seed=0):
        self.history_len, self.horizon, self.channels = history_len, horizon, channels
        self.hidden_dim, self.activation, self.seed = hidden_dim, activation, seed
        self.net = MLP(
            history_len * channels,
            hidden_dim,
            horizon * channels,
            activation,
            np.random.default_rng(seed),
            zero_output=True,
        )

    def config(self):
        return {
            "history_len": self.history_len,
            "horizon": self.horizon,
            "channels": self.channels,
            "hidden_dim": self.hidden_dim,
            "activation": self.activation,
            "seed": self.seed,
        }

    def parameters(self):
        return self.net.params

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != (self.history_len, self.channels):
            raise InvalidInput(f"input must be (B, {self.history_len}, {self.channels}), got {x.shape}")
        out, cache = self.net.forward(x.reshape(x.shape[0], -1))
        return out.reshape(x.shape[0], self.horizon, self.channels), cache

    def backward(self, cache, dout):
        return self.net.backward(cache, dout.reshape(dout.shape[0], -1))


BACKBONES = {"mlp": MLPBackbone}


def _batched_high_pass(xn, keep_fraction):
    b, h, ch = xn.shape
    cols = xn.transpose(1, 0, 2).reshape(h, b * ch)
    return high_pass(cols, keep_fraction).reshape(h, b, ch).transpose(1, 0, 2)


def residual_forward(backbone, history, keep_fraction):
    """Residual token from the high-passed history: (H, C) -> (L, C), batched (B, H, C) too."""
    x = np.asarray(history, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    out, _ = backbone.forward(_batched_high_pass(x, keep_fraction))
    return out[0] if single else out


@dataclass
class ResidualLearner:
    """A trained backbone plus what it was trained against."""

    backbone: object
    keep_fraction: float
    normalizer: Normalizer
    plfm_checksum: str
    history: dict = None

    def token_normalized(self, history):
        return residual_forward(self.backbone, self.normalizer.transform(history), self.keep_fraction)

    def token(self, history):
        """Residual in original units (scale only, no offset), (L, C)."""
        return self.token_normalized(history) * self.normalizer.std

    def state_dict(self):
        return {
            "format": FORMAT,
            "backbone": self.backbone.kind,
            "config": self.backbone.config(),
            "keep_fraction": self.keep_fraction,
            "normalization": self.normalizer.to_dict(),
            "plfm_checksum": self.plfm_checksum,
            "tensors": {k: ckpt.encode_tensor(v) for k, v in sorted(self.backbone.parameters().items())},
        }

    @classmethod
    def from_state_dict(cls, payload):
        if payload.get("format") != FORMAT:
            raise IncompatibleCheckpoint(f"expected {FORMAT!r}, found {payload.get('format')!r}")
        kind = payload["backbone"]
        if kind not in BACKBONES:
            raise IncompatibleCheckpoint(f"unknown backbone kind {kind!r}")
        backbone = BACKBONES[kind](**payload["config"])
        params = backbone.parameters()
        for k, v in payload["tensors"].items():
            arr = ckpt.decode_tensor(v)
            if k not in params or params[k].shape != arr.shape:
                raise IncompatibleCheckpoint(f"tensor {k} does not fit backbone {kind!r}")
            params[k][...] = arr
        return cls(
            backbone,
            payload["keep_fraction"],
            Normalizer.from_dict(payload["normalization"]),
            payload["plfm_checksum"],
        )

    def checksum(self):
        return ckpt.checksum(self.state_dict())

    def save(self, path):
        return ckpt.save(path, self.state_dict())

    @classmethod
    def load(cls, path):
        return cls.from_state_dict(ckpt.load(path, FORMAT))


class _Batches:
    def __init__(self, plfm, windows, keep_fraction):
        x, y = stack_windows(windows)
        norm = plfm.normalizer
        xn = norm.transform(x)
        self.low = plfm.low_token_normalized(x)
        self.hp = _batched_high_pass(xn, keep_fraction)
        yn = norm.transform(y)
        b, l, ch = yn.shape
        self.target = dft(yn.transpose(1, 0, 2).reshape(l, b * ch)).reshape(l, b, ch).transpose(1, 0, 2)
        self.n = len(windows)


def _loss_and_grads(backbone, batches, idx, grad=True):
    res, cache = backbone.forward(batches.hp[idx])
    combined = batches.low[idx] + res
    b, l, ch = combined.shape
    pred = dft(combined.transpose(1, 0, 2).reshape(l, b * ch)).reshape(l, b, ch).transpose(1, 0, 2)
    out = faloss(batches.target[idx], pred, grad=grad)
    if not grad:
        return out.value, None
    return out.value, backbone.backward(cache, spectral_grad_to_temporal(out.gradient))


def combined_loss(plfm, learner_or_none, windows):
    """Mean FALoss of low token (+ residual) against the unfiltered targets."""
    keep = plfm.config.keep_fraction if learner_or_none is None else learner_or_none.keep_fraction
    batches = _Batches(plfm, windows, keep)
    idx = np.arange(batches.n)
    if learner_or_none is None:
        zero = _ZeroBackbone(plfm.config.horizon, plfm.config.channels)
        return _loss_and_grads(zero, batches, idx, grad=False)[0]
    return _loss_and_grads(learner_or_none.backbone, batches, idx, grad=False)[0]


class _ZeroBackbone:
    def __init__(self, horizon, channels):
        self.horizon, self.channels = horizon, channels

    def forward(self, x):
        return np.zeros((x.shape[0], self.horizon, self.channels)), None


def train_residual(backbone, plfm, train, hyper=TrainHyper(), val=None, keep_fraction=None):
    """Fit ``backbone`` so that low token + residual matches the raw target spectrum.

    The PLFM is read only; its checksum is verified after training.
    """
    if not train:
        raise InvalidInput("training set is empty")
    keep = plfm.config.keep_fraction if keep_fraction is None else keep_fraction
    before = plfm.checksum()
    tr = _Batches(plfm, train, keep)
    sel = _Batches(plfm, val, keep) if val else tr
    all_sel = np.arange(sel.n)
    history = fit(
        backbone.parameters(),
        lambda idx: _loss_and_grads(backbone, tr, idx),
        lambda: _loss_and_grads(backbone, sel, all_sel, grad=False)[0],
        tr.n,
        hyper,
    )
    if plfm.checksum() != before:
        raise RuntimeError("PLFM parameters changed during residual training")
    return ResidualLearner(backbone, keep, plfm.normalizer, before, history)
