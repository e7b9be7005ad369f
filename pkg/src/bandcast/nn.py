"""Small dense networks with hand-written backprop, and Adam."""

from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from .errors import DivergedTraining

ACTIVATIONS = ("silu", "tanh", "identity")
SCHEDULES = ("constant", "cosine")


def xavier_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _act(name, x):
    if name == "silu":
        return x / (1.0 + np.exp(-x))
    if name == "tanh":
        return np.tanh(x)
    return x


def _act_grad(name, x):
    if name == "silu":
        s = 1.0 / (1.0 + np.exp(-x))
        return s * (1.0 + x * (1.0 - s))
    if name == "tanh":
        return 1.0 - np.tanh(x) ** 2
    return np.ones_like(x)


class MLP:
    """Affine -> activation -> affine, applied row-wise to an (M, in) batch.

    Parameters live in ``self.params`` as ``W1 (hidden, in)``, ``b1``,
    ``W2 (out, hidden)``, ``b2``.
    """

    def __init__(self, in_dim, hidden_dim, out_dim, activation="silu", rng=None, zero_output=False):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.activation = activation
        self.params = {
            "W1": xavier_uniform(rng, hidden_dim, in_dim),
            "b1": np.zeros(hidden_dim),
            "W2": np.zeros((out_dim, hidden_dim)) if zero_output else xavier_uniform(rng, out_dim, hidden_dim),
            "b2": np.zeros(out_dim),
        }

    @classmethod
    def from_params(cls, params, activation):
        obj = cls.__new__(cls)
        obj.activation = activation
        obj.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        return obj

    @property
    def in_dim(self):
        return self.params["W1"].shape[1]

    @property
    def out_dim(self):
        return self.params["W2"].shape[0]

    def num_params(self):
        return sum(v.size for v in self.params.values())

    def forward(self, x):
        """Return ``(out, cache)`` for a (M, in) batch."""
        p = self.params
        pre = x @ p["W1"].T + p["b1"]
        h = _act(self.activation, pre)
        return h @ p["W2"].T + p["b2"], (x, pre, h)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, dout):
        x, pre, h = cache
        p = self.params
        dpre = (dout @ p["W2"]) * _act_grad(self.activation, pre)
        return {
            "W1": dpre.T @ x,
            "b1": dpre.sum(axis=0),
            "W2": dout.T @ h,
            "b2": dout.sum(axis=0),
        }


class Adam:
    """Adam over a flat dict of named arrays; updates in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in sorted(self.params):
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


@dataclass(frozen=True)
class TrainHyper:
    """Optimizer settings for one training phase.

    Model selection keeps the parameters from the epoch with the lowest
    validation loss (the untrained state counts as epoch 0). ``patience``
    stops training after that many epochs without improvement; ``None``
    always runs all epochs. ``schedule="cosine"`` anneals the step size from
    ``lr`` towards zero over ``epochs``.
    """

    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 300
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: Optional[int] = None
    schedule: str = "constant"

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


def fit(params, batch_step, val_loss, n_train, hyper):
    """Mini-batch Adam with best-validation-epoch selection.

    Parameters
    ----------
    params : dict of str -> ndarray
        Updated in place during training, then overwritten with the selected
        epoch's values.
    batch_step : callable
        ``batch_step(indices) -> (loss, grads)`` for a batch of training rows.
    val_loss : callable
        ``val_loss() -> float`` on the current parameters.
    n_train : int
    hyper : TrainHyper

    Returns
    -------
    dict
        ``train``, ``val`` loss per epoch (index 0 is before training) and
        ``best_epoch``.
    """
    rng = np.random.default_rng(hyper.seed)
    opt = Adam(params, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
    best = val_loss()
    best_params = copy_params(params)
    history = {"train": [float("nan")], "val": [best], "best_epoch": 0}
    for epoch in range(1, hyper.epochs + 1):
        if hyper.schedule == "cosine":
            opt.lr = hyper.lr * 0.5 * (1.0 + math.cos(math.pi * (epoch - 1) / hyper.epochs))
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            loss, grads = batch_step(idx)
            if not np.isfinite(loss):
                raise DivergedTraining(epoch, loss)
            opt.step(grads)
            total += loss * len(idx)
        history["train"].append(total / n_train)
        current = val_loss()
        if not np.isfinite(current):
            raise DivergedTraining(epoch, current)
        history["val"].append(current)
        if current < best:
            best = current
            best_params = copy_params(params)
            history["best_epoch"] = epoch
        elif hyper.patience is not None and epoch - history["best_epoch"] >= hyper.patience:
            break
    for k, v in best_params.items():
        params[k][...] = v
    return history
