"""Temporal-MSE MLP used as the no-frequency-learning reference."""

import numpy as np

from .data import Normalizer, stack_windows
from .errors import InvalidInput
from .nn import MLP, TrainHyper, fit


def matched_hidden_dim(target_params, history_len, horizon):
    """Hidden width giving an H -> hidden -> L MLP about ``target_params`` weights."""
    return max(1, int(round((target_params - horizon) / (history_len + horizon + 1))))


class MseMLP:
    """Channel-shared MLP from a z-scored history (H,) to a forecast (L,)."""

    def __init__(self, history_len, horizon, channels, hidden_dim, activation="silu", seed=0, normalizer=None):
        self.history_len, self.horizon, self.channels = history_len, horizon, channels
        self.net = MLP(history_len, hidden_dim, horizon, activation, np.random.default_rng(seed))
        self.normalizer = normalizer or Normalizer.identity(channels)
        self.history = None

    def num_params(self):
        return self.net.num_params()

    def _rows(self, xn):
        b = xn.shape[0]
        return xn.transpose(0, 2, 1).reshape(b * self.channels, self.history_len)

    def _unrows(self, rows, b):
        return rows.reshape(b, self.channels, self.horizon).transpose(0, 2, 1)

    def predict(self, history):
        """Forecast in original units, (L, C) or (B, L, C)."""
        x = np.asarray(history, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        out = self._unrows(self.net(self._rows(self.normalizer.transform(x))), x.shape[0])
        out = self.normalizer.inverse(out)
        return out[0] if single else out


def train_mse_mlp(history_len, horizon, channels, hidden_dim, train, hyper=TrainHyper(), val=None,
                  activation="silu", normalizer=None):
    """Fit :class:`MseMLP` on unfiltered targets with mean squared error."""
    if not train:
        raise InvalidInput("training set is empty")
    model = MseMLP(history_len, horizon, channels, hidden_dim, activation, hyper.seed,
                   normalizer or Normalizer.fit(train))

    def prep(windows):
        x, y = stack_windows(windows)
        xn, yn = model.normalizer.transform(x), model.normalizer.transform(y)
        rows_x = model._rows(xn).reshape(len(windows), channels, history_len)
        rows_y = yn.transpose(0, 2, 1).reshape(len(windows), channels, horizon)
        return rows_x, rows_y

    tx, ty = prep(train)
    vx, vy = prep(val) if val else (tx, ty)

    def step(idx):
        x = tx[idx].reshape(-1, history_len)
        y = ty[idx].reshape(-1, horizon)
        out, cache = model.net.forward(x)
        diff = out - y
        return float(np.mean(diff**2)), model.net.backward(cache, 2.0 * diff / diff.size)

    def val_loss():
        out = model.net(vx.reshape(-1, history_len))
        return float(np.mean((out - vy.reshape(-1, horizon)) ** 2))

    model.history = fit(model.net.params, step, val_loss, len(train), hyper)
    return model
