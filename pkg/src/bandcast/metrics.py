"""Forecast error metrics, band-limited evaluation and result tables."""

import csv
import io

import numpy as np

from .spectral import low_pass

MAPE_EPS = 1e-8
METRICS = ("mae", "rmse", "mape")


def evaluate(pred, truth):
    """MAE, RMSE and MAPE (as a ratio, denominators floored at ``MAPE_EPS``)."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    err = p - t
    return {
        "mae": float(np.mean(np.abs(err))),
        "rmse": float(np.sqrt(np.mean(err**2))),
        "mape": float(np.mean(np.abs(err) / np.maximum(np.abs(t), MAPE_EPS))),
    }


def low_band_evaluate(pred, truth, keep_fraction=0.4):
    """:func:`evaluate` on the low-passed prediction and truth."""
    return evaluate(low_pass(pred, keep_fraction), low_pass(truth, keep_fraction))


def evaluate_windows(preds, truths, keep_fraction=None):
    """Average per-window metrics over a batch (B, L, C).

    With ``keep_fraction`` set, each window is low-passed along time first.
    """
    scores = []
    for p, t in zip(preds, truths):
        scores.append(evaluate(p, t) if keep_fraction is None else low_band_evaluate(p, t, keep_fraction))
    return {m: float(np.mean([s[m] for s in scores])) for m in METRICS}


def summarize(runs):
    """Mean and sample standard deviation of each metric over runs (e.g. seeds)."""
    out = {}
    for m in runs[0]:
        vals = np.array([r[m] for r in runs], dtype=np.float64)
        out[m] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return out


def to_csv(rows, columns):
    """Render dict rows as CSV text with a fixed column order and ``\\n`` line ends."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
