"""Dataset ingestion, windowing, splitting, normalization and synthetic series."""

import csv
from dataclasses import dataclass, field
from datetime import datetime
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInput, OrderError, ParseError, SchemaError


@dataclass
class Dataset:
    """A multivariate series with target and auxiliary columns.

    ``values`` is (T, C) and ``aux`` is (T, D); ``timestamps`` holds T labels.
    """

    values: np.ndarray
    aux: np.ndarray
    timestamps: List[str]
    target_names: List[str]
    aux_names: List[str] = field(default_factory=list)
    frequency: str = ""
    description: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        t = self.values.shape[0]
        self.aux = np.asarray(self.aux, dtype=np.float64).reshape(t, -1)
        if len(self.timestamps) != t:
            raise InvalidInput(f"{len(self.timestamps)} timestamps for {t} rows")
        if len(self.target_names) != self.values.shape[1]:
            raise InvalidInput("target_names does not match the number of target columns")
        if len(self.aux_names) != self.aux.shape[1]:
            raise InvalidInput("aux_names does not match the number of aux columns")

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class SeriesWindow:
    """One sample: history (H, C), target (L, C), auxiliary (H + L, D)."""

    history: np.ndarray
    target: np.ndarray
    aux: np.ndarray
    origin: int


@dataclass(frozen=True)
class Schema:
    timestamp: str
    targets: Tuple[str, ...]
    aux: Tuple[str, ...] = ()


def _parse_timestamp(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    return datetime.fromisoformat(text)


def _parse_number(text, row, col):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(row, col, text) from None
    if not math.isfinite(value):
        raise ParseError(row, col, text)
    return value


def ingest_csv(path, schema, frequency="", description=""):
    """Read a headed UTF-8 CSV into a :class:`Dataset`.

    Rows are numbered from 1 (the first data row). Timestamps are integers or
    ISO-8601 and must be strictly increasing.

    Raises
    ------
    SchemaError
        A column named in ``schema`` is absent from the header.
    ParseError
        A target or aux cell is blank, unparsable or non-finite.
    OrderError
        Timestamps are duplicated, decreasing or of mixed kinds.
    """
    if not schema.targets:
        raise SchemaError("schema needs at least one target column")
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.timestamp, *schema.targets, *schema.aux):
            if col not in header:
                raise SchemaError(f"column {col!r} not in header {header}")
        stamps, values, aux = [], [], []
        previous = None
        for row_no, row in enumerate(reader, start=1):
            raw_ts = (row[schema.timestamp] or "").strip()
            try:
                ts = _parse_timestamp(raw_ts)
            except ValueError:
                raise ParseError(row_no, schema.timestamp, raw_ts) from None
            if previous is not None:
                try:
                    ordered = ts > previous
                except TypeError:
                    raise OrderError(row_no, "mixed integer and ISO-8601 timestamps") from None
                if not ordered:
                    raise OrderError(row_no)
            previous = ts
            stamps.append(raw_ts)
            values.append([_parse_number(row[c], row_no, c) for c in schema.targets])
            aux.append([_parse_number(row[c], row_no, c) for c in schema.aux])
    if not stamps:
        raise InvalidInput(f"{path} has no data rows")
    return Dataset(
        values=np.array(values),
        aux=np.array(aux).reshape(len(stamps), len(schema.aux)),
        timestamps=stamps,
        target_names=list(schema.targets),
        aux_names=list(schema.aux),
        frequency=frequency,
        description=description,
    )


def make_windows(ds, history_len, horizon, stride=1):
    """Sliding windows over ``ds``; ``T - H - L + 1`` of them for stride 1."""
    if history_len < 1 or horizon < 1 or stride < 1:
        raise InvalidInput("history_len, horizon and stride must be >= 1")
    span = history_len + horizon
    if ds.length < span:
        raise InvalidInput(f"dataset has {ds.length} rows, need at least H + L = {span}")
    windows = []
    for t0 in range(0, ds.length - span + 1, stride):
        windows.append(
            SeriesWindow(
                history=ds.values[t0 : t0 + history_len].copy(),
                target=ds.values[t0 + history_len : t0 + span].copy(),
                aux=ds.aux[t0 : t0 + span].copy(),
                origin=t0,
            )
        )
    return windows


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/val/test fractions plus an optional few-shot cut.

    ``few_shot`` below 1 keeps that fraction of the most recent training
    windows; an integer of at least 1 keeps that many.
    """

    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    few_shot: Optional[Union[float, int]] = None

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0:
            raise InvalidInput("split fractions must be non-negative")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise InvalidInput("split fractions must sum to 1")
        if self.few_shot is not None and not self.few_shot > 0:
            raise InvalidInput("few_shot must be positive")


def parse_few_shot(text):
    """``"0.1"`` -> 0.1 (fraction), ``"50"`` -> 50 (window count)."""
    if text is None:
        return None
    value = float(text)
    if value < 1.0:
        return value
    if value != int(value):
        raise InvalidInput(f"few-shot step count must be an integer, got {text!r}")
    return int(value)


def split(windows, spec=SplitSpec()):
    """Split windows chronologically by origin.

    Windows assigned to an earlier split whose target rows reach the first
    target row of the next non-empty split are dropped.

    Returns
    -------
    tuple of lists
        ``(train, val, test)``.
    """
    ordered = sorted(windows, key=lambda w: w.origin)
    n = len(ordered)
    n_train = int(round(spec.train * n))
    n_val = int(round(spec.val * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    parts = [ordered[:n_train], ordered[n_train : n_train + n_val], ordered[n_train + n_val :]]
    for i in range(2):
        nxt = next((p for p in parts[i + 1 :] if p), None)
        if not nxt or not parts[i]:
            continue
        h, l = len(parts[i][0].history), len(parts[i][0].target)
        first_target_row = nxt[0].origin + h
        parts[i] = [w for w in parts[i] if w.origin + h + l - 1 < first_target_row]
    train, val, test = parts
    if spec.few_shot is not None and train:
        if isinstance(spec.few_shot, float) and spec.few_shot < 1.0:
            keep = max(1, int(round(spec.few_shot * len(train))))
        else:
            keep = min(len(train), int(spec.few_shot))
        train = train[-keep:]
    return train, val, test


@dataclass(frozen=True)
class Normalizer:
    """Per-channel z-score; constant channels get unit scale."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, channels):
        return cls(np.zeros(channels), np.ones(channels))

    @classmethod
    def fit(cls, windows):
        """Statistics over every history and target value of ``windows``."""
        if not windows:
            raise InvalidInput("cannot fit normalization on zero windows")
        rows = np.concatenate([np.concatenate([w.history, w.target]) for w in windows])
        std = rows.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(rows.mean(axis=0), std)

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, x):
        return np.asarray(x, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def stack_windows(windows):
    """``(X (B, H, C), Y (B, L, C))`` arrays from a list of windows."""
    x = np.stack([w.history for w in windows])
    y = np.stack([w.target for w in windows])
    return x, y


@dataclass(frozen=True)
class SyntheticSpec:
    """Sinusoids at exact DFT bins of ``length`` plus Gaussian noise.

    ``components`` holds ``(bin, amplitude, phase)`` triples; every channel
    gets the same components and independent noise.
    """

    length: int
    channels: int = 1
    components: Sequence[Tuple[float, float, float]] = ()
    noise_sd: float = 0.0
    seed: int = 0


def gen_synthetic(spec):
    if spec.length < 1 or spec.channels < 1:
        raise InvalidInput("length and channels must be >= 1")
    n = np.arange(spec.length)
    clean = np.zeros(spec.length)
    for k, amp, phase in spec.components:
        clean += amp * np.cos(2.0 * np.pi * k * n / spec.length + phase)
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.noise_sd, size=(spec.length, spec.channels)) if spec.noise_sd > 0 else 0.0
    values = clean[:, None] + noise + np.zeros((spec.length, spec.channels))
    return Dataset(
        values=values,
        aux=np.zeros((spec.length, 0)),
        timestamps=[str(i) for i in range(spec.length)],
        target_names=[f"y{c}" for c in range(spec.channels)],
        frequency="abstract step",
        description="synthetic sum of sinusoids with Gaussian noise",
    )
