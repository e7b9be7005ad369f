"""LLM calibration: prompt construction, response parsing and an HTTP client.

Prompts are pure functions of their inputs. All numbers are rendered with
four decimals so the same forecast always yields the same bytes.
"""

from dataclasses import dataclass
import hashlib
import logging
import math
import os
import re
import time
from typing import Optional, Sequence
from urllib.parse import urlparse

import httpx
import numpy as np

from .errors import ConfigError, InvalidInput, LengthMismatch, ParseFailure, TransportFailure

log = logging.getLogger(__name__)

SYSTEM_PREAMBLE = (
    "You are a time-series calibration assistant. You receive a preliminary "
    "numeric forecast with its components and context, and you reply with the "
    "calibrated forecast only."
)
SECTION_TASK = "## Task"
SECTION_STATS = "## Input statistics"
SECTION_HISTORY = "## History"
SECTION_LOW = "## Low-frequency forecast"
SECTION_RES = "## High-frequency residual forecast"
SECTION_COMBINED = "## Combined preliminary forecast"
SECTION_AUX = "## Auxiliary variables (forecast horizon)"
SECTION_INSTRUCTION = "## Instruction"

_LIST_RE = re.compile(r"\[([^\[\]]*)\]")


def fmt(value):
    text = f"{float(value):.4f}"
    return "0.0000" if text == "-0.0000" else text


def render_list(values):
    """``[v1, ..., vL]`` with four decimals."""
    return "[" + ", ".join(fmt(v) for v in np.ravel(values)) + "]"


def quantize(values):
    """The values a reader of :func:`render_list` would see."""
    return np.array([float(fmt(v)) for v in np.ravel(values)])


def _digest(arr):
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class AuxiliaryContext:
    """Auxiliary variables over the history plus horizon, (H + L, D)."""

    values: np.ndarray
    names: Sequence[str] = ()
    descriptor: str = ""
    timestamps: Sequence[str] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None] if len(self.names) == 1 else vals.reshape(len(vals), 0)
        object.__setattr__(self, "values", vals)
        if vals.shape[1] != len(self.names):
            raise InvalidInput(f"{vals.shape[1]} aux columns but {len(self.names)} names")
        if self.timestamps and len(self.timestamps) != vals.shape[0]:
            raise InvalidInput("timestamps must cover every aux row")

    @classmethod
    def empty(cls, rows, descriptor="", timestamps=()):
        return cls(np.zeros((rows, 0)), (), descriptor, tuple(timestamps))


@dataclass(frozen=True)
class CalibrationPrompt:
    text: str
    expected_len: int
    target_channel: int
    provenance: tuple


def history_stats(history):
    """min, max, mean, last value and least-squares slope per step of a 1-D history."""
    h = np.asarray(history, dtype=np.float64)
    t = np.arange(len(h), dtype=np.float64)
    slope = float(np.polyfit(t, h, 1)[0]) if len(h) > 1 else 0.0
    return {
        "min": float(h.min()),
        "max": float(h.max()),
        "mean": float(h.mean()),
        "last value": float(h[-1]),
        "trend slope": slope,
    }


def build_prompt(low, res, aux, target_channel=0, *, history, channel_name=None,
                 include_frequency=True, include_history=False):
    """Assemble the calibration prompt for one target channel.

    Parameters
    ----------
    low, res : array_like, (L, C)
        Low-frequency and residual tokens in original units.
    aux : AuxiliaryContext
        Rows ``H .. H+L-1`` are listed as the forecast-horizon table.
    target_channel : int
    history : array_like, (H, C)
        Source of the input statistics.
    include_frequency : bool
        When False the low/residual sections are left out and the combined
        list is the only forecast shown.
    include_history : bool
        Also list the raw history values.
    """
    low = np.asarray(low, dtype=np.float64)
    res = np.asarray(res, dtype=np.float64)
    hist = np.asarray(history, dtype=np.float64)
    if low.ndim == 1:
        low, res = low[:, None], res[:, None]
    if hist.ndim == 1:
        hist = hist[:, None]
    if low.shape != res.shape:
        raise InvalidInput(f"low {low.shape} and residual {res.shape} differ in shape")
    horizon, channels = low.shape
    if not 0 <= target_channel < channels:
        raise InvalidInput(f"target_channel {target_channel} out of range for {channels} channels")
    h_len = hist.shape[0]
    if aux.values.shape[0] != h_len + horizon:
        raise InvalidInput(f"aux has {aux.values.shape[0]} rows, expected H + L = {h_len + horizon}")
    lo, rs = low[:, target_channel], res[:, target_channel]
    combined = lo + rs
    name = channel_name or f"channel {target_channel}"

    lines = [SECTION_TASK]
    if aux.descriptor:
        lines.append(aux.descriptor)
    lines.append(f"Forecast the next {horizon} steps of {name}.")
    if aux.timestamps:
        lines.append("Forecast timestamps: " + ", ".join(str(t) for t in aux.timestamps[h_len:]))
    lines += ["", SECTION_STATS]
    lines += [f"{k}: {fmt(v)}" for k, v in history_stats(hist[:, target_channel]).items()]
    if include_history:
        lines += ["", SECTION_HISTORY, render_list(hist[:, target_channel])]
    if include_frequency:
        lines += ["", SECTION_LOW, render_list(lo), "", SECTION_RES, render_list(rs)]
    lines += ["", SECTION_COMBINED, render_list(combined), "", SECTION_AUX]
    if aux.values.shape[1] == 0:
        lines.append("(none)")
    else:
        future = aux.values[h_len:]
        lines += [f"{col}: {render_list(future[:, j])}" for j, col in enumerate(aux.names)]
    lines += [
        "",
        SECTION_INSTRUCTION,
        f"Output exactly {horizon} numbers as a bracketed comma-separated list and nothing else.",
    ]
    return CalibrationPrompt(
        text="\n".join(lines) + "\n",
        expected_len=horizon,
        target_channel=target_channel,
        provenance=(_digest(low), _digest(res), _digest(aux.values)),
    )


def parse_forecast(response_text, expected_len):
    """First bracketed list of exactly ``expected_len`` finite numbers.

    Raises
    ------
    ParseFailure
        No bracketed list, or an entry is not a finite number.
    LengthMismatch
        The list has the wrong number of entries.
    """
    text = response_text if isinstance(response_text, str) else str(response_text)
    match = _LIST_RE.search(text)
    if match is None:
        raise ParseFailure("no bracketed list in response", text)
    body = match.group(1).strip()
    items = [] if not body else [s.strip() for s in body.split(",")]
    values = []
    for item in items:
        try:
            v = float(item)
        except ValueError:
            raise ParseFailure(f"not a number: {item!r}", text) from None
        if not math.isfinite(v):
            raise ParseFailure(f"non-finite value: {item!r}", text)
        values.append(v)
    if len(values) != expected_len:
        raise LengthMismatch(len(values), expected_len, text)
    return np.array(values)


@dataclass(frozen=True)
class LlmEndpointConfig:
    """Chat-completion endpoint. ``base_url`` is the API root, e.g. ``http://host:8000/v1``."""

    base_url: str
    model: str = "calibrator"
    auth_env: Optional[str] = None
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    backoff: float = 0.5

    def __post_init__(self):
        if not self.timeout > 0:
            raise ConfigError("timeout must be > 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    def validate(self):
        """Configuration checks that must pass before any network call."""
        parsed = urlparse(self.base_url or "")
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ConfigError(f"invalid endpoint URL {self.base_url!r}")
        if self.auth_env and not os.environ.get(self.auth_env):
            raise ConfigError(f"environment variable {self.auth_env} is not set")

    @property
    def url(self):
        return self.base_url.rstrip("/") + "/chat/completions"


class ChatClient:
    """Blocking chat-completion client with retries.

    ``transport`` lets tests plug in :class:`httpx.MockTransport`.
    """

    def __init__(self, config, transport=None):
        config.validate()
        self.config = config
        headers = {}
        if config.auth_env:
            headers["Authorization"] = f"Bearer {os.environ[config.auth_env]}"
        self._http = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)

    def complete(self, prompt):
        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PREAMBLE},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.config.temperature,
        }
        last = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                resp = self._http.post(self.config.url, json=payload)
                if resp.status_code >= 500 or resp.status_code == 429:
                    last = f"HTTP {resp.status_code}"
                    continue
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last = repr(exc)
        raise TransportFailure(f"endpoint failed after {self.config.max_retries + 1} attempts: {last}")

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class CalibrationResult:
    forecast: np.ndarray
    source: str
    prompt: CalibrationPrompt
    response: Optional[str] = None
    error: Optional[str] = None


def _merge(parsed, combined):
    # an entry copied from the rendered input keeps its unrounded value
    shown = quantize(combined)
    return np.where(parsed == shown, combined, parsed)


def calibrate(low, res, aux, endpoint=None, *, history, target_channel=0, client=None,
              channel_name=None, include_frequency=True, include_history=False):
    """Calibrated forecast for one channel; falls back to ``low + res``.

    Endpoint misbehaviour (transport errors, unparsable or wrongly sized
    replies) never raises: the result has ``source == "fallback"``. Only
    configuration errors surface, before any request is made.
    """
    prompt = build_prompt(low, res, aux, target_channel, history=history, channel_name=channel_name,
                          include_frequency=include_frequency, include_history=include_history)
    lo = np.asarray(low, dtype=np.float64).reshape(prompt.expected_len, -1)[:, target_channel]
    rs = np.asarray(res, dtype=np.float64).reshape(prompt.expected_len, -1)[:, target_channel]
    combined = lo + rs
    if client is None and endpoint is None:
        return CalibrationResult(combined, "fallback", prompt, error="no endpoint configured")
    own_client = client is None
    if own_client:
        client = ChatClient(endpoint)
    try:
        reply = client.complete(prompt.text)
    except TransportFailure as exc:
        log.warning("calibration transport failure: %s", exc)
        return CalibrationResult(combined, "fallback", prompt, error=str(exc))
    finally:
        if own_client:
            client.close()
    try:
        parsed = parse_forecast(reply, prompt.expected_len)
    except ParseFailure as exc:
        log.warning("unusable calibration reply (%s): %r", exc, exc.raw)
        return CalibrationResult(combined, "fallback", prompt, response=reply, error=str(exc))
    return CalibrationResult(_merge(parsed, combined), "llm", prompt, response=reply)


def sft_record(prompt, truth):
    """Prompt/completion pair for supervised fine-tuning on ground truth."""
    return {"prompt": prompt.text, "completion": render_list(truth)}
