"""Pipeline orchestration: training phases, inference, benchmarks and identity checks."""

from dataclasses import dataclass
import json
import logging
from pathlib import Path
import time

import numpy as np

from . import checkpoint as ckpt
from .baseline import matched_hidden_dim, train_mse_mlp
from .calibrate import AuxiliaryContext, ChatClient, build_prompt, calibrate, sft_record
from .data import make_windows, split
from .errors import IncompatibleCheckpoint, InvalidInput
from .loss import check_mae_bound
from .metrics import evaluate_windows, to_csv
from .plfm import PLFM, train_plfm
from .residual import MLPBackbone, ResidualLearner, train_residual
from .spectral import energy, parseval_gap

log = logging.getLogger(__name__)

PLFM_FILE = "plfm.json"
RESID_FILE = "residual.json"
FORECAST_COLUMNS = ("origin", "timestamp", "channel", "y_low", "y_res", "y_combined", "y_final", "source")
METRIC_COLUMNS = ("stage", "mae", "rmse", "mape", "low_mae")
BENCH_COLUMNS = (
    "run", "seed", "fl", "llm", "patch_len", "horizon",
    "mae", "rmse", "mape", "low_mae", "llm_share",
)


@dataclass
class Prepared:
    dataset: object
    train: list
    val: list
    test: list


def prepare(cfg, horizon=None):
    """Load the configured dataset and split it into windows."""
    ds = cfg.load_dataset()
    if ds.channels != cfg.channels():
        raise InvalidInput(f"dataset has {ds.channels} channels, config expects {cfg.channels()}")
    windows = make_windows(ds, cfg.history_len, horizon or cfg.horizon, cfg.data.window_stride)
    train, val, test = split(windows, cfg.split_spec())
    if not train:
        raise InvalidInput("training split is empty")
    return Prepared(ds, train, val, test)


def _out(cfg):
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fit_plfm(cfg, data, seed, horizon=None, patch_len=None, stride=None):
    return train_plfm(
        cfg.plfm_config(horizon, patch_len, stride),
        data.train,
        cfg.train.plfm.to_hyper(seed),
        val=data.val or None,
    )


def _fit_residual(cfg, plfm, data, seed):
    c = plfm.config
    backbone = MLPBackbone(c.history_len, c.horizon, c.channels, cfg.residual.hidden_dim,
                           cfg.residual.activation, seed)
    return train_residual(backbone, plfm, data.train, cfg.train.residual.to_hyper(seed), val=data.val or None)


def run_phase1(cfg, data=None):
    """Train the low-frequency forecaster and write its checkpoint.

    Returns
    -------
    (Path, PLFM)
    """
    data = data or prepare(cfg)
    model = _fit_plfm(cfg, data, cfg.seed)
    path = _out(cfg) / PLFM_FILE
    model.save(path)
    log.info("phase 1: best epoch %d, checkpoint %s", model.history["best_epoch"], path)
    return path, model


def check_plfm(cfg, plfm):
    c = plfm.config
    want = (cfg.history_len, cfg.horizon, cfg.channels(), cfg.keep_fraction)
    got = (c.history_len, c.horizon, c.channels, c.keep_fraction)
    if want != got:
        raise IncompatibleCheckpoint(f"PLFM checkpoint has (H, L, C, rho) = {got}, config has {want}")


def check_pair(plfm, learner):
    if learner.plfm_checksum != plfm.checksum():
        raise IncompatibleCheckpoint("residual checkpoint was trained against a different PLFM")
    if learner.keep_fraction != plfm.config.keep_fraction:
        raise IncompatibleCheckpoint(
            f"keep_fraction differs: PLFM {plfm.config.keep_fraction}, residual {learner.keep_fraction}"
        )
    b = learner.backbone
    c = plfm.config
    if (b.history_len, b.horizon, b.channels) != (c.history_len, c.horizon, c.channels):
        raise IncompatibleCheckpoint("residual backbone shape does not match the PLFM")


def run_phase2(cfg, plfm_path=None, data=None):
    """Train the residual learner against a frozen phase-1 checkpoint."""
    plfm_path = Path(plfm_path or Path(cfg.out_dir) / PLFM_FILE)
    plfm = PLFM.load(plfm_path)
    check_plfm(cfg, plfm)
    data = data or prepare(cfg)
    learner = _fit_residual(cfg, plfm, data, cfg.seed)
    path = _out(cfg) / RESID_FILE
    learner.save(path)
    log.info("phase 2: best epoch %d, checkpoint %s", learner.history["best_epoch"], path)
    return path, learner


def _aux_for(ds, w, horizon):
    stop = w.origin + len(w.history) + horizon
    parts = [ds.description.rstrip(".") + "." if ds.description else "",
             f"Sampling frequency: {ds.frequency}." if ds.frequency else ""]
    desc = " ".join(p for p in parts if p)
    return AuxiliaryContext(w.aux, tuple(ds.aux_names), desc, tuple(ds.timestamps[w.origin : stop]))


def _calibrate_batch(ds, windows, low, res, client, include_frequency=True, include_history=False):
    """Per-window, per-channel calibration. Returns (final (B, L, C), sources (B, C))."""
    final = low + res
    sources = np.full(final.shape[::2], "fallback", dtype=object)
    if client is None:
        return final, sources
    horizon = low.shape[1]
    for i, w in enumerate(windows):
        aux = _aux_for(ds, w, horizon)
        for c in range(low.shape[2]):
            out = calibrate(low[i], res[i], aux, history=w.history, target_channel=c, client=client,
                            channel_name=ds.target_names[c], include_frequency=include_frequency,
                            include_history=include_history)
            final[i, :, c] = out.forecast
            sources[i, c] = out.source
    return final, sources


def _client(cfg, client=None, transport=None):
    if client is not None:
        return client
    endpoint = cfg.llm.endpoint()
    if endpoint is None:
        return None
    return ChatClient(endpoint, transport=transport)


def forecast_rows(ds, windows, low, res, final, sources):
    rows = []
    h = len(windows[0].history) if windows else 0
    for i, w in enumerate(windows):
        for step in range(low.shape[1]):
            ts = ds.timestamps[w.origin + h + step]
            for c in range(low.shape[2]):
                rows.append({
                    "origin": w.origin,
                    "timestamp": ts,
                    "channel": ds.target_names[c],
                    "y_low": float(low[i, step, c]),
                    "y_res": float(res[i, step, c]),
                    "y_combined": float(low[i, step, c] + res[i, step, c]),
                    "y_final": float(final[i, step, c]),
                    "source": sources[i, c],
                })
    return rows


def run_infer(cfg, plfm_path=None, resid_path=None, windows=None, data=None, client=None, transport=None):
    """Forecast ``windows`` (default: the test split) with both phases plus calibration.

    Writes ``forecast.csv`` and ``report.json`` to the output directory.

    Returns
    -------
    dict
        The report, with ``forecast_csv`` and ``report_json`` paths added.
    """
    t0 = time.perf_counter()
    base = Path(cfg.out_dir)
    plfm = PLFM.load(Path(plfm_path or base / PLFM_FILE))
    learner = ResidualLearner.load(Path(resid_path or base / RESID_FILE))
    check_plfm(cfg, plfm)
    check_pair(plfm, learner)
    data = data or prepare(cfg)
    if windows is None:
        windows = data.test
    if not windows:
        raise InvalidInput("no windows to forecast")
    x = np.stack([w.history for w in windows])
    y = np.stack([w.target for w in windows])
    low = plfm.low_token(x)
    res = learner.token(x)
    t_models = time.perf_counter() - t0
    own = client is None
    client = _client(cfg, client, transport)
    try:
        final, sources = _calibrate_batch(data.dataset, windows, low, res, client,
                                          include_history=cfg.llm.include_history)
    finally:
        if own and client is not None:
            client.close()
    t_total = time.perf_counter() - t0
    out = _out(cfg)
    csv_path = out / "forecast.csv"
    ckpt.atomic_write_text(csv_path, to_csv(forecast_rows(data.dataset, windows, low, res, final, sources),
                                            FORECAST_COLUMNS))
    rho = cfg.keep_fraction
    stages = {"low": low, "combined": low + res, "final": final}
    metrics = {}
    for name, pred in stages.items():
        m = evaluate_windows(pred, y)
        m["low_mae"] = evaluate_windows(pred, y, keep_fraction=rho)["mae"]
        metrics[name] = m
    flat = sources.ravel().tolist()
    report = {
        "windows": len(windows),
        "channels": int(low.shape[2]),
        "horizon": int(low.shape[1]),
        "plfm_checksum": plfm.checksum(),
        "residual_checksum": learner.checksum(),
        "metrics": metrics,
        "sources": {"llm": flat.count("llm"), "fallback": flat.count("fallback")},
        "timings": {"models_s": t_models, "total_s": t_total},
    }
    report_path = out / "report.json"
    ckpt.atomic_write_text(report_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    report["forecast_csv"] = str(csv_path)
    report["report_json"] = str(report_path)
    return report


def run_evaluate(cfg, **kwargs):
    """:func:`run_infer` plus a per-stage ``metrics.csv``."""
    report = run_infer(cfg, **kwargs)
    rows = [{"stage": k, **v} for k, v in report["metrics"].items()]
    path = Path(cfg.out_dir) / "metrics.csv"
    ckpt.atomic_write_text(path, to_csv(rows, METRIC_COLUMNS))
    report["metrics_csv"] = str(path)
    return report


def _score(pred, truth, rho):
    m = evaluate_windows(pred, truth)
    m["low_mae"] = evaluate_windows(pred, truth, keep_fraction=rho)["mae"]
    return m


def pipeline_params(cfg, horizon, patch_len, stride):
    """Weight count of PLFM plus residual backbone for one grid cell."""
    pc = cfg.plfm_config(horizon, patch_len, stride)
    backbone = MLPBackbone(pc.history_len, pc.horizon, pc.channels, cfg.residual.hidden_dim, cfg.residual.activation)
    return PLFM(pc).num_params() + sum(v.size for v in backbone.parameters().values())


def run_bench(cfg, client=None, transport=None):
    """Run the configured grid and write ``bench_metrics.csv``.

    Grid: horizons x seeds x patch lengths x FL on/off x LLM on/off. FL off
    replaces PLFM + residual with one temporal-MSE MLP of about the same
    parameter count and drops the frequency sections from the prompt. LLM
    on without a configured endpoint falls back everywhere (``llm_share`` 0).
    """
    b = cfg.bench
    rho = cfg.keep_fraction
    out = _out(cfg)
    rows = []
    own = client is None
    client = _client(cfg, client, transport)
    try:
        for horizon in b.horizons:
            data = prepare(cfg, horizon)
            if not data.test:
                raise InvalidInput(f"test split is empty for horizon {horizon}")
            x = np.stack([w.history for w in data.test])
            y = np.stack([w.target for w in data.test])
            for seed in b.seeds:
                baseline_pred = None
                for patch_len in b.patch_lengths:
                    stride = max(1, patch_len // 2)
                    plfm = learner = None
                    if True in b.fl:
                        plfm = _fit_plfm(cfg, data, seed, horizon, patch_len, stride)
                        learner = _fit_residual(cfg, plfm, data, seed)
                        if b.export_sft and seed == b.seeds[0] and patch_len == b.patch_lengths[0]:
                            _export_sft(out / f"sft_h{horizon}.jsonl", data, plfm, learner)
                    for fl in b.fl:
                        if fl:
                            low, res = plfm.low_token(x), learner.token(x)
                        else:
                            if baseline_pred is None:
                                budget = pipeline_params(cfg, horizon, patch_len, stride)
                                hidden = matched_hidden_dim(budget, cfg.history_len, horizon)
                                mlp = train_mse_mlp(cfg.history_len, horizon, cfg.channels(), hidden, data.train,
                                                    cfg.train.baseline.to_hyper(seed), val=data.val or None,
                                                    activation=cfg.plfm.activation)
                                baseline_pred = mlp.predict(x)
                            low, res = baseline_pred, np.zeros_like(baseline_pred)
                        for llm in b.llm:
                            if llm:
                                final, sources = _calibrate_batch(data.dataset, data.test, low, res, client,
                                                                  include_frequency=fl,
                                                                  include_history=cfg.llm.include_history)
                            else:
                                final, sources = low + res, np.full((len(data.test), low.shape[2]), "fallback", dtype=object)
                            m = _score(final, y, rho)
                            rows.append({
                                "run": f"h{horizon}-p{patch_len}-fl{int(fl)}-llm{int(llm)}",
                                "seed": seed, "fl": int(fl), "llm": int(llm),
                                "patch_len": patch_len, "horizon": horizon,
                                **m,
                                "llm_share": float(np.mean(sources == "llm")),
                            })
    finally:
        if own and client is not None:
            client.close()
    path = out / "bench_metrics.csv"
    ckpt.atomic_write_text(path, to_csv(rows, BENCH_COLUMNS))
    return rows, path


def _export_sft(path, data, plfm, learner):
    """Training-split prompts paired with their ground-truth completions, one JSON object per line."""
    x = np.stack([w.history for w in data.train])
    low = plfm.low_token(x)
    res = learner.token(x) if learner is not None else np.zeros_like(low)
    lines = []
    for i, w in enumerate(data.train):
        aux = _aux_for(data.dataset, w, low.shape[1])
        for c in range(low.shape[2]):
            prompt = build_prompt(low[i], res[i], aux, c, history=w.history,
                                  channel_name=data.dataset.target_names[c])
            lines.append(json.dumps(sft_record(prompt, w.target[:, c]), sort_keys=True))
    ckpt.atomic_write_text(path, "\n".join(lines) + "\n")


def run_verify(cases=1000, seed=0, dft_fn=None, max_len=1024, max_channels=4):
    """Check the energy identity and the spectral MAE bound on random signals.

    ``dft_fn`` replaces the transform under test, so a deliberately broken
    transform can be shown to produce violations.

    Returns
    -------
    dict
        ``parseval`` and ``mae_bound`` sections with case and violation
        counts, plus ``ok``.
    """
    rng = np.random.default_rng(seed)
    p_viol, max_gap, max_rel = 0, 0.0, 0.0
    for _ in range(cases):
        n = int(rng.integers(2, max_len + 1))
        c = int(rng.integers(1, max_channels + 1))
        x = rng.normal(0.0, 10.0 ** rng.uniform(-3, 3), size=(n, c))
        gap = parseval_gap(x, dft_fn)
        e = energy(x)
        max_gap = max(max_gap, gap)
        max_rel = max(max_rel, gap / (1.0 + e))
        if not gap < 1e-8 * (1.0 + e):
            p_viol += 1
    m_viol, worst = 0, 0.0
    for _ in range(cases):
        n = int(rng.integers(2, max_len + 1))
        c = int(rng.integers(1, max_channels + 1))
        scale = 10.0 ** rng.uniform(-3, 3)
        t = rng.normal(0.0, scale, size=(n, c))
        p = t + rng.normal(0.0, scale * rng.uniform(0.01, 2.0), size=(n, c))
        err, bound = check_mae_bound(t, p, dft_fn)
        worst = max(worst, err / bound if bound > 0 else 0.0)
        if err > bound:
            m_viol += 1
    return {
        "parseval": {"cases": cases, "violations": p_viol, "max_gap": max_gap, "max_relative_gap": max_rel},
        "mae_bound": {"cases": cases, "violations": m_viol, "max_mae_over_bound": worst},
        "ok": p_viol == 0 and m_viol == 0,
    }
