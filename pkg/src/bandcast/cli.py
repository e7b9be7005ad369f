"""Command-line entry point: ``bandcast <command> [options]``."""

import argparse
import json
import logging
import sys

from . import config as config_mod
from . import engine
from .data import parse_few_shot
from .errors import BandcastError


def _common(p):
    p.add_argument("--config", help="YAML config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out", help="output directory for checkpoints and reports")
    p.add_argument("--endpoint-url", help="chat-completion API root, e.g. http://127.0.0.1:8000/v1")
    p.add_argument("--few-shot", help="keep the most recent fraction (<1) or count (>=1) of training windows")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="bandcast", description="Frequency-split forecasting pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("train-plfm", help="phase 1: train the low-frequency forecaster"))
    p = sub.add_parser("train-residual", help="phase 2: train the residual learner on a frozen phase-1 model")
    _common(p)
    p.add_argument("--plfm", help="phase-1 checkpoint (default: <out>/plfm.json)")
    for name, text in (("predict", "forecast the test windows"), ("evaluate", "forecast and score the test windows")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--plfm", help="phase-1 checkpoint")
        p.add_argument("--residual", help="phase-2 checkpoint")
        p.add_argument("--limit", type=int, help="only the most recent N test windows")
    _common(sub.add_parser("bench", help="run the configured ablation grid"))

    p = sub.add_parser("verify-theorems", help="check the energy identity and spectral MAE bound")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("print-config", help="print the effective configuration as YAML")
    _common(p)

    p = sub.add_parser("mock-llm", help="serve the deterministic mock chat endpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--mode", choices=("echo", "garbage", "fixed"), default="echo")
    p.add_argument("--value", type=float, default=9.9, help="reply value in fixed mode")
    return parser


def _load(args):
    cfg = config_mod.load(args.config)
    return config_mod.with_overrides(
        cfg,
        seed=args.seed,
        out_dir=args.out,
        endpoint_url=args.endpoint_url,
        few_shot=parse_few_shot(args.few_shot),
    )


def _infer(args, fn):
    cfg = _load(args)
    data = engine.prepare(cfg)
    windows = data.test[-args.limit :] if args.limit else None
    report = fn(cfg, plfm_path=args.plfm, resid_path=args.residual, windows=windows, data=data)
    print(json.dumps({k: report[k] for k in ("windows", "sources", "metrics")}, indent=2, sort_keys=True))
    print(f"forecast written to {report['forecast_csv']}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except BandcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    cmd = args.command
    if cmd == "train-plfm":
        path, model = engine.run_phase1(_load(args))
        print(f"PLFM checkpoint {path} (best epoch {model.history['best_epoch']}, sha256 {model.checksum()})")
    elif cmd == "train-residual":
        path, learner = engine.run_phase2(_load(args), args.plfm)
        print(f"residual checkpoint {path} (best epoch {learner.history['best_epoch']}, sha256 {learner.checksum()})")
    elif cmd == "predict":
        _infer(args, engine.run_infer)
    elif cmd == "evaluate":
        _infer(args, engine.run_evaluate)
    elif cmd == "bench":
        rows, path = engine.run_bench(_load(args))
        print(f"{len(rows)} rows written to {path}")
    elif cmd == "verify-theorems":
        report = engine.run_verify(args.cases, args.seed)
        for name in ("parseval", "mae_bound"):
            r = report[name]
            status = "PASS" if r["violations"] == 0 else "FAIL"
            print(f"{status} {name}: {r['cases'] - r['violations']}/{r['cases']} cases hold")
        print(f"max parseval gap: {report['parseval']['max_gap']:.3e}")
        return 0 if report["ok"] else 1
    elif cmd == "print-config":
        sys.stdout.write(config_mod.dump(_load(args)))
    elif cmd == "mock-llm":
        from .mock import MockServer

        server = MockServer(args.mode, args.value, args.host, args.port)
        print(f"mock endpoint ({args.mode}) at {server.base_url}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.httpd.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
