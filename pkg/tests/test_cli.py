import json

import pytest
import yaml

from bandcast.cli import build_parser, main
from bandcast.mock import MockServer

SMALL = {
    "history_len": 16,
    "horizon": 4,
    "data": {"synthetic": {"length": 160, "components": [[4, 1.0, 0.0]], "noise_sd": 0.1}},
    "plfm": {"patch_len": 8, "stride": 4, "hidden_dim": 8},
    "residual": {"hidden_dim": 8},
    "train": {k: {"epochs": 2, "batch_size": 16} for k in ("plfm", "residual", "baseline")},
    "bench": {"horizons": [4], "patch_lengths": [8], "seeds": [0]},
}


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_print_config_defaults(capsys):
    code, out, _ = run(capsys, "print-config")
    cfg = yaml.safe_load(out)
    assert code == 0
    assert (cfg["history_len"], cfg["horizon"], cfg["keep_fraction"]) == (64, 16, 0.4)


def test_print_config_overrides(capsys, cfg_path):
    code, out, _ = run(capsys, "print-config", "--config", cfg_path, "--seed", 7, "--few-shot", "0.1")
    cfg = yaml.safe_load(out)
    assert code == 0 and cfg["seed"] == 7 and cfg["data"]["few_shot"] == 0.1


def test_bad_config_key(capsys, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("horizon: 4\nhorizn: 5\n")
    code, _, err = run(capsys, "print-config", "--config", path)
    assert code == 2 and "horizn" in err


def test_verify_theorems(capsys):
    code, out, _ = run(capsys, "verify-theorems", "--cases", 20)
    assert code == 0
    assert "PASS parseval: 20/20" in out and "PASS mae_bound: 20/20" in out


def test_residual_before_plfm(capsys, cfg_path, tmp_path):
    code, _, err = run(capsys, "train-residual", "--config", cfg_path, "--out", tmp_path / "run")
    assert code == 2 and "plfm.json" in err


def test_full_flow(capsys, cfg_path, tmp_path):
    out_dir = tmp_path / "run"
    common = ["--config", cfg_path, "--out", out_dir]
    assert run(capsys, "train-plfm", *common)[0] == 0
    assert run(capsys, "train-residual", *common)[0] == 0
    with MockServer("echo") as server:
        code, out, _ = run(capsys, "evaluate", *common, "--endpoint-url", server.base_url, "--limit", 3)
    assert code == 0
    summary = json.loads(out[: out.rindex("}") + 1])
    assert summary["windows"] == 3 and summary["sources"] == {"llm": 3, "fallback": 0}
    assert (out_dir / "forecast.csv").exists() and (out_dir / "metrics.csv").exists()


def test_bench_command(capsys, cfg_path, tmp_path):
    code, out, _ = run(capsys, "bench", "--config", cfg_path, "--out", tmp_path / "b")
    assert code == 0 and out.startswith("4 rows")


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
