"""Pipeline configuration: nested dataclasses loaded from and dumped to YAML.

Every default lives here; ``bandcast print-config`` shows the full tree.
"""

from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import List, Optional, get_type_hints

import yaml

from .calibrate import LlmEndpointConfig
from .data import Schema, SplitSpec, SyntheticSpec, gen_synthetic, ingest_csv
from .errors import ConfigError
from .nn import TrainHyper
from .plfm import PlfmConfig


@dataclass
class CsvSource:
    path: str = ""
    timestamp: str = "timestamp"
    targets: List[str] = field(default_factory=list)
    aux: List[str] = field(default_factory=list)
    frequency: str = ""
    description: str = ""


@dataclass
class SyntheticSource:
    length: int = 2000
    channels: int = 1
    # (bin, amplitude, phase)
    components: List[List[float]] = field(default_factory=lambda: [[2, 1.0, 0.0], [25, 0.5, 0.0]])
    noise_sd: float = 0.3
    seed: int = 0


@dataclass
class DataConfig:
    source: str = "synthetic"
    csv: CsvSource = field(default_factory=CsvSource)
    synthetic: SyntheticSource = field(default_factory=SyntheticSource)
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    window_stride: int = 1
    few_shot: Optional[float] = None


@dataclass
class PlfmSection:
    patch_len: int = 12
    stride: int = 6
    hidden_dim: int = 64
    activation: str = "silu"


@dataclass
class ResidualSection:
    backbone: str = "mlp"
    hidden_dim: int = 64
    activation: str = "silu"


@dataclass
class HyperSection:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 300
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: Optional[int] = None
    schedule: str = "constant"

    def to_hyper(self, seed):
        return TrainHyper(self.lr, self.batch_size, self.epochs, seed, self.beta1, self.beta2, self.eps,
                          self.patience, self.schedule)


@dataclass
class TrainSection:
    plfm: HyperSection = field(default_factory=HyperSection)
    residual: HyperSection = field(default_factory=HyperSection)
    baseline: HyperSection = field(default_factory=HyperSection)


@dataclass
class LlmSection:
    base_url: str = ""
    model: str = "calibrator"
    auth_env: Optional[str] = None
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    include_history: bool = False

    def endpoint(self):
        if not self.base_url:
            return None
        return LlmEndpointConfig(self.base_url, self.model, self.auth_env, self.timeout,
                                 self.max_retries, self.temperature)


@dataclass
class BenchSection:
    horizons: List[int] = field(default_factory=lambda: [16])
    patch_lengths: List[int] = field(default_factory=lambda: [12])
    fl: List[bool] = field(default_factory=lambda: [True, False])
    llm: List[bool] = field(default_factory=lambda: [True, False])
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    export_sft: bool = True


@dataclass
class PipelineConfig:
    history_len: int = 64
    horizon: int = 16
    keep_fraction: float = 0.4
    seed: int = 0
    out_dir: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    plfm: PlfmSection = field(default_factory=PlfmSection)
    residual: ResidualSection = field(default_factory=ResidualSection)
    train: TrainSection = field(default_factory=TrainSection)
    llm: LlmSection = field(default_factory=LlmSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def validate(self):
        try:
            self.plfm_config()
            self.split_spec()
            for sec in (self.train.plfm, self.train.residual, self.train.baseline):
                sec.to_hyper(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {self.data.source!r}")
        if self.data.source == "csv" and not (self.data.csv.path and self.data.csv.targets):
            raise ConfigError("csv source needs data.csv.path and data.csv.targets")
        if self.residual.backbone != "mlp":
            raise ConfigError(f"unknown residual backbone {self.residual.backbone!r}")
        if self.data.window_stride < 1:
            raise ConfigError("data.window_stride must be >= 1")
        return self

    def channels(self):
        if self.data.source == "csv":
            return len(self.data.csv.targets)
        return self.data.synthetic.channels

    def plfm_config(self, horizon=None, patch_len=None, stride=None):
        p = self.plfm
        return PlfmConfig(
            history_len=self.history_len,
            horizon=horizon or self.horizon,
            channels=self.channels(),
            patch_len=patch_len or p.patch_len,
            stride=stride or p.stride,
            hidden_dim=p.hidden_dim,
            keep_fraction=self.keep_fraction,
            activation=p.activation,
        )

    def split_spec(self):
        d = self.data
        return SplitSpec(d.train, d.val, d.test, d.few_shot)

    def load_dataset(self):
        d = self.data
        if d.source == "csv":
            c = d.csv
            return ingest_csv(c.path, Schema(c.timestamp, tuple(c.targets), tuple(c.aux)), c.frequency, c.description)
        s = d.synthetic
        return gen_synthetic(SyntheticSpec(s.length, s.channels, tuple(tuple(c) for c in s.components),
                                           s.noise_sd, s.seed))


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        tp = hints[name]
        if is_dataclass(tp):
            kwargs[name] = _build(tp, value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data):
    return _build(PipelineConfig, data, "").validate()


def load(path=None):
    """Read a YAML config; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig().validate()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return from_dict(data or {})


def dump(cfg):
    return yaml.safe_dump(asdict(cfg), sort_keys=False, default_flow_style=None)


def with_overrides(cfg, seed=None, out_dir=None, endpoint_url=None, few_shot=None):
    """Apply command-line overrides, returning a new config."""
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=str(out_dir))
    if endpoint_url is not None:
        cfg = replace(cfg, llm=replace(cfg.llm, base_url=endpoint_url))
    if few_shot is not None:
        cfg = replace(cfg, data=replace(cfg.data, few_shot=few_shot))
    return cfg.validate()
