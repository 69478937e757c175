"""Run configuration: dataclasses loaded from strict JSON.

Unknown keys anywhere in the file are rejected, so typos fail loudly.
Class counts have no defaults and must be given explicitly.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

TASKS = ("mr", "sa", "id", "od")
TASK_NAMES = {
    "mr": "Metaphor Recognition",
    "sa": "Sentiment Analysis",
    "id": "Intention Detection",
    "od": "Offensiveness Detection",
}


@dataclass
class ModelConfig:
    d: int = 64
    heads: int = 4
    d_ff: int = 128
    layers: int = 2
    patch: int = 32
    region_size: int = 224
    channels: int = 3
    vocab_size: int = 1000
    max_text_len: int = 64
    max_source_len: int = 16
    max_target_len: int = 16
    activation: str = "gelu"
    ln_eps: float = 1e-5
    resize: str = "bilinear"
    # "pooled": one mean-pooled token per modality; "concat": full sequences
    context: str = "pooled"
    tie_pair: bool = False
    use_domains: bool = True
    unimodal_input: str = "post"
    contrast_input: str = "post"
    # width of precomputed image features; 0 selects the pixel path
    feature_dim: int = 0


@dataclass
class OptimSection:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    steps: int = 200
    batch_size: int = 16
    seed: int = 0
    eval_every: int = 0


@dataclass
class LossConfig:
    l2: dict = field(default_factory=lambda: {t: 1e-4 for t in TASKS})
    tau: float = 0.07
    tasks: dict = field(default_factory=lambda: {t: True for t in TASKS})
    mode: str = "symmetric"


@dataclass
class Ablation:
    """Component switches; ``False`` removes the component."""

    om: bool = True
    up: bool = True
    gl: bool = True
    dg: bool = True


@dataclass
class SynthConfig:
    n_train: int = 256
    n_test: int = 64
    mode: str = "weak"
    seed: int = 0
    text_len: int = 12
    domain_len: int = 3
    signal_tokens: int = 2
    latent_classes: int = 4
    image_size: int = 64
    object_size: int = 16
    n_objects: int = 2
    noise: float = 0.1
    carry_prob: float = 0.5
    write_blobs: bool = False


@dataclass
class DataConfig:
    train: str | None = None
    test: str | None = None
    synth: SynthConfig | None = None


@dataclass
class RunConfig:
    classes: dict
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimSection = field(default_factory=OptimSection)
    loss: LossConfig = field(default_factory=LossConfig)
    ablation: Ablation = field(default_factory=Ablation)
    data: DataConfig = field(default_factory=DataConfig)
    out_dir: str = "runs/default"

    def validate(self) -> "RunConfig":
        if set(self.classes) != set(TASKS):
            raise ConfigError(f"classes must give counts for exactly {TASKS}, got {sorted(self.classes)}")
        for t, c in self.classes.items():
            if not isinstance(c, int) or c < 2:
                raise ConfigError(f"class count for {t} must be an integer >= 2, got {c!r}")
        m = self.model
        for name in ("d", "heads", "d_ff", "layers", "patch", "region_size", "channels",
                     "vocab_size", "max_text_len", "max_source_len", "max_target_len"):
            if getattr(m, name) < 1:
                raise ConfigError(f"model.{name} must be positive")
        if m.d % m.heads:
            raise ConfigError(f"model.d={m.d} is not divisible by model.heads={m.heads}")
        if m.region_size % m.patch:
            raise ConfigError(f"patch side {m.patch} does not divide region size {m.region_size}")
        _choice("model.activation", m.activation, ("gelu", "relu"))
        _choice("model.resize", m.resize, ("bilinear", "nearest"))
        _choice("model.context", m.context, ("pooled", "concat"))
        _choice("model.unimodal_input", m.unimodal_input, ("pre", "post"))
        _choice("model.contrast_input", m.contrast_input, ("pre", "post"))
        if m.ln_eps <= 0:
            raise ConfigError("model.ln_eps must be positive")
        o = self.optim
        _choice("optim.kind", o.kind, ("adam", "sgd"))
        if o.lr <= 0 or o.steps < 0 or o.batch_size < 1:
            raise ConfigError("optim.lr must be > 0, steps >= 0, batch_size >= 1")
        if self.ablation.dg and o.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 when the contrastive loss is enabled")
        lc = self.loss
        if lc.tau <= 0:
            raise ConfigError("loss.tau must be positive")
        _choice("loss.mode", lc.mode, ("symmetric", "literal"))
        for key in ("l2", "tasks"):
            extra = set(getattr(lc, key)) - set(TASKS)
            if extra:
                raise ConfigError(f"loss.{key} has unknown tasks {sorted(extra)}")
        lc.l2 = {t: float(lc.l2.get(t, 1e-4)) for t in TASKS}
        lc.tasks = {t: bool(lc.tasks.get(t, True)) for t in TASKS}
        if any(v < 0 for v in lc.l2.values()):
            raise ConfigError("loss.l2 coefficients must be >= 0")
        if self.data.synth is not None:
            _choice("data.synth.mode", self.data.synth.mode, ("aligned", "weak"))
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **sections) -> "RunConfig":
        return from_dict(_merge(self.to_dict(), sections))


def _choice(name: str, value, allowed) -> None:
    if value not in allowed:
        raise ConfigError(f"{name}={value!r}; expected one of {allowed}")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("classes",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data: Any, where: str):
    if dataclasses.is_dataclass(data):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {sorted(unknown)}")
    kwargs = {}
    nested = {"model": ModelConfig, "optim": OptimSection, "loss": LossConfig,
              "ablation": Ablation, "data": DataConfig, "synth": SynthConfig}
    for k, v in data.items():
        sub = nested.get(k)
        if sub is not None and v is not None:
            v = _build(sub, v, f"{where}.{k}" if where else k)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def from_dict(data: dict) -> RunConfig:
    if "classes" not in data:
        raise ConfigError("config is missing the mandatory 'classes' section")
    return _build(RunConfig, data, "").validate()


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return from_dict(data)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def tiny_model(**overrides) -> ModelConfig:
    """Small dimensions used by tests, gradient checks and the acceptance runs."""
    base = dict(d=16, heads=2, d_ff=32, layers=1, patch=4, region_size=16, channels=3,
                vocab_size=64, max_text_len=16, max_source_len=4, max_target_len=4)
    base.update(overrides)
    return ModelConfig(**base)
