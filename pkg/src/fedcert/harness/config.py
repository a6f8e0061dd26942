"""Experiment configuration as flat ``section.key = value`` text.

Blank lines and ``#`` comments are ignored. Every key has a default; the
defaults follow the reference training protocol (45 rounds of 2 local
epochs, batch 64, learning rate 0.1 decayed 10x every 30 epochs, 100 + 100k
certification samples at alpha = 0.001, 500 test samples per client) except
``certify.n``, which defaults to 10k for desk-scale runs.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


@dataclass
class DataSection:
    source: str = "synthetic"  # synthetic | idx
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    num_classes: int = 10
    train_limit: int = 0  # 0 keeps everything
    test_limit: int = 0
    downsample: int = 1
    synthetic_n: int = 400
    synthetic_test_n: int = 200
    synthetic_side: int = 10
    synthetic_classes: int = 4
    synthetic_noise: float = 0.1
    synthetic_seed: int = 0


@dataclass
class NetSection:
    arch: str = "cnn"  # cnn | mlp
    channels: tuple = (8, 16)
    kernel: int = 3
    hidden: tuple = (32,)


@dataclass
class FederationSection:
    n_clients: int = 10
    rounds: int = 45
    local_epochs: int = 2
    batch_size: int = 64
    lr: float = 0.1
    lr_decay: float = 0.1
    lr_decay_every: int = 30
    scheme: str = "fedavg"  # local | fedavg | personalize | mixture
    personalize_epochs: int = 4
    personalize_lr: Optional[float] = None
    mixture_lambda: float = 0.1
    mixture_gamma: float = 0.1
    mixture_sync: str = "round"


@dataclass
class AugmentSection:
    kind: str = "none"  # none | pixel | rotation | translation | affine
    sigma: float = 0.0
    distribution: str = ""
    personalize_kind: str = ""  # empty: same policy as federated training
    personalize_sigma: float = 0.0


@dataclass
class SmoothingSection:
    family: str = "rotation"  # pixel | rotation | translation | affine
    sigma: float = 0.1
    distribution: str = ""


@dataclass
class CertifySection:
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    batch_size: int = 1000


@dataclass
class EvalSection:
    samples_per_client: int = 500
    radius_points: int = 50
    radius_max: Optional[float] = None  # default 2 * smoothing.sigma


@dataclass
class OutputSection:
    dir: str = "out"
    svg: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    net: NetSection = field(default_factory=NetSection)
    federation: FederationSection = field(default_factory=FederationSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    smoothing: SmoothingSection = field(default_factory=SmoothingSection)
    certify: CertifySection = field(default_factory=CertifySection)
    eval: EvalSection = field(default_factory=EvalSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def with_overrides(self, **values) -> "ExperimentConfig":
        """Copy with ``section__key=value`` (or top-level ``seed``) replaced."""
        cfg = _copy(self)
        for key, value in values.items():
            _assign(cfg, key.replace("__", "."), value)
        return cfg


def _copy(cfg):
    kwargs = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        kwargs[f.name] = dataclasses.replace(v) if dataclasses.is_dataclass(v) else v
    return ExperimentConfig(**kwargs)


def _coerce(text, current, name):
    if isinstance(text, str):
        text = text.strip()
    else:
        return text
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if isinstance(current, tuple):
        return tuple(int(v) for v in text.split(",") if v.strip())
    if current is None:
        return None if text.lower() in ("", "none") else float(text)
    try:
        return type(current)(text)
    except ValueError:
        raise ValueError(f"{name}: cannot parse {text!r} as {type(current).__name__}") from None


def _assign(cfg, key, text):
    if key == "seed":
        cfg.seed = int(text)
        return
    section, _, name = key.partition(".")
    sub = getattr(cfg, section, None)
    if not dataclasses.is_dataclass(sub) or name not in {f.name for f in dataclasses.fields(sub)}:
        raise KeyError(f"unknown config key {key!r}")
    setattr(sub, name, _coerce(text, getattr(sub, name), key))


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    cfg = ExperimentConfig(base_dir=Path(base_dir))
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        try:
            _assign(cfg, key.strip(), value)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = [f"seed = {cfg.seed}"]
    for f in dataclasses.fields(cfg):
        sub = getattr(cfg, f.name)
        if not dataclasses.is_dataclass(sub):
            continue
        for g in dataclasses.fields(sub):
            v = getattr(sub, g.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}.{g.name} = {'' if v is None else v}")
    return "\n".join(lines) + "\n"
