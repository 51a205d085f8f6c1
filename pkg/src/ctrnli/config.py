"""Run configuration: JSON files with flag overrides layered on top.

A run config names the data, the system (pipeline or joint), the encoder
backend, and the optimization hyperparameters. Defaults follow the training
setup the reference systems used: learning rate 1e-5, warmup rate 0.06,
weight decay 0.01, six epochs. Values from a ``--config`` JSON file are
overridden by any explicitly passed flags.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import EnsembleConfig
from .errors import MalformedJson
from .nn import Hyperparams

SYSTEM_CHOICES = ("pipeline", "joint")
POOLING_CHOICES = ("mean", "first", "max")
EVIDENCE_SOURCE_CHOICES = ("gold", "predicted")

# toy-encoder pair inputs stay short; joint inputs pack a whole document
DEFAULT_MAX_LEN = {"pipeline": 512, "joint": 1024}


@dataclass(frozen=True)
class EncoderConfig:
    """Which encoder to build and how big its inputs may be.

    ``max_len`` of None means the per-system default (512 for the pipeline's
    pair inputs, 1024 for the joint document input). ``mixed_precision`` of
    None resolves to off for the toy backend and on for the pretrained one.
    """

    backend: str = "toy"
    vocab_size: int = 1024
    dim: int = 32
    n_layers: int = 2
    max_len: int | None = None
    pooling: str = "mean"
    model_name: str = ""
    device: str = "cpu"
    mixed_precision: bool | None = None

    def __post_init__(self):
        if self.backend not in ("toy", "pretrained"):
            raise ValueError(f"unknown encoder backend {self.backend!r}")
        if self.pooling not in POOLING_CHOICES:
            raise ValueError(f"pooling must be one of {POOLING_CHOICES}")

    def resolved_max_len(self, system: str) -> int:
        return self.max_len if self.max_len is not None else DEFAULT_MAX_LEN[system]

    def resolved_mixed_precision(self) -> bool:
        if self.mixed_precision is None:
            return self.backend == "pretrained"
        return self.mixed_precision


@dataclass(frozen=True)
class RunConfig:
    """Everything one command invocation needs."""

    corpus: str | None = None
    claims: str | None = None
    output_dir: str = "runs"
    split: str | None = None
    system: str = "pipeline"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    threshold: float = 0.5
    verdict_classes: int = 2
    evidence_source: str = "gold"
    inject_arm_prefix: bool = False
    lenient: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.system not in SYSTEM_CHOICES:
            raise ValueError(f"system must be one of {SYSTEM_CHOICES}")
        if self.evidence_source not in EVIDENCE_SOURCE_CHOICES:
            raise ValueError(f"evidence_source must be one of {EVIDENCE_SOURCE_CHOICES}")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        elif value is not None:
            out[key] = value
    return out


def _build(cls, obj: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**obj)


def load_run_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus overrides.

    Override values of None mean "not given" and never clobber the file;
    everything else wins over the file, which wins over defaults.
    """
    obj: dict = {}
    if path is not None:
        try:
            obj = json.loads(Path(path).read_text())
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise MalformedJson(f"config {path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedJson(f"config {path}: expected a JSON object")
    obj = _merge(obj, overrides or {})
    nested = {
        "encoder": EncoderConfig,
        "hyperparams": Hyperparams,
        "ensemble": EnsembleConfig,
    }
    kwargs: dict = {}
    for key, value in obj.items():
        if key in nested:
            if not isinstance(value, dict):
                raise ValueError(f"config key {key!r} must be an object")
            kwargs[key] = _build(nested[key], value)
        else:
            kwargs[key] = value
    return _build(RunConfig, kwargs)
