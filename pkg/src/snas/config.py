"""Run configuration: one JSON document per run.

Every section except ``dataset.seed`` has defaults. Unknown keys are errors,
and cross-field constraints are checked at load time.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from snas.archspace import BackboneSkeleton, decode, default_skeleton
from snas.costmodel import HardwareConstraints
from snas.errors import ConfigurationError, ParseError
from snas.evolution import EvolutionParams
from snas.supernet import TrainConfig

EVALUATORS = ("supernet", "surrogate")


@dataclass
class DatasetSpec:
    seed: int
    num_classes: int = 4
    per_class: int = 100
    height: int = 32
    width: int = 32
    channels: int = 1


@dataclass
class EvaluatorSpec:
    kind: str = "supernet"
    surrogate_seed: int = 0
    workers: int = 1


@dataclass
class RunConfig:
    dataset: DatasetSpec
    skeleton: BackboneSkeleton = field(default_factory=default_skeleton)
    train: TrainConfig = field(default_factory=TrainConfig)
    constraints: HardwareConstraints = field(default_factory=HardwareConstraints)
    evolution: EvolutionParams = field(default_factory=EvolutionParams)
    evaluator: EvaluatorSpec = field(default_factory=EvaluatorSpec)
    baseline: Optional[str] = None
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return {
            "dataset": asdict(self.dataset),
            "skeleton": self.skeleton.to_dict(),
            "train": asdict(self.train),
            "constraints": self.constraints.to_dict(),
            "evolution": self.evolution.to_dict(),
            "evaluator": asdict(self.evaluator),
            "baseline": self.baseline,
            "output_dir": self.output_dir,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _section(cls, data, name, required=()):
    if not isinstance(data, dict):
        raise ConfigurationError(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown key(s) in '{name}': {sorted(unknown)}")
    for key in required:
        if key not in data:
            raise ConfigurationError(f"missing required field '{name}.{key}'")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"invalid '{name}' section: {exc}") from None


def from_dict(data: dict) -> RunConfig:
    top = {"dataset", "skeleton", "train", "constraints", "evolution", "evaluator",
           "baseline", "output_dir"}
    unknown = set(data) - top
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s): {sorted(unknown)}")
    if "dataset" not in data:
        raise ConfigurationError("missing required section 'dataset'")
    dataset = _section(DatasetSpec, data["dataset"], "dataset", required=("seed",))
    skeleton = (BackboneSkeleton.from_dict(data["skeleton"]) if "skeleton" in data
                else default_skeleton())
    cfg = RunConfig(
        dataset=dataset,
        skeleton=skeleton,
        train=_section(TrainConfig, data.get("train", {}), "train"),
        constraints=_section(HardwareConstraints, data.get("constraints", {}), "constraints"),
        evolution=_section(EvolutionParams, data.get("evolution", {}), "evolution"),
        evaluator=_section(EvaluatorSpec, data.get("evaluator", {}), "evaluator"),
        baseline=data.get("baseline"),
        output_dir=data.get("output_dir", "runs/default"),
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    sk, ds = cfg.skeleton, cfg.dataset
    if (ds.height, ds.width, ds.channels) != (sk.input_height, sk.input_width, sk.input_channels):
        raise ConfigurationError("dataset height/width/channels must match the skeleton input")
    if ds.num_classes != sk.num_classes:
        raise ConfigurationError("dataset.num_classes must equal skeleton.num_classes")
    if ds.num_classes < 2 or ds.per_class < 2:
        raise ConfigurationError("dataset needs num_classes >= 2 and per_class >= 2")
    if cfg.evaluator.kind not in EVALUATORS:
        raise ConfigurationError(f"evaluator.kind must be one of {EVALUATORS}")
    if cfg.evaluator.workers < 1:
        raise ConfigurationError("evaluator.workers must be >= 1")
    if cfg.baseline is not None:
        try:
            decode(cfg.baseline, sk)
        except ParseError as exc:
            raise ConfigurationError(f"baseline: {exc}") from None


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return from_dict(data)
