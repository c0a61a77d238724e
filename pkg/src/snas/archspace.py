"""Channel-width search space: skeletons, architecture encodings, sampling.

Every searchable layer picks one of four width multipliers. Multipliers are
stored as integer quarters (1..4) so equality and hashing are exact.
"""
from __future__ import annotations

import enum
import hashlib
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator, Optional, Sequence

import numpy as np

from snas.errors import ConfigurationError, InfeasibleError, ParseError

if TYPE_CHECKING:
    from snas.costmodel import HardwareConstraints

DEFAULT_MAX_RETRIES = 10_000


class ScaleFactor(enum.IntEnum):
    QUARTER = 1
    HALF = 2
    THREE_QUARTERS = 3
    FULL = 4

    @property
    def ratio(self) -> float:
        return self.value / 4


FACTOR_COUNT = len(ScaleFactor)


class LayerKind(str, enum.Enum):
    CONV3X3 = "Conv3x3"
    CONV1X1 = "Conv1x1"
    GLOBAL_AVG_POOL = "GlobalAvgPool"
    LINEAR_HEAD = "LinearHead"

    @property
    def is_conv(self) -> bool:
        return self in (LayerKind.CONV3X3, LayerKind.CONV1X1)

    @property
    def kernel(self) -> int:
        return {LayerKind.CONV3X3: 3, LayerKind.CONV1X1: 1}.get(self, 0)


@dataclass(frozen=True)
class LayerDescriptor:
    kind: LayerKind
    base_out_channels: Optional[int] = None
    stride: int = 1
    searchable: bool = False
    is_neck_output: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if self.kind.is_conv:
            if self.base_out_channels is None or self.base_out_channels < 1:
                raise ConfigurationError(f"{self.kind.value} needs a positive base_out_channels")
            if self.stride not in (1, 2):
                raise ConfigurationError(f"stride must be 1 or 2, got {self.stride}")
        else:
            if self.searchable:
                raise ConfigurationError(f"{self.kind.value} layers cannot be searchable")
            if self.kind is LayerKind.GLOBAL_AVG_POOL and self.base_out_channels is not None:
                raise ConfigurationError("GlobalAvgPool has no base_out_channels")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "searchable": self.searchable,
             "is_neck_output": self.is_neck_output}
        if self.kind.is_conv:
            d["base_out_channels"] = self.base_out_channels
            d["stride"] = self.stride
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerDescriptor":
        allowed = {"kind", "base_out_channels", "stride", "searchable", "is_neck_output"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigurationError(f"unknown layer keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigurationError("layer is missing field 'kind'")
        try:
            kind = LayerKind(d["kind"])
        except ValueError:
            raise ConfigurationError(f"unknown layer kind {d['kind']!r}") from None
        return cls(kind=kind, base_out_channels=d.get("base_out_channels"),
                   stride=d.get("stride", 1), searchable=bool(d.get("searchable", False)),
                   is_neck_output=bool(d.get("is_neck_output", False)))


@dataclass(frozen=True)
class BackboneSkeleton:
    """Ordered layer list from which costs and supernets are built.

    Layout is any number of conv layers, then one GlobalAvgPool, then one
    LinearHead. The LinearHead output width is ``num_classes``.
    """

    input_height: int
    input_width: int
    input_channels: int
    layers: tuple
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for name in ("input_height", "input_width", "input_channels", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        kinds = [layer.kind for layer in self.layers]
        if kinds.count(LayerKind.LINEAR_HEAD) != 1 or kinds[-1] is not LayerKind.LINEAR_HEAD:
            raise ConfigurationError("skeleton needs exactly one LinearHead, as the last layer")
        if kinds.count(LayerKind.GLOBAL_AVG_POOL) != 1 or kinds[-2] is not LayerKind.GLOBAL_AVG_POOL:
            raise ConfigurationError("skeleton needs exactly one GlobalAvgPool, right before the head")
        if not any(k.is_conv for k in kinds):
            raise ConfigurationError("skeleton needs at least one conv layer")

    @property
    def conv_layers(self) -> tuple:
        return tuple(layer for layer in self.layers if layer.kind.is_conv)

    @property
    def searchable_count(self) -> int:
        return sum(layer.searchable for layer in self.layers)

    def to_dict(self) -> dict:
        return {
            "input_height": self.input_height,
            "input_width": self.input_width,
            "input_channels": self.input_channels,
            "num_classes": self.num_classes,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneSkeleton":
        allowed = {"input_height", "input_width", "input_channels", "num_classes", "layers"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigurationError(f"unknown skeleton keys: {sorted(unknown)}")
        missing = allowed - set(d)
        if missing:
            raise ConfigurationError(f"skeleton is missing field(s): {sorted(missing)}")
        return cls(input_height=d["input_height"], input_width=d["input_width"],
                   input_channels=d["input_channels"], num_classes=d["num_classes"],
                   layers=[LayerDescriptor.from_dict(x) for x in d["layers"]])

    def hash(self) -> str:
        """Stable hex digest of the canonicalized skeleton."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def materialize(self, config: "ArchConfig") -> "BackboneSkeleton":
        """Skeleton of the standalone network for ``config`` (nothing searchable)."""
        widths = iter(resolve_channels(self, config))
        layers = []
        for layer in self.layers:
            if layer.kind.is_conv:
                layer = LayerDescriptor(layer.kind, next(widths), layer.stride,
                                        searchable=False, is_neck_output=layer.is_neck_output)
            layers.append(layer)
        return BackboneSkeleton(self.input_height, self.input_width, self.input_channels,
                                layers, self.num_classes)


@dataclass(frozen=True)
class ArchConfig:
    """One width multiplier per searchable layer, as integer quarters."""

    quarters: tuple = field()

    def __post_init__(self):
        q = tuple(int(x) for x in self.quarters)
        for x in q:
            if x not in (1, 2, 3, 4):
                raise ConfigurationError(f"invalid quarter value {x}")
        object.__setattr__(self, "quarters", q)

    def __len__(self) -> int:
        return len(self.quarters)

    @property
    def factors(self) -> tuple:
        return tuple(ScaleFactor(q) for q in self.quarters)

    @property
    def ratios(self) -> tuple:
        return tuple(q / 4 for q in self.quarters)

    @classmethod
    def from_ratios(cls, ratios: Sequence[float]) -> "ArchConfig":
        quarters = []
        for r in ratios:
            q = r * 4
            if q != round(q):
                raise ConfigurationError(f"ratio {r} is not a multiple of 0.25")
            quarters.append(int(round(q)))
        return cls(tuple(quarters))

    @classmethod
    def uniform(cls, n: int, factor: int = 4) -> "ArchConfig":
        return cls((factor,) * n)

    def __str__(self) -> str:
        return encode(self)


def _check_length(skeleton: BackboneSkeleton, config: ArchConfig) -> None:
    if len(config) != skeleton.searchable_count:
        raise ConfigurationError(
            f"config has {len(config)} factors, skeleton has "
            f"{skeleton.searchable_count} searchable layers")


def space_cardinality(skeleton: BackboneSkeleton, factor_count: int = FACTOR_COUNT) -> int:
    if factor_count < 1:
        raise ValueError("factor_count must be >= 1")
    return factor_count ** skeleton.searchable_count


def enumerate_configs(skeleton: BackboneSkeleton) -> Iterator[ArchConfig]:
    for q in itertools.product((1, 2, 3, 4), repeat=skeleton.searchable_count):
        yield ArchConfig(q)


def _round_half_up_quarters(base: int, quarters: int) -> int:
    # base * q / 4 rounded half up, in integers
    return (base * quarters * 2 + 4) // 8


def resolve_channels(skeleton: BackboneSkeleton, config: ArchConfig) -> list:
    """Actual out-channels of each conv layer, in skeleton order."""
    _check_length(skeleton, config)
    factors = iter(config.quarters)
    out = []
    for layer in skeleton.conv_layers:
        if layer.searchable:
            out.append(max(1, _round_half_up_quarters(layer.base_out_channels, next(factors))))
        else:
            out.append(layer.base_out_channels)
    return out


def encode(config: ArchConfig) -> str:
    return "".join(str(q) for q in config.quarters)


def decode(text: str, skeleton: Optional[BackboneSkeleton] = None) -> ArchConfig:
    if not isinstance(text, str) or any(ch not in "1234" for ch in text):
        raise ParseError(f"invalid architecture string {text!r}: digits must be 1-4")
    if skeleton is not None and len(text) != skeleton.searchable_count:
        raise ParseError(f"architecture string {text!r} has length {len(text)}, "
                         f"expected {skeleton.searchable_count}")
    return ArchConfig(tuple(int(ch) for ch in text))


def draw_uniform(n: int, rng: np.random.Generator) -> ArchConfig:
    return ArchConfig(tuple(int(x) for x in rng.integers(1, 5, size=n)))


def sample_random(skeleton: BackboneSkeleton, constraints: "HardwareConstraints",
                  rng: np.random.Generator, max_retries: int = DEFAULT_MAX_RETRIES) -> ArchConfig:
    """Rejection-sample a uniformly random config that meets ``constraints``."""
    from snas.costmodel import evaluate_cost, violations

    n = skeleton.searchable_count
    misses = Counter()
    for _ in range(max_retries):
        config = draw_uniform(n, rng)
        violated = violations(evaluate_cost(skeleton, config), constraints)
        if not violated:
            return config
        misses.update(violated)
    raise InfeasibleError.from_counts(misses, max_retries)


def default_skeleton() -> BackboneSkeleton:
    """Desk-scale backbone: a fixed stem plus 11 searchable conv layers on 1x32x32
    inputs, 4 classes. The last layer of each stage is flagged as a neck output."""
    c3, c1 = LayerKind.CONV3X3, LayerKind.CONV1X1

    def conv(kind, width, stride=1, neck=False):
        return LayerDescriptor(kind, width, stride, searchable=True, is_neck_output=neck)

    layers = [
        LayerDescriptor(c3, 8, 2),
        conv(c3, 8),
        conv(c3, 16, 2), conv(c1, 16), conv(c3, 16, neck=True),
        conv(c3, 24, 2), conv(c1, 24), conv(c3, 24, neck=True),
        conv(c3, 32, 2), conv(c1, 32), conv(c3, 32), conv(c1, 32, neck=True),
        LayerDescriptor(LayerKind.GLOBAL_AVG_POOL),
        LayerDescriptor(LayerKind.LINEAR_HEAD),
    ]
    return BackboneSkeleton(32, 32, 1, layers, 4)
