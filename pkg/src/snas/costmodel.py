"""Analytic parameter and FLOP counts, and the hardware-constraint predicate.

Convention: one multiply-accumulate is two FLOPs. Biases count as
parameters. Spatial size follows same-padding, ``H_out = ceil(H_in / stride)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from snas.archspace import ArchConfig, BackboneSkeleton, LayerKind, resolve_channels
from snas.errors import ConfigurationError

FLOPS_PER_MAC = 2


@dataclass(frozen=True)
class ResourceCost:
    params: int = 0
    flops: int = 0

    def __add__(self, other: "ResourceCost") -> "ResourceCost":
        return ResourceCost(self.params + other.params, self.flops + other.flops)

    def describe(self) -> str:
        return f"{self.params / 1e3:.2f} KParams, {self.flops / 1e6:.3f} MFLOPs"


@dataclass(frozen=True)
class HardwareConstraints:
    max_params: Optional[int] = None
    max_flops: Optional[int] = None

    def __post_init__(self):
        for name in ("max_params", "max_flops"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
                raise ConfigurationError(f"{name} must be a positive integer or absent")

    def to_dict(self) -> dict:
        return {"max_params": self.max_params, "max_flops": self.max_flops}


UNCONSTRAINED = HardwareConstraints()


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def layer_costs(skeleton: BackboneSkeleton, config: ArchConfig) -> list:
    """Per-layer ``(ResourceCost, (C, H, W) output shape)`` in skeleton order."""
    widths = iter(resolve_channels(skeleton, config))
    c, h, w = skeleton.input_channels, skeleton.input_height, skeleton.input_width
    out = []
    for layer in skeleton.layers:
        if layer.kind.is_conv:
            k = layer.kind.kernel
            cout = next(widths)
            h, w = ceil_div(h, layer.stride), ceil_div(w, layer.stride)
            cost = ResourceCost(params=k * k * c * cout + cout,
                                flops=FLOPS_PER_MAC * k * k * c * cout * h * w)
            c = cout
        elif layer.kind is LayerKind.GLOBAL_AVG_POOL:
            cost = ResourceCost(params=0, flops=c * h * w)
            h = w = 1
        else:
            n = skeleton.num_classes
            cost = ResourceCost(params=c * n + n, flops=FLOPS_PER_MAC * c * n)
            c = n
        out.append((cost, (c, h, w)))
    return out


@lru_cache(maxsize=1 << 17)
def evaluate_cost(skeleton: BackboneSkeleton, config: ArchConfig) -> ResourceCost:
    total = ResourceCost()
    for cost, _ in layer_costs(skeleton, config):
        total = total + cost
    return total


def violations(cost: ResourceCost, constraints: HardwareConstraints) -> list:
    """Names of the bounds ``cost`` exceeds (bounds are inclusive)."""
    bad = []
    if constraints.max_params is not None and cost.params > constraints.max_params:
        bad.append("max_params")
    if constraints.max_flops is not None and cost.flops > constraints.max_flops:
        bad.append("max_flops")
    return bad


def satisfies(cost: ResourceCost, constraints: HardwareConstraints) -> bool:
    return not violations(cost, constraints)
