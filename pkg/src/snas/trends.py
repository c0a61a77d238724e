"""Channel-allocation trends across the best architectures of a search."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from snas.archspace import BackboneSkeleton, decode


@dataclass
class TrendReport:
    positions: list  # 1-based searchable-layer positions
    mean_factor: list
    frac_full: list
    neck_flags: Optional[list]
    n_candidates: int

    def group_summary(self) -> dict:
        if self.neck_flags is None or not self.n_candidates:
            return {}
        out = {}
        for label, flag in (("neck_output", True), ("internal", False)):
            idx = [i for i, f in enumerate(self.neck_flags) if f == flag]
            if idx:
                out[label] = {"layers": len(idx),
                              "mean_factor": float(np.mean([self.mean_factor[i] for i in idx])),
                              "frac_full": float(np.mean([self.frac_full[i] for i in idx]))}
        return out

    def to_dict(self) -> dict:
        return {"n_candidates": self.n_candidates, "positions": self.positions,
                "mean_factor": self.mean_factor, "frac_full": self.frac_full,
                "neck_output": self.neck_flags, "groups": self.group_summary()}

    def render(self) -> str:
        if not self.n_candidates:
            return "no candidates: the log holds no top-n architectures\n"
        lines = [f"channel-width trends over top {self.n_candidates} architectures",
                 f"{'pos':>4} {'neck':>5} {'mean':>6} {'at1.0':>6}"]
        for i, pos in enumerate(self.positions):
            neck = "-" if self.neck_flags is None else ("yes" if self.neck_flags[i] else "no")
            lines.append(f"{pos:>4} {neck:>5} {self.mean_factor[i]:>6.3f} {self.frac_full[i]:>6.3f}")
        for label, g in self.group_summary().items():
            lines.append(f"{label}: {g['layers']} layers, mean factor {g['mean_factor']:.3f}, "
                         f"fraction at 1.0 {g['frac_full']:.3f}")
        return "\n".join(lines) + "\n"


def neck_flags(skeleton: BackboneSkeleton) -> list:
    return [layer.is_neck_output for layer in skeleton.layers if layer.searchable]


def trend_report(arch_strings: Sequence[str],
                 skeleton: Optional[BackboneSkeleton] = None) -> TrendReport:
    """Per-position mean width ratio and fraction of layers kept at full width."""
    configs = [decode(s, skeleton) for s in arch_strings]
    flags = neck_flags(skeleton) if skeleton is not None else None
    if not configs:
        return TrendReport([], [], [], flags, 0)
    lengths = {len(c) for c in configs}
    if len(lengths) != 1:
        raise ValueError("architecture strings differ in length")
    quarters = np.array([c.quarters for c in configs])
    mean = (quarters.mean(axis=0) / 4).tolist()
    full = (quarters == 4).mean(axis=0).tolist()
    return TrendReport(list(range(1, quarters.shape[1] + 1)), mean, full, flags, len(configs))
