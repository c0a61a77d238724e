"""Seeded synthetic classification data: oriented stripe textures per class."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snas.container import read_container, write_container
from snas.errors import ConfigurationError

NOISE_AMPLITUDE = 0.2


@dataclass
class LabeledSet:
    images: np.ndarray  # [N, C, H, W] float32 in [0, 1]
    labels: np.ndarray  # [N] int64
    split: str

    def __len__(self) -> int:
        return len(self.labels)

    def save(self, path) -> None:
        write_container(path, [self.images], "", self.labels)

    @classmethod
    def load(cls, path, split: str = "val") -> "LabeledSet":
        tensors, _, labels = read_container(path)
        if len(tensors) != 1 or tensors[0].ndim != 4:
            raise ConfigurationError(f"{path}: not a dataset container")
        return cls(tensors[0], labels, split)


ANGLE_SPREAD = np.pi / 2  # class angles span a quarter turn
ANGLE_JITTER = 0.1  # radians, uniform; below half the class spacing for 4 classes
FREQ_JITTER = 0.25  # cycles per image, uniform
STRIPE_CONTRAST = 0.5


def class_angle(k: int, num_classes: int) -> float:
    return ANGLE_SPREAD * k / num_classes


def class_frequency(k: int) -> float:
    return 2.75 + 0.5 * (k % 2)


def stripe_pattern(angle: float, freq: float, height: int, width: int, phase: float = 0.0,
                   blob_center=(0.5, 0.5)) -> np.ndarray:
    """Sinusoidal stripes modulated by a soft blob, centred on 0.5."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    u = (xx / width) * np.cos(angle) + (yy / height) * np.sin(angle)
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * u + phase)
    cy, cx = blob_center
    blob = np.exp(-(((yy / height) - cy) ** 2 + ((xx / width) - cx) ** 2) / 0.05)
    return 0.5 + STRIPE_CONTRAST * (stripes - 0.5) * (0.4 + 0.6 * blob)


def generate(seed: int, num_classes: int = 4, per_class: int = 100, height: int = 32,
             width: int = 32, channels: int = 1, noise: float = NOISE_AMPLITUDE):
    """Return ``(train, val)`` with an 80/20 split stratified by class.

    Class ``k`` is a stripe texture whose angle and frequency are set by ``k``
    up to a small per-sample jitter; phase and blob position are random.
    """
    if num_classes < 2:
        raise ConfigurationError("num_classes must be >= 2")
    if per_class < 2:
        raise ConfigurationError("per_class must be >= 2 so both splits contain every class")
    rng = np.random.default_rng(seed)
    n_val = max(1, round(per_class * 0.2))
    parts = {"train": ([], []), "val": ([], [])}
    for k in range(num_classes):
        imgs = []
        for _ in range(per_class):
            angle = class_angle(k, num_classes) + rng.uniform(-ANGLE_JITTER, ANGLE_JITTER)
            freq = class_frequency(k) + rng.uniform(-FREQ_JITTER, FREQ_JITTER)
            phase = rng.uniform(0, 2 * np.pi)
            center = rng.uniform(0.3, 0.7, size=2)
            base = stripe_pattern(angle, freq, height, width, phase, center)
            img = base[None] + noise * rng.uniform(-1, 1, size=(channels, height, width))
            imgs.append(np.clip(img, 0.0, 1.0))
        order = rng.permutation(per_class)
        for split, idx in (("val", order[:n_val]), ("train", order[n_val:])):
            parts[split][0].extend(imgs[i] for i in idx)
            parts[split][1].extend([k] * len(idx))
    out = []
    for split in ("train", "val"):
        imgs, labels = parts[split]
        out.append(LabeledSet(np.stack(imgs).astype(np.float32),
                              np.array(labels, dtype=np.int64), split))
    return tuple(out)
