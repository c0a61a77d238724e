"""Weight-sharing slimmable conv net, sandwich-rule training, weight inheritance.

A sub-network of width ``c`` at some layer uses the first ``c`` output
channels of that layer's shared kernel and the first ``c`` input channels of
the next layer's kernel. Gradients of a sub-network therefore land only in
those leading slices of the shared tensors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from snas import autodiff as ad
from snas.archspace import ArchConfig, BackboneSkeleton, draw_uniform, encode, resolve_channels
from snas.container import read_container, write_container
from snas.errors import ConfigurationError, TrainingError

logger = logging.getLogger(__name__)

DTYPE = np.float32


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.02
    momentum: float = 0.9
    seed: int = 0
    clip_norm: Optional[float] = 5.0  # global gradient-norm cap per step; None disables

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ConfigurationError("epochs >= 0, batch_size >= 1, learning_rate >= 0 required")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")


@dataclass
class SupernetWeights:
    kernels: List[np.ndarray]
    biases: List[np.ndarray]
    head_weight: np.ndarray
    head_bias: np.ndarray
    skeleton_hash: str = ""

    def tensors(self) -> list:
        out = []
        for k, b in zip(self.kernels, self.biases):
            out += [k, b]
        return out + [self.head_weight, self.head_bias]

    def copy(self) -> "SupernetWeights":
        return SupernetWeights([k.copy() for k in self.kernels], [b.copy() for b in self.biases],
                               self.head_weight.copy(), self.head_bias.copy(), self.skeleton_hash)

    def zeros_like(self) -> "SupernetWeights":
        return SupernetWeights([np.zeros_like(k) for k in self.kernels],
                               [np.zeros_like(b) for b in self.biases],
                               np.zeros_like(self.head_weight), np.zeros_like(self.head_bias),
                               self.skeleton_hash)

    def equals(self, other: "SupernetWeights") -> bool:
        """Bitwise equality of every tensor."""
        a, b = self.tensors(), other.tensors()
        return len(a) == len(b) and all(
            x.shape == y.shape and x.tobytes() == y.tobytes() for x, y in zip(a, b))

    def save(self, path) -> None:
        write_container(path, self.tensors(), self.skeleton_hash)

    @classmethod
    def load(cls, path, skeleton: Optional[BackboneSkeleton] = None) -> "SupernetWeights":
        tensors, skel_hash, _ = read_container(path)
        if skeleton is not None and skel_hash != skeleton.hash():
            raise ConfigurationError(
                f"{path}: weights were trained for skeleton {skel_hash[:12]}, "
                f"config skeleton is {skeleton.hash()[:12]}")
        if len(tensors) < 4 or len(tensors) % 2:
            raise ConfigurationError(f"{path}: unexpected tensor count {len(tensors)}")
        body = tensors[:-2]
        return cls(body[0::2], body[1::2], tensors[-2], tensors[-1], skel_hash)


def init_weights(skeleton: BackboneSkeleton, seed: int) -> SupernetWeights:
    """Kaiming-uniform (fan-in) kernels at maximal width, zero biases."""
    rng = np.random.default_rng(seed)
    cin = skeleton.input_channels
    kernels, biases = [], []
    for layer in skeleton.conv_layers:
        k, cout = layer.kind.kernel, layer.base_out_channels
        bound = np.sqrt(6.0 / (cin * k * k))
        kernels.append(rng.uniform(-bound, bound, size=(cout, cin, k, k)).astype(DTYPE))
        biases.append(np.zeros(cout, dtype=DTYPE))
        cin = cout
    bound = np.sqrt(1.0 / cin)
    head_w = rng.uniform(-bound, bound, size=(cin, skeleton.num_classes)).astype(DTYPE)
    return SupernetWeights(kernels, biases, head_w, np.zeros(skeleton.num_classes, DTYPE),
                           skeleton.hash())


def _slices(skeleton: BackboneSkeleton, config: ArchConfig):
    widths = resolve_channels(skeleton, config)
    cins = [skeleton.input_channels] + widths[:-1]
    return list(zip(widths, cins)), widths[-1]


def slice_weights(weights: SupernetWeights, skeleton: BackboneSkeleton,
                  config: ArchConfig) -> SupernetWeights:
    """Materialize the inherited weights of ``config`` as standalone copies.

    The result belongs to ``skeleton.materialize(config)``.
    """
    pairs, feat = _slices(skeleton, config)
    kernels = [weights.kernels[i][:co, :ci].copy() for i, (co, ci) in enumerate(pairs)]
    biases = [weights.biases[i][:co].copy() for i, (co, _) in enumerate(pairs)]
    return SupernetWeights(kernels, biases, weights.head_weight[:feat].copy(),
                           weights.head_bias.copy(), skeleton.materialize(config).hash())


def _check_batch(skeleton: BackboneSkeleton, batch: np.ndarray) -> None:
    want = (skeleton.input_channels, skeleton.input_height, skeleton.input_width)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != want:
        raise ConfigurationError(f"batch shape {batch.shape} does not match skeleton input {want}")


def _forward(weights, skeleton, config, batch, keep_tape):
    pairs, feat = _slices(skeleton, config)
    strides = [layer.stride for layer in skeleton.conv_layers]
    x = np.asarray(batch, dtype=DTYPE)
    tape = []
    for i, ((co, ci), s) in enumerate(zip(pairs, strides)):
        kern = np.ascontiguousarray(weights.kernels[i][:co, :ci])
        x, t_conv = ad.conv2d(x, kern, weights.biases[i][:co], s)
        x, t_relu = ad.relu(x)
        if keep_tape:
            tape.append((t_conv, t_relu))
    x, t_pool = ad.global_avg_pool(x)
    head = np.ascontiguousarray(weights.head_weight[:feat])
    logits, t_head = ad.linear(x, head, weights.head_bias)
    return logits, (tape, t_pool, t_head, pairs, feat)


def forward(weights: SupernetWeights, skeleton: BackboneSkeleton, config: ArchConfig,
            batch: np.ndarray) -> np.ndarray:
    """Per-class logits of the sub-network ``config`` on an NCHW batch."""
    _check_batch(skeleton, batch)
    return _forward(weights, skeleton, config, batch, keep_tape=False)[0]


def predict(weights, skeleton, config, images, batch_size: int = 256) -> np.ndarray:
    preds = []
    for start in range(0, len(images), batch_size):
        preds.append(forward(weights, skeleton, config, images[start:start + batch_size]).argmax(1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def accumulate_gradients(weights: SupernetWeights, skeleton: BackboneSkeleton,
                         config: ArchConfig, batch: np.ndarray, labels: np.ndarray,
                         grads: SupernetWeights) -> float:
    """Add the gradient of ``config``'s loss into ``grads`` (full-size buffers)."""
    with np.errstate(invalid="ignore", over="ignore"):  # reported below as TrainingError
        logits, (tape, t_pool, t_head, pairs, feat) = _forward(weights, skeleton, config, batch, True)
        loss, g = ad.softmax_cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss for sub-network {encode(config)}", encode(config))
    g, dw, db = ad.linear_backward(g, t_head)
    grads.head_weight[:feat] += dw
    grads.head_bias += db
    g = ad.global_avg_pool_backward(g, t_pool)
    for i in range(len(tape) - 1, -1, -1):
        t_conv, t_relu = tape[i]
        co, ci = pairs[i]
        g = ad.relu_backward(g, t_relu)
        g, dk, dbias = ad.conv2d_backward(g, t_conv)
        grads.kernels[i][:co, :ci] += dk
        grads.biases[i][:co] += dbias
    return loss


def sandwich_configs(skeleton: BackboneSkeleton, rng: np.random.Generator) -> list:
    """Largest, smallest and two uniformly drawn sub-networks (with replacement)."""
    n = skeleton.searchable_count
    return [ArchConfig.uniform(n, 4), ArchConfig.uniform(n, 1), draw_uniform(n, rng), draw_uniform(n, rng)]


@dataclass
class StepReport:
    configs: list
    losses: list

    @property
    def total(self) -> float:
        return float(sum(self.losses))


class SGD:
    """SGD with momentum over a ``SupernetWeights`` pytree."""

    def __init__(self, weights: SupernetWeights, momentum: float = 0.9,
                 clip_norm: Optional[float] = None):
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = weights.zeros_like()

    def step(self, weights: SupernetWeights, grads: SupernetWeights, lr: float) -> None:
        gs = grads.tensors()
        if self.clip_norm is not None:
            norm = np.sqrt(sum(float(np.dot(g.ravel().astype(np.float64), g.ravel())) for g in gs))
            if norm > self.clip_norm:
                scale = DTYPE(self.clip_norm / norm)
                for g in gs:
                    g *= scale
        mu = DTYPE(self.momentum)
        lr = DTYPE(lr)
        for w, v, g in zip(weights.tensors(), self.velocity.tensors(), grads.tensors()):
            v *= mu
            v += g
            w -= lr * v


def train_step(weights: SupernetWeights, skeleton: BackboneSkeleton, batch: np.ndarray,
               labels: np.ndarray, configs: Sequence[ArchConfig], lr: float,
               optimizer: SGD) -> StepReport:
    """Accumulate gradients of every config in ``configs``, then take one SGD step."""
    grads = weights.zeros_like()
    losses = [accumulate_gradients(weights, skeleton, c, batch, labels, grads) for c in configs]
    optimizer.step(weights, grads, lr)
    return StepReport(list(configs), losses)


def train_step_sandwich(weights: SupernetWeights, skeleton: BackboneSkeleton, batch: np.ndarray,
                        labels: np.ndarray, rng: np.random.Generator, lr: float,
                        optimizer: Optional[SGD] = None) -> StepReport:
    optimizer = optimizer or SGD(weights)
    return train_step(weights, skeleton, batch, labels, sandwich_configs(skeleton, rng), lr, optimizer)


@dataclass
class TrainHistory:
    epoch_losses: list = field(default_factory=list)  # mean loss per role, per epoch

    def to_records(self) -> list:
        return [{"epoch": i + 1, "mean_losses": losses, "mean_total": float(sum(losses))}
                for i, losses in enumerate(self.epoch_losses)]


def _train(weights, skeleton, images, labels, cfg: TrainConfig,
           pick_configs: Callable[[np.random.Generator], list]):
    if len(images) == 0:
        raise ConfigurationError("training set is empty")
    _check_batch(skeleton, images)
    weights = weights.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = SGD(weights, cfg.momentum, cfg.clip_norm)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(images))
        sums, steps = None, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            report = train_step(weights, skeleton, images[idx], labels[idx],
                                pick_configs(rng), cfg.learning_rate, opt)
            sums = np.array(report.losses) if sums is None else sums + report.losses
            steps += 1
        history.epoch_losses.append([float(x) for x in sums / steps])
        logger.info("epoch %d/%d mean losses %s", epoch + 1, cfg.epochs,
                    " ".join(f"{x:.4f}" for x in history.epoch_losses[-1]))
    return weights, history


def train_supernet(weights: SupernetWeights, skeleton: BackboneSkeleton, dataset,
                   cfg: TrainConfig):
    """Sandwich-rule training over ``dataset`` (a ``LabeledSet``). Returns new weights."""
    return _train(weights, skeleton, dataset.images, dataset.labels, cfg,
                  lambda rng: sandwich_configs(skeleton, rng))


def train_standalone(skeleton: BackboneSkeleton, dataset, cfg: TrainConfig,
                     init_seed: Optional[int] = None):
    """Train a non-shared network for ``skeleton`` (nothing searchable) from fresh init."""
    if skeleton.searchable_count:
        raise ConfigurationError("standalone training expects a materialized skeleton")
    weights = init_weights(skeleton, cfg.seed if init_seed is None else init_seed)
    full = ArchConfig(())
    return _train(weights, skeleton, dataset.images, dataset.labels, cfg, lambda rng: [full])


def accuracy(weights, skeleton, config, dataset) -> float:
    preds = predict(weights, skeleton, config, dataset.images)
    return float((preds == dataset.labels).mean())
