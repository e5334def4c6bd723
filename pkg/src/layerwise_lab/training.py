"""Configuration, per-epoch records and evaluation shared by both regimes."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .autodiff import Tensor, no_grad
from .data import BatchPlan, ImageDataset, iterate_batches
from .model import Network
from .optimize import DEFAULT_DECAY, DEFAULT_MILESTONES, DecaySchedule, lr_at_epoch

Mode = Literal["layerwise_concurrent", "layerwise_greedy", "global"]
MODES: tuple[str, ...] = ("layerwise_concurrent", "layerwise_greedy", "global")
LOSS_KINDS = ("cross_entropy", "frobenius_onehot", "predsim_stub")


@dataclass
class TrainConfig:
    lr: float = 3e-4
    epochs: int = 10
    batch_size: int = 128
    mode: Mode = "layerwise_concurrent"
    local_loss: str = "cross_entropy"
    seed: int = 0
    milestones: tuple[float, ...] = DEFAULT_MILESTONES
    decay: float = DEFAULT_DECAY
    greedy_epochs: int | None = None  # per block; defaults to epochs // blocks
    predsim_alpha: float = 0.0
    similarity_term: Callable | None = None
    eval_train: bool = False  # train accuracy from an eval-mode pass instead of the running average
    eval_batch: int = 500

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.local_loss not in LOSS_KINDS:
            raise ValueError(f"unknown local loss {self.local_loss!r}")
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("lr, epochs and batch size must be positive")

    def schedule(self, total: int | None = None) -> DecaySchedule:
        return DecaySchedule(total or self.epochs, self.milestones, self.decay)


@dataclass
class MetricsRecord:
    run_id: str
    mode: str
    seed: int
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    test_acc: float
    probe_acc: list[float] = field(default_factory=list)
    active_block: int = -1
    wall_time: float = 0.0


def accuracy(logits: np.ndarray, y_onehot: np.ndarray) -> float:
    return float((logits.argmax(axis=1) == y_onehot.argmax(axis=1)).mean())


def evaluate(net: Network, ds: ImageDataset, batch: int = 500) -> list[float]:
    """Eval-mode accuracy of every local classifier; the last entry is the network output."""
    was = [b.training for b in net.blocks]
    net.eval()
    correct = np.zeros(len(net.blocks))
    plan = BatchPlan(0, min(batch, len(ds)))
    with no_grad():
        for x, y, _ in iterate_batches(ds, plan, 0, shuffle=False):
            for j, logits in enumerate(net.predict_all(x)):
                correct[j] += (logits.argmax(1) == y.argmax(1)).sum()
    for b, t in zip(net.blocks, was):
        b.train(t)
    return [float(c / len(ds)) for c in correct]


def network_accuracy(net: Network, ds: ImageDataset, batch: int = 500) -> float:
    was = [b.training for b in net.blocks]
    net.eval()
    hits = 0
    with no_grad():
        for x, y, _ in iterate_batches(ds, BatchPlan(0, min(batch, len(ds))), 0, shuffle=False):
            hits += int((net.forward(Tensor(x)).data.argmax(1) == y.argmax(1)).sum())
    for b, t in zip(net.blocks, was):
        b.train(t)
    return hits / len(ds)


class EpochTimer:
    def __init__(self):
        self.t0 = time.perf_counter()

    def lap(self) -> float:
        t = time.perf_counter()
        dt, self.t0 = t - self.t0, t
        return dt


def epoch_lr(cfg: TrainConfig, epoch: int, total: int | None = None) -> float:
    return lr_at_epoch(cfg.schedule(total), cfg.lr, epoch)
