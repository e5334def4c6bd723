"""End-to-end backpropagation baseline and regime comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

from . import nn_ops as F
from .autodiff import Tensor, backward
from .data import BatchPlan, ImageDataset, iterate_batches
from .model import Network
from .optimize import Adam
from .training import EpochTimer, MetricsRecord, TrainConfig, epoch_lr, evaluate

log = logging.getLogger(__name__)


def global_step(net: Network, opt: Adam, x, y):
    logits = net.forward(Tensor(x))
    loss = F.cross_entropy(logits, y)
    opt.zero_grad()
    backward(loss)
    opt.step()
    return float(loss.data), logits.data


def train_global(net: Network, train: ImageDataset, test: ImageDataset, cfg: TrainConfig,
                 run_id: str = "", on_record: Callable[[MetricsRecord], None] | None = None) -> list[MetricsRecord]:
    """One cross-entropy loss at the head, gradients through every block; local branches stay idle."""
    opt = Adam(net.global_parameters(), lr=cfg.lr)
    plan = BatchPlan(cfg.seed, min(cfg.batch_size, len(train)))
    records = []
    timer = EpochTimer()
    for epoch in range(cfg.epochs):
        lr = epoch_lr(cfg, epoch)
        opt.lr = lr
        net.train()
        loss_sum, hits, seen = 0.0, 0, 0
        for x, y, _ in iterate_batches(train, plan, epoch):
            loss, logits = global_step(net, opt, x, y)
            loss_sum += loss * len(x)
            hits += int((logits.argmax(1) == y.argmax(1)).sum())
            seen += len(x)
        probes = evaluate(net, test, cfg.eval_batch)
        train_acc = evaluate(net, train, cfg.eval_batch)[-1] if cfg.eval_train else hits / seen
        records.append(MetricsRecord(run_id, "global", cfg.seed, epoch, lr, loss_sum / seen, train_acc,
                                     probes[-1], probes, -1, timer.lap()))
        if on_record is not None:
            on_record(records[-1])
        log.info("%s epoch %d lr %.3g loss %.4f train %.4f test %.4f", run_id, epoch, lr,
                 loss_sum / seen, train_acc, probes[-1])
    return records


@dataclass
class Comparison:
    layerwise_final: float
    layerwise_best: float
    global_final: float
    global_best: float

    @property
    def gap(self) -> float:
        """Global minus layer-wise best accuracy, in percentage points."""
        return 100.0 * (self.global_best - self.layerwise_best)

    def row(self) -> dict[str, float]:
        return {"Layer-wise": 100.0 * self.layerwise_best, "Global": 100.0 * self.global_best, "Gap": self.gap}


def compare_runs(lw: Sequence[MetricsRecord], gl: Sequence[MetricsRecord]) -> Comparison:
    if len(lw) != len(gl):
        raise ValueError(f"epoch counts differ: layer-wise {len(lw)} vs global {len(gl)}")
    if not lw:
        raise ValueError("no records to compare")
    return Comparison(lw[-1].test_acc, max(r.test_acc for r in lw), gl[-1].test_acc, max(r.test_acc for r in gl))
