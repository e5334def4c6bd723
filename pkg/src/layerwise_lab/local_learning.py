"""Layer-wise training with local classifiers.

Every block is trained by the loss of its own classifier.  The graph is cut
after every block, so a block's loss never reaches the parameters of any
other block.  The last block's classifier is the network's output head and is
always trained with cross-entropy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import nn_ops as F
from .autodiff import Tensor, backward, no_grad
from .data import BatchPlan, ImageDataset, iterate_batches
from .model import Network
from .optimize import Adam
from .training import EpochTimer, MetricsRecord, TrainConfig, epoch_lr, evaluate

log = logging.getLogger(__name__)


def local_loss(kind: str, logits: Tensor, y_onehot: np.ndarray, alpha: float = 0.0,
               similarity_term: Callable | None = None, features: Tensor | None = None) -> Tensor:
    if kind == "cross_entropy":
        return F.cross_entropy(logits, y_onehot)
    if kind == "frobenius_onehot":
        return F.frobenius_onehot(logits, y_onehot)
    if kind == "predsim_stub":
        loss = F.cross_entropy(logits, y_onehot)
        if alpha == 0.0:
            return loss
        if similarity_term is None:
            raise ValueError("predsim_stub with alpha > 0 needs a similarity term")
        return loss + similarity_term(features, logits, y_onehot) * alpha
    raise ValueError(f"unknown local loss {kind!r}")


def block_loss(net: Network, j: int, o: Tensor, c: Tensor, y: np.ndarray, cfg: TrainConfig) -> Tensor:
    if j == len(net.blocks) - 1:
        return F.cross_entropy(c, y)
    return local_loss(cfg.local_loss, c, y, cfg.predsim_alpha, cfg.similarity_term, o)


def block_optimizers(net: Network, lr: float) -> list[Adam]:
    return [Adam(b.parameters(), lr=lr) for b in net.blocks]


@dataclass
class StepResult:
    losses: list[float]
    logits: np.ndarray
    cross_block: np.ndarray | None = None  # [loss block, param block] max |grad|


def cross_block_matrix(net: Network, losses: Sequence[Tensor]) -> tuple[np.ndarray, list[list[np.ndarray]]]:
    """Backward each block loss on its own; max |grad| it leaves on every block's parameters."""
    n = len(net.blocks)
    mat = np.zeros((n, n))
    own: list[list[np.ndarray]] = []
    for j, loss in enumerate(losses):
        net.zero_grad()
        backward(loss)
        for i, b in enumerate(net.blocks):
            gs = [np.abs(p.grad).max() for p in b.parameters() if p.grad is not None]
            mat[j, i] = max(gs) if gs else 0.0
        own.append([p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                    for p in net.blocks[j].parameters()])
    return mat, own


def local_step(net: Network, opts: Sequence[Adam], x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
               audit: bool = False, step_order: Iterable[int] | None = None,
               skip_detach: Iterable[int] = ()) -> StepResult:
    """One concurrent layer-wise update on a batch."""
    outs = net.local_forward(Tensor(x), skip_detach)
    losses = []
    for j, (o, c) in enumerate(outs):
        try:
            losses.append(block_loss(net, j, o, c, y, cfg))
        except ValueError as e:
            raise type(e)(f"block {j}: {e}") from e
    mat = None
    if audit:
        mat, own = cross_block_matrix(net, losses)
        net.zero_grad()
        for b, grads in zip(net.blocks, own):
            for p, g in zip(b.parameters(), grads):
                p.grad = g
    else:
        net.zero_grad()
        for loss in losses:
            backward(loss)
    for j in (range(len(opts)) if step_order is None else step_order):
        opts[j].step()
    return StepResult([float(l.data) for l in losses], outs[-1][1].data, mat)


def _offdiag_max(mat: np.ndarray) -> float:
    off = mat.copy()
    np.fill_diagonal(off, 0.0)
    return float(off.max())


def train_layerwise_concurrent(net: Network, train: ImageDataset, test: ImageDataset, cfg: TrainConfig,
                               run_id: str = "", audit_every: int = 0, audit_log: list | None = None,
                               on_record: Callable[[MetricsRecord], None] | None = None) -> list[MetricsRecord]:
    """All blocks update on every batch, each from its own classifier's loss."""
    opts = block_optimizers(net, cfg.lr)
    plan = BatchPlan(cfg.seed, min(cfg.batch_size, len(train)))
    records = []
    timer = EpochTimer()
    step = 0
    for epoch in range(cfg.epochs):
        lr = epoch_lr(cfg, epoch)
        for o in opts:
            o.lr = lr
        net.train()
        loss_sum, hits, seen = 0.0, 0, 0
        for x, y, _ in iterate_batches(train, plan, epoch):
            audit = bool(audit_every) and step % audit_every == 0
            res = local_step(net, opts, x, y, cfg, audit=audit)
            if audit:
                worst = _offdiag_max(res.cross_block)
                if audit_log is not None:
                    audit_log.append((step, worst))
                if worst != 0.0:
                    raise AssertionError(f"cross-block gradient {worst:g} at step {step}")
            loss_sum += res.losses[-1] * len(x)
            hits += int((res.logits.argmax(1) == y.argmax(1)).sum())
            seen += len(x)
            step += 1
        probes = evaluate(net, test, cfg.eval_batch)
        train_acc = evaluate(net, train, cfg.eval_batch)[-1] if cfg.eval_train else hits / seen
        records.append(MetricsRecord(run_id, "layerwise_concurrent", cfg.seed, epoch, lr, loss_sum / seen,
                                     train_acc, probes[-1], probes, -1, timer.lap()))
        if on_record is not None:
            on_record(records[-1])
        log.info("%s epoch %d lr %.3g loss %.4f train %.4f test %.4f", run_id, epoch, lr,
                 loss_sum / seen, train_acc, probes[-1])
    return records


def greedy_budgets(n_blocks: int, cfg: TrainConfig) -> list[int]:
    if cfg.greedy_epochs is not None:
        return [cfg.greedy_epochs] * n_blocks
    base, extra = divmod(cfg.epochs, n_blocks)
    if base == 0:
        raise ValueError(f"{cfg.epochs} epochs cannot cover {n_blocks} greedy blocks")
    # leftover epochs go to the deepest blocks
    return [base + (1 if j >= n_blocks - extra else 0) for j in range(n_blocks)]


def _frozen_features(net: Network, j: int, x: np.ndarray) -> Tensor:
    h = Tensor(x)
    with no_grad():
        for b in net.blocks[:j]:
            h = b.base_forward(h)
    return h


def train_layerwise_greedy(net: Network, train: ImageDataset, test: ImageDataset, cfg: TrainConfig,
                           run_id: str = "",
                           on_record: Callable[[MetricsRecord], None] | None = None) -> list[MetricsRecord]:
    """Blocks trained one after another; earlier blocks frozen in eval mode."""
    budgets = greedy_budgets(len(net.blocks), cfg)
    plan = BatchPlan(cfg.seed, min(cfg.batch_size, len(train)))
    records = []
    timer = EpochTimer()
    epoch = 0
    for j, block in enumerate(net.blocks):
        opt = Adam(block.parameters(), lr=cfg.lr)
        for b in net.blocks[:j]:
            b.eval()
        for e in range(budgets[j]):
            lr = epoch_lr(cfg, e, budgets[j])
            opt.lr = lr
            block.train()
            loss_sum, hits, seen = 0.0, 0, 0
            for x, y, _ in iterate_batches(train, plan, epoch):
                o, c = block.forward(_frozen_features(net, j, x))
                try:
                    loss = block_loss(net, j, o, c, y, cfg)
                except ValueError as err:
                    raise type(err)(f"block {j}: {err}") from err
                opt.zero_grad()
                backward(loss)
                opt.step()
                loss_sum += float(loss.data) * len(x)
                hits += int((c.data.argmax(1) == y.argmax(1)).sum())
                seen += len(x)
            block.eval()
            probes = evaluate(net, test, cfg.eval_batch)
            train_acc = evaluate(net, train, cfg.eval_batch)[j] if cfg.eval_train else hits / seen
            records.append(MetricsRecord(run_id, "layerwise_greedy", cfg.seed, epoch, lr, loss_sum / seen,
                                         train_acc, probes[-1], probes, j, timer.lap()))
            if on_record is not None:
                on_record(records[-1])
            epoch += 1
        block.eval()
    return records


def separability_probe(net: Network, ds: ImageDataset, batch: int = 500) -> list[float]:
    """Held-out accuracy of each block's local classifier, shallow to deep."""
    if len(ds) == 0:
        raise ValueError("separability probe needs a non-empty dataset")
    return evaluate(net, ds, batch)
