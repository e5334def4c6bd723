"""ADAM and the stepped learning-rate decay schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor

DEFAULT_MILESTONES = (0.50, 0.75, 0.89, 0.94)
DEFAULT_DECAY = 0.25


@dataclass
class DecaySchedule:
    total_epochs: int
    milestones: tuple[float, ...] = DEFAULT_MILESTONES
    factor: float = DEFAULT_DECAY

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be positive")
        ms = tuple(self.milestones)
        if any(not 0 < m < 1 for m in ms) or any(a >= b for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing in (0, 1): {ms}")
        if not 0 < self.factor <= 1:
            raise ValueError(f"decay factor must be in (0, 1], got {self.factor}")
        self.milestones = ms

    def boundaries(self) -> list[int]:
        """Epoch index at which each milestone takes effect."""
        return [math.floor(m * self.total_epochs) for m in self.milestones]


def lr_at_epoch(sched: DecaySchedule, base_lr: float, epoch: int) -> float:
    if not 0 <= epoch < sched.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {sched.total_epochs})")
    passed = sum(1 for b in sched.boundaries() if b <= epoch)
    return base_lr * sched.factor ** passed


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """ADAM with bias correction; one instance per independently trained parameter group."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        b1, b2 = betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"betas must lie in [0, 1): {betas}")
        self.params = list(params)
        self.state = AdamState(lr, b1, b2, eps, 0,
                               [np.zeros_like(p.data) for p in self.params],
                               [np.zeros_like(p.data) for p in self.params])

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float):
        self.state.lr = value

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.state.lr)


def adam_step(params: Sequence[Tensor], grads, state: AdamState, lr: float) -> None:
    if len(grads) != len(params):
        raise ValueError("one gradient per parameter is required")
    for i, g in enumerate(grads):
        if g is None:
            raise ValueError(f"missing gradient for parameter {i} ({params[i].name or params[i].shape})")
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if lr == 0.0:
            continue
        mhat = m / c1
        vhat = v / c2
        p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype)
