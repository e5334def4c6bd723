"""Trainable networks instantiated from a ``NetworkPlan``.

A ``Network`` is a chain of ``LocalBlock`` objects.  Each block owns its base
layers, a local classifier (the last block's classifier is the output head),
its batch-norm state and its own dropout RNG stream, so blocks can be trained
independently of one another.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import nn_ops as F
from .architecture import AuxSpec, BlockSpec, NetworkPlan
from .autodiff import Tensor, detach, flatten, no_grad

_INIT_STREAM = 0
_DROPOUT_STREAM = 1


def block_rng(seed: int, block: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, block)))


class ConvBN:
    """conv -> batch norm, the shared building piece."""

    def __init__(self, rng, in_c: int, out_c: int, kernel: int = 3, stride: int = 1):
        self.conv = F.init_conv(rng, in_c, out_c, kernel, stride)
        self.bn = F.BatchNormState.create(out_c)

    def __call__(self, x: Tensor) -> Tensor:
        return F.batch_norm(F.conv2d(x, self.conv), self.bn)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.conv.weight", self.conv.weight
        yield f"{prefix}.conv.bias", self.conv.bias
        yield f"{prefix}.bn.gamma", self.bn.gamma
        yield f"{prefix}.bn.beta", self.bn.beta


class AuxBranch:
    """3x3 conv, adaptive average pool, linear classifier."""

    def __init__(self, rng, spec: AuxSpec):
        self.spec = spec
        self.conv = F.init_conv(rng, spec.in_channels, spec.hidden_channels, 3)
        self.weight, self.bias = F.init_linear(rng, spec.hidden_channels * spec.pooled ** 2, spec.num_classes)

    def __call__(self, o: Tensor) -> Tensor:
        h = F.adaptive_avg_pool2d(F.conv2d(o, self.conv), self.spec.pooled)
        return F.linear(flatten(h), self.weight, self.bias)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.conv.weight", self.conv.weight
        yield f"{prefix}.conv.bias", self.conv.bias
        yield f"{prefix}.fc.weight", self.weight
        yield f"{prefix}.fc.bias", self.bias


class Head:
    """Global average pool and linear output layer."""

    def __init__(self, rng, spec: AuxSpec):
        self.spec = spec
        self.weight, self.bias = F.init_linear(rng, spec.in_channels, spec.num_classes)

    def __call__(self, o: Tensor) -> Tensor:
        return F.linear(F.global_avg_pool(o), self.weight, self.bias)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.fc.weight", self.weight
        yield f"{prefix}.fc.bias", self.bias


class LocalBlock:
    def __init__(self, spec: BlockSpec, seed: int, dropout: float = 0.0, slope: float = F.LEAKY_SLOPE,
                 pool_position: str = "post", in_channels: int = 3):
        self.spec = spec
        self.index = spec.index
        self.dropout = dropout
        self.slope = slope
        self.pool_position = pool_position
        self.training = True
        self.rng = block_rng(seed, spec.index, _DROPOUT_STREAM)
        init = block_rng(seed, spec.index, _INIT_STREAM)

        self.stem = ConvBN(init, in_channels, spec.in_channels) if spec.has_stem else None
        if spec.kind == "plain":
            self.body = [ConvBN(init, spec.in_channels, spec.out_channels)]
            self.shortcut = None
        else:
            self.body = [ConvBN(init, spec.in_channels, spec.out_channels, stride=spec.stride),
                         ConvBN(init, spec.out_channels, spec.out_channels)]
            self.shortcut = (ConvBN(init, spec.in_channels, spec.out_channels, kernel=1, stride=spec.stride)
                             if spec.projection else None)
        self.aux = Head(init, spec.aux) if spec.aux.kind == "head" else AuxBranch(init, spec.aux)

    @property
    def is_head(self) -> bool:
        return self.spec.aux.kind == "head"

    # ---- mode handling
    def named_parts(self) -> list[tuple[str, ConvBN]]:
        parts = []
        if self.stem is not None:
            parts.append(("stem", self.stem))
        parts.extend((f"conv{i + 1}", p) for i, p in enumerate(self.body))
        if self.shortcut is not None:
            parts.append(("shortcut", self.shortcut))
        return parts

    def train(self, mode: bool = True):
        self.training = mode
        for _, part in self.named_parts():
            part.bn.mode = "train" if mode else "eval"
        return self

    def eval(self):
        return self.train(False)

    # ---- parameters
    def named_base_parameters(self):
        for name, part in self.named_parts():
            yield from part.named_parameters(f"block{self.index}.{name}")

    def named_aux_parameters(self):
        prefix = "head" if self.is_head else f"block{self.index}.aux"
        yield from self.aux.named_parameters(prefix)

    def base_parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_base_parameters()]

    def aux_parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_aux_parameters()]

    def parameters(self) -> list[Tensor]:
        return self.base_parameters() + self.aux_parameters()

    # ---- forward
    def _act(self, x: Tensor) -> Tensor:
        return F.dropout(F.leaky_relu(x, self.slope), self.dropout, self.training, self.rng)

    def base_forward(self, x: Tensor) -> Tensor:
        if self.stem is not None:
            x = F.leaky_relu(self.stem(x), self.slope)
        if self.spec.kind == "plain":
            unit = self.body[0]
            h = F.conv2d(x, unit.conv)
            if self.spec.pool_after and self.pool_position == "pre":
                h = F.max_pool2d(h)
            h = self._act(F.batch_norm(h, unit.bn))
            if self.spec.pool_after and self.pool_position == "post":
                h = F.max_pool2d(h)
            return h
        h = self._act(self.body[0](x))
        h = self.body[1](h)
        skip = self.shortcut(x) if self.shortcut is not None else x
        # no dropout after the sum: the identity path stays intact
        return F.leaky_relu(h + skip, self.slope)

    def classify(self, o: Tensor) -> Tensor:
        return self.aux(o)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Base output O_j and local prediction c_j."""
        o = self.base_forward(x)
        return o, self.aux(o)


class Network:
    def __init__(self, plan: NetworkPlan, seed: int = 0, dropout: float = 0.0, slope: float = F.LEAKY_SLOPE):
        self.plan = plan
        self.seed = seed
        self.blocks = [LocalBlock(b, seed, dropout, slope, plan.pool_position, plan.in_channels)
                       for b in plan.blocks]

    def __len__(self):
        return len(self.blocks)

    @property
    def head(self) -> Head:
        return self.blocks[-1].aux

    def train(self, mode: bool = True):
        for b in self.blocks:
            b.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def base_parameters(self) -> list[Tensor]:
        return [p for b in self.blocks for p in b.base_parameters()]

    def global_parameters(self) -> list[Tensor]:
        """Base parameters of every block plus the output head; the global regime's parameter set."""
        return self.base_parameters() + self.blocks[-1].aux_parameters()

    def all_parameters(self) -> list[Tensor]:
        return [p for b in self.blocks for p in b.parameters()]

    def zero_grad(self):
        for p in self.all_parameters():
            p.grad = None

    def forward(self, x, detach_between: bool = False) -> Tensor:
        """Logits of the output head; auxiliary branches are not executed."""
        h = x if isinstance(x, Tensor) else Tensor(x)
        for b in self.blocks:
            h = b.base_forward(h)
            if detach_between and b is not self.blocks[-1]:
                h = detach(h)
        return self.blocks[-1].aux(h)

    def local_forward(self, x, skip_detach: Iterable[int] = ()) -> list[tuple[Tensor, Tensor]]:
        """(O_j, c_j) for every block with the graph cut after each block.

        ``skip_detach`` leaves the boundary after the listed blocks intact; it
        exists only so the isolation audit can be shown to catch a leak.
        """
        skip = set(skip_detach)
        h = x if isinstance(x, Tensor) else Tensor(x)
        outs = []
        for b in self.blocks:
            o, c = b.forward(h)
            outs.append((o, c))
            h = o if b.index in skip else detach(o)
        return outs

    def predict_all(self, x) -> list[np.ndarray]:
        """Logits of every local classifier, no graph."""
        with no_grad():
            return [c.data for _, c in self.local_forward(x)]

    def export_base_weights(self) -> dict[str, np.ndarray]:
        """Base-network weights, batch-norm statistics and the output head."""
        out: dict[str, np.ndarray] = {}
        for b in self.blocks:
            for name, p in b.named_base_parameters():
                out[name] = p.data.copy()
            for name, part in b.named_parts():
                out[f"block{b.index}.{name}.bn.running_mean"] = part.bn.running_mean.copy()
                out[f"block{b.index}.{name}.bn.running_var"] = part.bn.running_var.copy()
        for name, p in self.blocks[-1].named_aux_parameters():
            out[name] = p.data.copy()
        return out

    def load_base_weights(self, weights: dict[str, np.ndarray]):
        for b in self.blocks:
            for name, p in list(b.named_base_parameters()) + (list(b.named_aux_parameters()) if b.is_head else []):
                p.data[...] = weights[name]
            for name, part in b.named_parts():
                part.bn.running_mean = weights[f"block{b.index}.{name}.bn.running_mean"].copy()
                part.bn.running_var = weights[f"block{b.index}.{name}.bn.running_var"].copy()
        return self


def param_count(params: Iterable[Tensor]) -> int:
    return sum(p.size for p in params)


def plain_forward(plan: NetworkPlan, weights: dict[str, np.ndarray], x: np.ndarray,
                  slope: float = F.LEAKY_SLOPE) -> np.ndarray:
    """Eval-mode inference from a flat weight dict, with no block objects involved."""

    def conv(prefix, h, stride, kernel):
        p = F.ConvParams(Tensor(weights[f"{prefix}.conv.weight"]), Tensor(weights[f"{prefix}.conv.bias"]),
                         stride, kernel // 2)
        return F.conv2d(h, p)

    def bn(prefix, h):
        st = F.BatchNormState(Tensor(weights[f"{prefix}.bn.gamma"]), Tensor(weights[f"{prefix}.bn.beta"]),
                              weights[f"{prefix}.bn.running_mean"], weights[f"{prefix}.bn.running_var"],
                              mode="eval")
        return F.batch_norm(h, st)

    with no_grad():
        h = Tensor(x)
        for b in plan.blocks:
            pre = f"block{b.index}"
            if b.has_stem:
                h = F.leaky_relu(bn(f"{pre}.stem", conv(f"{pre}.stem", h, 1, 3)), slope)
            if b.kind == "plain":
                h = conv(f"{pre}.conv1", h, 1, 3)
                if b.pool_after and plan.pool_position == "pre":
                    h = F.max_pool2d(h)
                h = F.leaky_relu(bn(f"{pre}.conv1", h), slope)
                if b.pool_after and plan.pool_position == "post":
                    h = F.max_pool2d(h)
            else:
                r = F.leaky_relu(bn(f"{pre}.conv1", conv(f"{pre}.conv1", h, b.stride, 3)), slope)
                r = bn(f"{pre}.conv2", conv(f"{pre}.conv2", r, 1, 3))
                skip = bn(f"{pre}.shortcut", conv(f"{pre}.shortcut", h, b.stride, 1)) if b.projection else h
                h = F.leaky_relu(r + skip, slope)
        out = F.linear(F.global_avg_pool(h), Tensor(weights["head.fc.weight"]), Tensor(weights["head.fc.bias"]))
    return out.data
