"""Hierarchy descriptors and network plans.

A hierarchy ``[d_1, ..., d_m]`` lists how many convolution units sit in each
resolution stage.  For ``plain`` networks a unit is conv-bn-act-dropout and
each stage ends in a stride-2 max pool.  For ``residual`` networks a unit is a
basic two-convolution residual block; stages after the first open with a
stride-2 unit, and the last stage ends in global average pooling.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

BlockKind = Literal["plain", "residual"]

_HIER_RE = re.compile(r"^\[\s*\d+(\s*,\s*\d+)*\s*\]$")


def parse_hierarchy(text: str) -> list[int]:
    """Parse table notation like ``"[1,1,2,2]"``."""
    s = text.strip()
    if not _HIER_RE.match(s):
        raise ValueError(f"unparseable hierarchy {text!r}; expected e.g. [1,1,2,2]")
    values = [int(v) for v in s[1:-1].split(",")]
    if any(v < 1 for v in values):
        raise ValueError(f"hierarchy entries must be positive: {text!r}")
    return values


def format_hierarchy(stage_convs: Sequence[int]) -> str:
    return "[" + ",".join(str(d) for d in stage_convs) + "]"


def default_channels(m: int, base: int = 64) -> list[int]:
    return [base * 2 ** i for i in range(m)]


@dataclass(frozen=True)
class HierarchySpec:
    stage_convs: tuple[int, ...]
    stage_channels: tuple[int, ...]
    block_kind: BlockKind = "plain"
    shallow_depth: int | None = None
    input_resolution: int = 32
    pool_stride: int = 2

    def __post_init__(self):
        object.__setattr__(self, "stage_convs", tuple(int(d) for d in self.stage_convs))
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        m = len(self.stage_convs)
        if m < 2:
            raise ValueError("a hierarchy needs at least 2 stages")
        if len(self.stage_channels) != m:
            raise ValueError(f"{len(self.stage_channels)} stage widths for {m} stages")
        if any(d < 1 for d in self.stage_convs) or any(c < 1 for c in self.stage_channels):
            raise ValueError("stage conv counts and widths must be positive")
        if self.block_kind not in ("plain", "residual"):
            raise ValueError(f"unknown block kind {self.block_kind!r}")
        if self.shallow_depth is None:
            object.__setattr__(self, "shallow_depth", m // 2)
        if not 1 <= self.shallow_depth < m:
            raise ValueError(f"shallow depth k={self.shallow_depth} must satisfy 1 <= k < {m}")
        if self.input_resolution < 1 or self.pool_stride < 1:
            raise ValueError("input resolution and pool stride must be positive")

    @classmethod
    def from_string(cls, text: str, channels: Sequence[int] | None = None, **kw) -> "HierarchySpec":
        d = parse_hierarchy(text)
        return cls(tuple(d), tuple(channels or default_channels(len(d))), **kw)

    @property
    def m(self) -> int:
        return len(self.stage_convs)

    @property
    def n(self) -> int:
        return sum(self.stage_convs)

    @property
    def k(self) -> int:
        return self.shallow_depth

    def notation(self) -> str:
        return format_hierarchy(self.stage_convs)


def check_acceleration(spec: HierarchySpec) -> bool:
    """Downsampling-acceleration admissibility.

    The shallow part (first ``k`` stages, at most half the stages) must hold
    strictly fewer units per stage than every deep stage.
    """
    k, m = spec.k, spec.m
    if 2 * k > m:
        return False
    return max(spec.stage_convs[:k]) < min(spec.stage_convs[k:])


def stage_scales(spec: HierarchySpec) -> list[int]:
    """Input resolution of each stage."""
    return [spec.input_resolution // spec.pool_stride ** i for i in range(spec.m)]


def conv_mass(spec: HierarchySpec, shallow_only: bool = False) -> int:
    """Sum of d_i * scale_i**2, over shallow stages or all stages."""
    stop = spec.k if shallow_only else spec.m
    return sum(d * s * s for d, s in zip(spec.stage_convs[:stop], stage_scales(spec)[:stop]))


def compositions(n: int, m: int):
    for cuts in itertools.combinations(range(1, n), m - 1):
        bounds = (0,) + cuts + (n,)
        yield tuple(b - a for a, b in zip(bounds, bounds[1:]))


def enumerate_hierarchies(n: int, m: int, constraint: Literal["accelerated", "any"] = "any",
                          channels: Sequence[int] | None = None, **kw) -> list[HierarchySpec]:
    """All ways to spread ``n`` units over ``m`` stages, cheapest conv mass first."""
    if n < m:
        raise ValueError(f"cannot place {n} convolutions in {m} stages")
    if constraint not in ("accelerated", "any"):
        raise ValueError(f"unknown constraint {constraint!r}")
    chans = tuple(channels or default_channels(m))
    specs = [HierarchySpec(d, chans, **kw) for d in compositions(n, m)]
    if constraint == "accelerated":
        specs = [s for s in specs if check_acceleration(s)]
    return sorted(specs, key=lambda s: (conv_mass(s), s.stage_convs))


# ------------------------------------------------------------------- plans


@dataclass(frozen=True)
class AuxSpec:
    """Local classifier: 3x3 conv, adaptive average pool, linear (or the output head)."""

    kind: Literal["branch", "head"]
    in_channels: int
    hidden_channels: int
    pooled: int
    num_classes: int


@dataclass(frozen=True)
class BlockSpec:
    index: int
    stage: int
    kind: BlockKind
    in_channels: int
    out_channels: int
    stride: int
    in_resolution: int
    out_resolution: int
    pool_after: bool
    has_stem: bool
    aux: AuxSpec

    @property
    def projection(self) -> bool:
        return self.kind == "residual" and (self.stride != 1 or self.in_channels != self.out_channels)


@dataclass(frozen=True)
class NetworkPlan:
    spec: HierarchySpec
    num_classes: int
    in_channels: int
    blocks: tuple[BlockSpec, ...] = field(default_factory=tuple)
    pool_position: Literal["post", "pre"] = "post"

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def pool_count(self) -> int:
        # stride-2 transitions plus the global pool feeding the head (residual)
        if self.spec.block_kind == "plain":
            return sum(b.pool_after for b in self.blocks)
        return sum(b.stride != 1 for b in self.blocks) + 1

    def resolutions(self) -> list[int]:
        out = [self.spec.input_resolution]
        for b in self.blocks:
            if b.out_resolution != out[-1]:
                out.append(b.out_resolution)
        return out


def build_network(spec: HierarchySpec, num_classes: int, in_channels: int = 3,
                  aux_pool: int = 4, aux_hidden: int | None = None,
                  pool_position: Literal["post", "pre"] = "post") -> NetworkPlan:
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    if pool_position not in ("post", "pre"):
        raise ValueError(f"unknown pool position {pool_position!r}")
    s = spec.pool_stride
    downsamples = spec.m if spec.block_kind == "plain" else spec.m - 1
    if spec.input_resolution < s ** downsamples:
        raise ValueError(f"input resolution {spec.input_resolution} underflows after {downsamples} "
                         f"stride-{s} downsamplings")

    blocks: list[BlockSpec] = []
    res = spec.input_resolution
    prev_c = in_channels
    idx = 0
    n_total = spec.n
    for stage, (d, c) in enumerate(zip(spec.stage_convs, spec.stage_channels)):
        for u in range(d):
            last_overall = idx == n_total - 1
            if spec.block_kind == "plain":
                pool_after = u == d - 1
                stride = 1
                out_res = res // s if pool_after else res
            else:
                pool_after = False
                stride = s if (stage > 0 and u == 0) else 1
                out_res = res // stride
            # the stem (residual only) maps input channels to the first stage width
            in_c = prev_c if not (spec.block_kind == "residual" and idx == 0) else spec.stage_channels[0]
            if last_overall:
                aux = AuxSpec("head", c, c, 1, num_classes)
            else:
                aux = AuxSpec("branch", c, aux_hidden or c, min(aux_pool, out_res), num_classes)
            blocks.append(BlockSpec(idx, stage, spec.block_kind, in_c, c, stride, res, out_res,
                                    pool_after, spec.block_kind == "residual" and idx == 0, aux))
            res = out_res
            prev_c = c
            idx += 1
    return NetworkPlan(spec, num_classes, in_channels, tuple(blocks), pool_position)


def truncate_plan(plan: NetworkPlan, n_blocks: int) -> NetworkPlan:
    """First ``n_blocks`` blocks, with the last one's classifier promoted to the output head."""
    if not 1 <= n_blocks <= plan.n_blocks:
        raise ValueError(f"cannot keep {n_blocks} of {plan.n_blocks} blocks")
    kept = list(plan.blocks[:n_blocks])
    last = kept[-1]
    kept[-1] = replace(last, aux=AuxSpec("head", last.out_channels, last.out_channels, 1, plan.num_classes))
    return replace(plan, blocks=tuple(kept))
