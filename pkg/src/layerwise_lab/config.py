"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment.  Values are numbers, quoted or
bare strings, ``true``/``false``/``none``, or bracketed lists::

    model = ResNet18_r4
    hierarchy = [1,1,2,2]
    block_kind = residual
    dataset = cifar10:/data/cifar-10-batches-bin
    lr = 3e-4
    dr = 0.3
    seeds = [0,1,2,3,4]
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .architecture import parse_hierarchy
from .training import LOSS_KINDS, MODES


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


REQUIRED = ("hierarchy", "dataset", "lr", "dr")


@dataclass
class RunConfig:
    hierarchy: str
    dataset: str  # "synth", "cifar10:PATH" or "cifar100:PATH"
    lr: float
    dr: float
    model: str = "net"
    block_kind: str = "residual"
    channels: list[int] | None = None
    width: int = 16
    epochs: int = 30
    batch_size: int = 128
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    modes: list[str] = field(default_factory=lambda: ["layerwise_concurrent", "global"])
    local_loss: str = "cross_entropy"
    shallow_depth: int | None = None
    pool_position: str = "post"
    aux_pool: int = 4
    aux_hidden: int | None = None
    greedy_epochs: int | None = None
    predsim_alpha: float = 0.0
    n_train: int = 2000
    n_test: int = 1000
    resolution: int = 8
    data_seed: int = 0
    synth_classes: int = 4
    synth_spread: float = 0.05
    eval_train: bool = False
    out: str = "runs"
    defaulted: list[str] = field(default_factory=list, repr=False, compare=False)

    @property
    def stage_convs(self) -> list[int]:
        return parse_hierarchy(self.hierarchy)

    @property
    def stage_channels(self) -> list[int]:
        if self.channels is not None:
            return list(self.channels)
        return [self.width * 2 ** i for i in range(len(self.stage_convs))]

    @property
    def dataset_kind(self) -> str:
        return self.dataset.split(":", 1)[0]

    @property
    def dataset_path(self) -> str | None:
        return self.dataset.split(":", 1)[1] if ":" in self.dataset else None

    @property
    def num_classes(self) -> int:
        return {"synth": self.synth_classes, "cifar10": 10, "cifar100": 100}[self.dataset_kind]

    def provenance(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "defaulted":
                continue
            tag = "  # default" if f.name in self.defaulted else ""
            lines.append(f"{f.name} = {_render(getattr(self, f.name))}{tag}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig) if f.name != "defaulted"}
_INT_LISTS = {"channels", "seeds"}
_FLOATS = {"lr", "dr", "predsim_alpha", "synth_spread"}
_INTS = {"width", "epochs", "batch_size", "shallow_depth", "aux_pool", "aux_hidden", "greedy_epochs",
         "n_train", "n_test", "resolution", "data_seed", "synth_classes"}


def _render(v: Any) -> str:
    if isinstance(v, list):
        return "[" + ",".join(str(x) for x in v) + "]"
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse_value(raw: str) -> Any:
    s = raw.strip()
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    if s.startswith("[") and s.endswith("]"):
        inner = s[1:-1].strip()
        return [] if not inner else [_parse_value(p) for p in inner.split(",")]
    try:
        return ast.literal_eval(s)
    except (ValueError, SyntaxError):
        return s


def _coerce(key: str, value: Any, line: int | None):
    try:
        if key == "hierarchy":
            text = value if isinstance(value, str) else "[" + ",".join(str(v) for v in value) + "]"
            parse_hierarchy(text)
            return text.replace(" ", "")
        if key in _INT_LISTS:
            if value is None and key == "channels":
                return None
            if isinstance(value, int):
                value = [value]
            if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
                raise ConfigError(f"{key} must be a list of integers", line, key)
            return list(value)
        if key == "modes":
            value = [value] if isinstance(value, str) else value
            if not isinstance(value, list) or not value:
                raise ConfigError("modes must be a non-empty list", line, key)
            return [str(v) for v in value]
        if key in _FLOATS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number", line, key)
            return float(value)
        if key in _INTS:
            if value is None and _FIELDS[key].default is None:
                return None
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer", line, key)
            return value
        if key == "eval_train":
            if not isinstance(value, bool):
                raise ConfigError("eval_train must be true or false", line, key)
            return value
        return str(value)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e), line, key) from e


def validate(cfg: RunConfig, lines: dict[str, int] | None = None) -> RunConfig:
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(msg, lines.get(key), key)

    if cfg.lr <= 0:
        fail("lr", f"lr must be > 0, got {cfg.lr}")
    if not 0 <= cfg.dr < 1:
        fail("dr", f"dr must be in [0, 1), got {cfg.dr}")
    if not cfg.seeds:
        fail("seeds", "seed list must be non-empty")
    for m in cfg.modes:
        if m not in MODES:
            fail("modes", f"unknown mode {m!r}; choose from {', '.join(MODES)}")
    if cfg.local_loss not in LOSS_KINDS:
        fail("local_loss", f"unknown local loss {cfg.local_loss!r}")
    if cfg.block_kind not in ("plain", "residual"):
        fail("block_kind", f"block_kind must be plain or residual, got {cfg.block_kind!r}")
    if cfg.pool_position not in ("post", "pre"):
        fail("pool_position", f"pool_position must be post or pre, got {cfg.pool_position!r}")
    if cfg.dataset_kind not in ("synth", "cifar10", "cifar100"):
        fail("dataset", f"dataset must be synth, cifar10:PATH or cifar100:PATH, got {cfg.dataset!r}")
    if cfg.dataset_kind != "synth" and not cfg.dataset_path:
        fail("dataset", f"{cfg.dataset_kind} needs a path, e.g. {cfg.dataset_kind}:/data/dir")
    if cfg.channels is not None and len(cfg.channels) != len(cfg.stage_convs):
        fail("channels", f"{len(cfg.channels)} widths for {len(cfg.stage_convs)} stages")
    for key in ("epochs", "batch_size", "width", "resolution", "aux_pool", "n_train", "n_test"):
        if getattr(cfg, key) < 1:
            fail(key, f"{key} must be positive")
    return cfg


def parse_config(text: str) -> RunConfig:
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", no, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", no, key)
        values[key] = _coerce(key, _parse_value(val), no)
        lines[key] = no
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}", key=missing[0])
    cfg = RunConfig(**values)
    cfg.defaulted = [k for k in _FIELDS if k not in values]
    return validate(cfg, lines)


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())
