"""Layer operations with hand-written backward rules.

All image tensors use the (batch, channels, height, width) layout.
Convolution is cross-correlation computed through an im2col matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import ShapeError, Tensor, record

LEAKY_SLOPE = 0.01


def conv_output_size(extent: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def pool_output_size(extent: int, window: int, stride: int) -> int:
    return (extent - window) // stride + 1


# ----------------------------------------------------------------- parameters


@dataclass
class ConvParams:
    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        o, _, kh, kw = self.weight.shape
        if self.bias.shape != (o,):
            raise ShapeError(f"conv bias shape {self.bias.shape} does not match {o} output channels")
        if self.stride < 1 or self.padding < 0 or self.padding >= max(kh, kw):
            raise ValueError(f"invalid conv stride={self.stride} padding={self.padding} for {kh}x{kw} kernel")


@dataclass
class BatchNormState:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    mode: Literal["train", "eval"] = "train"

    @classmethod
    def create(cls, channels: int, dtype=np.float32, **kw) -> "BatchNormState":
        return cls(
            gamma=Tensor(np.ones(channels, dtype), requires_grad=True),
            beta=Tensor(np.zeros(channels, dtype), requires_grad=True),
            running_mean=np.zeros(channels, dtype),
            running_var=np.ones(channels, dtype),
            **kw,
        )


@dataclass(frozen=True)
class PoolSpec:
    kind: Literal["max", "average"] = "max"
    window: int = 2
    stride: int = 2

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ValueError(f"pool window and stride must be >= 1: {self}")
        if self.kind not in ("max", "average"):
            raise ValueError(f"unknown pool kind {self.kind!r}")


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, slope: float = LEAKY_SLOPE,
                    dtype=np.float32) -> np.ndarray:
    gain = np.sqrt(2.0 / (1.0 + slope ** 2))
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_conv(rng, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1, padding: int | None = None,
              dtype=np.float32) -> ConvParams:
    if padding is None:
        padding = kernel // 2
    w = kaiming_uniform(rng, (out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel, dtype=dtype)
    return ConvParams(Tensor(w, requires_grad=True), Tensor(np.zeros(out_ch, dtype), requires_grad=True),
                      stride, padding)


def init_linear(rng, in_f: int, out_f: int, dtype=np.float32) -> tuple[Tensor, Tensor]:
    w = kaiming_uniform(rng, (out_f, in_f), in_f, dtype=dtype)
    return Tensor(w, requires_grad=True), Tensor(np.zeros(out_f, dtype), requires_grad=True)


# ---------------------------------------------------------------- convolution


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    # rows ordered (n, ho, wo); columns ordered (c, kh, kw) to match weight.reshape(O, -1)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def _col2im(cols: np.ndarray, padded_shape, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = padded_shape[:2]
    cols = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return out


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    w, b = p.weight, p.bias
    if x.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input, got {x.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if c != ci:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {ci}")
    s, pad = p.stride, p.padding
    if h + 2 * pad < kh or wd + 2 * pad < kw:
        raise ShapeError(f"conv2d: {kh}x{kw} window larger than padded input {h}x{wd} (pad {pad})")
    ho, wo = conv_output_size(h, kh, s, pad), conv_output_size(wd, kw, s, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, kh, kw, s)
    wmat = w.data.reshape(o, -1)
    out = cols @ wmat.T + b.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def rule(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (gmat.T @ cols).reshape(w.shape) if w.requires_grad else None
        gb = gmat.sum(axis=0) if b.requires_grad else None
        gx = None
        if x.requires_grad and s == 1:
            # stride 1: input gradient is a full correlation of g with the flipped kernel
            q = kh - 1 - pad, kw - 1 - pad
            gp = np.pad(g, ((0, 0), (0, 0), (q[0], q[0]), (q[1], q[1])))
            wflip = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, -1)
            gx = (_im2col(gp, kh, kw, 1) @ wflip.T).reshape(n, h, wd, c).transpose(0, 3, 1, 2)
            gx = np.ascontiguousarray(gx)
        elif x.requires_grad:
            gxp = _col2im(gmat @ wmat, xp.shape, kh, kw, s, ho, wo)
            gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
            gx = np.ascontiguousarray(gx)
        return gx, gw, gb

    return record("conv2d", np.ascontiguousarray(out), (x, w, b), rule)


# -------------------------------------------------------------------- pooling


def pool2d(x: Tensor, spec: PoolSpec) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"pool2d: expected 4-D input, got {x.shape}")
    n, c, h, wd = x.shape
    k, s = spec.window, spec.stride
    if h < k or wd < k:
        raise ShapeError(f"pool2d: window {k} exceeds input extent {h}x{wd}")
    ho, wo = pool_output_size(h, k, s), pool_output_size(wd, k, s)
    win = sliding_window_view(x.data, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    flat = win.reshape(n, c, ho, wo, k * k)

    if spec.kind == "max":
        arg = flat.argmax(axis=-1)  # first maximal element in row-major window order
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

        def rule(g):
            gx = np.zeros_like(x.data)
            for idx in range(k * k):
                i, j = divmod(idx, k)
                gx[:, :, i:i + s * ho:s, j:j + s * wo:s] += np.where(arg == idx, g, 0)
            return (gx,)
    else:
        out = flat.mean(axis=-1)

        def rule(g):
            gx = np.zeros_like(x.data)
            share = g / (k * k)
            for i in range(k):
                for j in range(k):
                    gx[:, :, i:i + s * ho:s, j:j + s * wo:s] += share
            return (gx,)

    return record(f"{spec.kind}_pool2d", np.ascontiguousarray(out, dtype=x.dtype), (x,), rule)


def max_pool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    return pool2d(x, PoolSpec("max", window, stride))


def _bins(extent: int, out: int) -> list[tuple[int, int]]:
    return [((i * extent) // out, -((-(i + 1) * extent) // out)) for i in range(out)]


def adaptive_avg_pool2d(x: Tensor, size: int) -> Tensor:
    """Average over ``size`` x ``size`` bins with floor/ceil boundaries."""
    n, c, h, wd = x.shape
    if h == size and wd == size:
        return x
    if h % size == 0 and wd % size == 0:
        fh, fw = h // size, wd // size
        out = x.data.reshape(n, c, size, fh, size, fw).mean(axis=(3, 5))

        def rule(g):
            gx = np.broadcast_to(g[:, :, :, None, :, None] / (fh * fw), (n, c, size, fh, size, fw))
            return (np.ascontiguousarray(gx.reshape(x.shape)),)

        return record("adaptive_avg_pool2d", out.astype(x.dtype), (x,), rule)

    rows, cols = _bins(h, size), _bins(wd, size)
    out = np.empty((n, c, size, size), dtype=x.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, :, i, j] = x.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def rule(g):
        gx = np.zeros_like(x.data)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                gx[:, :, r0:r1, c0:c1] += (g[:, :, i, j] / ((r1 - r0) * (c1 - c0)))[:, :, None, None]
        return (gx,)

    return record("adaptive_avg_pool2d", out, (x,), rule)


def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, wd = x.shape
    out = x.data.mean(axis=(2, 3))

    def rule(g):
        return (np.ascontiguousarray(np.broadcast_to(g[:, :, None, None] / (h * wd), x.shape)),)

    return record("global_avg_pool", out.astype(x.dtype), (x,), rule)


# -------------------------------------------------------------- normalization


def batch_norm(x: Tensor, st: BatchNormState) -> Tensor:
    if x.ndim != 4 or x.shape[1] != st.gamma.shape[0]:
        raise ShapeError(f"batch_norm: input {x.shape} does not match {st.gamma.shape[0]} channels")
    gamma, beta = st.gamma, st.beta
    n, c, h, wd = x.shape
    m = n * h * wd
    axes = (0, 2, 3)
    g4 = gamma.data.reshape(1, c, 1, 1)

    if st.mode == "eval":
        inv = 1.0 / np.sqrt(st.running_var + st.eps)
        xhat = (x.data - st.running_mean.reshape(1, c, 1, 1)) * inv.reshape(1, c, 1, 1)
        out = xhat * g4 + beta.data.reshape(1, c, 1, 1)

        def rule(g):
            gx = g * (g4 * inv.reshape(1, c, 1, 1))
            return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        return record("batch_norm_eval", out.astype(x.dtype), (x, gamma, beta), rule)

    if m < 2:
        raise ValueError("batch_norm: train mode needs at least 2 values per channel")
    mu = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv = (1.0 / np.sqrt(var + st.eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv.reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)
    mom = st.momentum
    st.running_mean = ((1 - mom) * st.running_mean + mom * mu).astype(st.running_mean.dtype)
    st.running_var = ((1 - mom) * st.running_var + mom * var * (m / (m - 1))).astype(st.running_var.dtype)

    def rule(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * g4
        gx = (inv.reshape(1, c, 1, 1) / m) * (
            m * gxhat
            - gxhat.sum(axis=axes, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
        )
        return gx, ggamma, gbeta

    return record("batch_norm", out.astype(x.dtype), (x, gamma, beta), rule)


# --------------------------------------------------------------- elementwise


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in [0, 1), got {slope}")
    pos = x.data >= 0
    s = x.dtype.type(slope)
    out = np.where(pos, x.data, x.data * s)
    return record("leaky_relu", out, (x,), lambda g: (np.where(pos, g, g * s),))


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity (and no RNG draw) when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    scale = x.dtype.type(1.0 / (1.0 - rate))
    mask = keep.astype(x.dtype) * scale
    return record("dropout", x.data * mask, (x,), lambda g: (g * mask,))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias {bias.shape} does not match {weight.shape[0]} outputs")
        out = out + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def rule(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return record("linear", out, inputs, rule)


# --------------------------------------------------------------------- losses


def _log_softmax_np(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z: Tensor) -> Tensor:
    if z.ndim != 2:
        raise ShapeError(f"softmax: expected [batch, classes], got {z.shape}")
    p = np.exp(_log_softmax_np(z.data))

    def rule(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return record("softmax", p, (z,), rule)


def log_softmax(z: Tensor) -> Tensor:
    if z.ndim != 2:
        raise ShapeError(f"log_softmax: expected [batch, classes], got {z.shape}")
    ls = _log_softmax_np(z.data)
    p = np.exp(ls)
    return record("log_softmax", ls, (z,), lambda g: (g - p * g.sum(axis=1, keepdims=True),))


def check_onehot(y: np.ndarray, num_classes: int | None = None) -> None:
    y = np.asarray(y)
    if y.ndim != 2 or (num_classes is not None and y.shape[1] != num_classes):
        raise ShapeError(f"label matrix shape {y.shape} does not match [batch, {num_classes}]")
    ok = np.isin(y, (0, 1)).all(axis=1) & (y.sum(axis=1) == 1)
    if not ok.all():
        raise ValueError(f"label matrix row {int(np.argmin(ok))} is not one-hot")


def cross_entropy(logits: Tensor, y_onehot: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the labelled class."""
    check_onehot(y_onehot, logits.shape[1])
    n = logits.shape[0]
    ls = _log_softmax_np(logits.data)
    y = y_onehot.astype(logits.dtype)
    loss = np.asarray(-(ls * y).sum() / n, dtype=logits.dtype)
    p = np.exp(ls)
    return record("cross_entropy", loss, (logits,), lambda g: ((p - y) * (g / n),))


def frobenius_onehot(logits: Tensor, y_onehot: np.ndarray) -> Tensor:
    """Squared Frobenius distance between softmax predictions and one-hot labels, per sample."""
    check_onehot(y_onehot, logits.shape[1])
    n = logits.shape[0]
    p = np.exp(_log_softmax_np(logits.data))
    y = y_onehot.astype(logits.dtype)
    r = p - y
    loss = np.asarray((r * r).sum() / n, dtype=logits.dtype)

    def rule(g):
        gp = 2.0 * r * (g / n)
        return (p * (gp - (gp * p).sum(axis=1, keepdims=True)),)

    return record("frobenius_onehot", loss, (logits,), rule)
