"""CIFAR binary ingestion, desk-scale subsets, synthetic blobs and batching."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np

Variant = Literal["cifar10", "cifar100"]

RECORD_BYTES = {"cifar10": 3073, "cifar100": 3074}
NUM_CLASSES = {"cifar10": 10, "cifar100": 100}
TRAIN_FILES = {"cifar10": [f"data_batch_{i}.bin" for i in range(1, 6)], "cifar100": ["train.bin"]}
TEST_FILES = {"cifar10": ["test_batch.bin"], "cifar100": ["test.bin"]}
_PIXELS = 3 * 32 * 32


@dataclass
class ImageDataset:
    images: np.ndarray  # [count, 3, H, W] in [0, 1]
    labels: np.ndarray  # int64 class ids
    num_classes: int
    split: Literal["train", "test"] = "train"
    mean: np.ndarray | None = None  # per-channel, from the training split
    std: np.ndarray | None = None

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[2] != self.images.shape[3]:
            raise ValueError(f"images must be [count, C, H, H], got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def resolution(self) -> int:
        return self.images.shape[2]

    def with_stats(self, mean: np.ndarray, std: np.ndarray) -> "ImageDataset":
        return replace(self, mean=np.asarray(mean, np.float32), std=np.asarray(std, np.float32))

    def normalized(self, idx=None) -> np.ndarray:
        x = self.images if idx is None else self.images[idx]
        if self.mean is None:
            return x
        return ((x - self.mean[None, :, None, None]) / self.std[None, :, None, None]).astype(np.float32)


def channel_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = images.mean(axis=(0, 2, 3), dtype=np.float64)
    std = images.std(axis=(0, 2, 3), dtype=np.float64)
    std = np.where(std > 0, std, 1.0)
    return mean.astype(np.float32), std.astype(np.float32)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.zeros((len(labels), num_classes), dtype=np.float32)
    y[np.arange(len(labels)), labels] = 1.0
    return y


# --------------------------------------------------------------- CIFAR binary


def decode_records(raw: bytes, variant: Variant = "cifar10", label: Literal["fine", "coarse"] = "fine"):
    """Decode concatenated records into uint8 images [n, 3, 32, 32] and labels."""
    rec = RECORD_BYTES[variant]
    if len(raw) % rec:
        raise ValueError(f"truncated {variant} data: {len(raw)} bytes is not a multiple of {rec}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec)
    if variant == "cifar10":
        labels, limit = arr[:, 0], 10
    else:
        labels, limit = (arr[:, 1], 100) if label == "fine" else (arr[:, 0], 20)
    if labels.size and labels.max() >= limit:
        bad = int(np.argmax(labels >= limit))
        raise ValueError(f"record {bad}: label byte {labels[bad]} out of range for {variant}")
    pixels = arr[:, rec - _PIXELS:].reshape(-1, 3, 32, 32)
    return pixels, labels.astype(np.int64)


def encode_records(images_u8: np.ndarray, labels: np.ndarray, variant: Variant = "cifar10",
                   coarse: np.ndarray | None = None) -> bytes:
    n = len(labels)
    if images_u8.shape[1:] != (3, 32, 32):
        raise ValueError(f"CIFAR records hold 3x32x32 images, not {images_u8.shape[1:]}")
    pix = images_u8.reshape(n, _PIXELS).astype(np.uint8)
    if variant == "cifar10":
        head = labels.reshape(n, 1).astype(np.uint8)
    else:
        c = np.zeros(n, np.uint8) if coarse is None else coarse
        head = np.stack([c, labels], axis=1).astype(np.uint8)
    return np.concatenate([head, pix], axis=1).tobytes()


def load_cifar_binary(paths: str | Path | Sequence[str | Path], variant: Variant = "cifar10",
                      split: Literal["train", "test"] = "train") -> ImageDataset:
    """Read one or more record files.  Pixels are scaled to [0, 1]; no statistics are attached."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    parts = [decode_records(Path(p).read_bytes(), variant) for p in paths]
    pixels = np.concatenate([p for p, _ in parts])
    labels = np.concatenate([lab for _, lab in parts])
    images = pixels.astype(np.float32) / np.float32(255.0)
    return ImageDataset(images, labels, NUM_CLASSES[variant], split)


def find_cifar_dir(root: str | Path, variant: Variant = "cifar10") -> Path:
    root = Path(root)
    candidates = [root, root / ("cifar-10-batches-bin" if variant == "cifar10" else "cifar-100-binary")]
    for c in candidates:
        if all((c / f).exists() for f in TRAIN_FILES[variant] + TEST_FILES[variant]):
            return c
    raise FileNotFoundError(f"no {variant} binary files under {root}")


def load_cifar(root: str | Path, variant: Variant = "cifar10") -> tuple[ImageDataset, ImageDataset]:
    """Train and test splits, both carrying the training split's channel statistics."""
    d = find_cifar_dir(root, variant)
    train = load_cifar_binary([d / f for f in TRAIN_FILES[variant]], variant, "train")
    test = load_cifar_binary([d / f for f in TEST_FILES[variant]], variant, "test")
    mean, std = channel_stats(train.images)
    return train.with_stats(mean, std), test.with_stats(mean, std)


def write_cifar_binary(ds: ImageDataset, path: str | Path, variant: Variant = "cifar10") -> None:
    """Serialize a 32x32 dataset in the CIFAR record layout (pixels quantized to bytes)."""
    u8 = np.clip(np.rint(ds.images * 255.0), 0, 255).astype(np.uint8)
    Path(path).write_bytes(encode_records(u8, ds.labels, variant))


# --------------------------------------------------------------- desk subsets


def downscale(images: np.ndarray, resolution: int) -> np.ndarray:
    src = images.shape[2]
    if src == resolution:
        return images
    if src % resolution:
        raise ValueError(f"target resolution {resolution} must divide {src}")
    f = src // resolution
    n, c = images.shape[:2]
    return images.reshape(n, c, resolution, f, resolution, f).mean(axis=(3, 5), dtype=np.float32)


def stratified_indices(labels: np.ndarray, num_classes: int, count: int, rng: np.random.Generator) -> np.ndarray:
    base, extra = divmod(count, num_classes)
    chosen = []
    for c in range(num_classes):
        need = base + (1 if c < extra else 0)
        pool = np.flatnonzero(labels == c)
        if len(pool) < need:
            raise ValueError(f"class {c} has {len(pool)} samples, {need} requested")
        chosen.append(rng.choice(pool, size=need, replace=False))
    return np.sort(np.concatenate(chosen))


def make_desk_subset(train: ImageDataset, test: ImageDataset, n_train: int, n_test: int, resolution: int,
                     seed: int = 0) -> tuple[ImageDataset, ImageDataset]:
    """Class-stratified, area-downscaled copies of both splits; statistics from the train subset."""
    if n_train > len(train) or n_test > len(test):
        raise ValueError(f"requested {n_train}/{n_test} samples from {len(train)}/{len(test)}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
    ti = stratified_indices(train.labels, train.num_classes, n_train, rng)
    vi = stratified_indices(test.labels, test.num_classes, n_test, rng)
    tr = ImageDataset(downscale(train.images[ti], resolution), train.labels[ti], train.num_classes, "train")
    te = ImageDataset(downscale(test.images[vi], resolution), test.labels[vi], test.num_classes, "test")
    mean, std = channel_stats(tr.images)
    return tr.with_stats(mean, std), te.with_stats(mean, std)


# ---------------------------------------------------------- synthetic blobs


def blob_templates(num_classes: int, resolution: int) -> np.ndarray:
    """One smooth bump per class at a class-specific position and colour."""
    yy, xx = np.mgrid[0:resolution, 0:resolution].astype(np.float64) + 0.5
    radius = resolution / 4.0
    sigma = max(resolution / 6.0, 0.5)
    t = np.empty((num_classes, 3, resolution, resolution))
    for c in range(num_classes):
        ang = 2 * math.pi * c / num_classes
        cy = resolution / 2 + radius * math.sin(ang)
        cx = resolution / 2 + radius * math.cos(ang)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        for ch in range(3):
            weight = 0.5 + 0.5 * math.cos(ang + 2 * math.pi * ch / 3)
            t[c, ch] = 0.2 + 0.6 * weight * bump
    return t


def synth_blobs(num_classes: int, per_class: int, resolution: int = 8, spread: float = 0.05,
                seed: int = 0, split: Literal["train", "test"] = "train") -> ImageDataset:
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(11, 0 if split == "train" else 1)))
    templates = blob_templates(num_classes, resolution)
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.standard_normal((len(labels), 3, resolution, resolution)) * spread
    images = np.clip(templates[labels] + noise, 0.0, 1.0).astype(np.float32)
    return ImageDataset(images, labels.astype(np.int64), num_classes, split)


def synth_pair(num_classes: int, per_class: int, resolution: int = 8, spread: float = 0.05, seed: int = 0,
               test_per_class: int | None = None) -> tuple[ImageDataset, ImageDataset]:
    tr = synth_blobs(num_classes, per_class, resolution, spread, seed, "train")
    te = synth_blobs(num_classes, test_per_class or per_class, resolution, spread, seed, "test")
    mean, std = channel_stats(tr.images)
    return tr.with_stats(mean, std), te.with_stats(mean, std)


# ------------------------------------------------------------------ batching


@dataclass(frozen=True)
class BatchPlan:
    seed: int
    batch_size: int = 128

    def permutation(self, count: int, epoch: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(3, epoch)))
        return rng.permutation(count)

    def slices(self, count: int) -> list[slice]:
        if not 1 <= self.batch_size <= count:
            raise ValueError(f"batch size {self.batch_size} must be in [1, {count}]")
        bounds = list(range(0, count, self.batch_size)) + [count]
        # a lone trailing sample would break batch-norm statistics
        if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
            bounds.pop(-2)
        return [slice(a, b) for a, b in zip(bounds, bounds[1:])]


def iterate_batches(ds: ImageDataset, plan: BatchPlan, epoch: int,
                    shuffle: bool = True) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (normalized images, one-hot labels, dataset indices)."""
    order = plan.permutation(len(ds), epoch) if shuffle else np.arange(len(ds))
    for sl in plan.slices(len(ds)):
        idx = order[sl]
        yield ds.normalized(idx), one_hot(ds.labels[idx], ds.num_classes), idx
