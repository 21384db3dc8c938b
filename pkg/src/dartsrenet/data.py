"""Dataset ingestion, splits, normalization, and training augmentation.

Two on-disk formats are understood:

* CIFAR-10 public binary release: per record 1 label byte + 3072 image
  bytes (1024 red, 1024 green, 1024 blue, each row-major 32x32); five
  train files plus one test file of 10,000 records each.
* DRIM raw container (converted corpora such as SVHN): header magic
  b"DRIM", u32 LE item count, u8 channels, u8 height, u8 width, then per
  item one label byte followed by channels*height*width pixel bytes.

Augmentation (training only): horizontal flip with p=0.5, then zero-pad 4
and crop a random window of the original size, then cut out a square at a
uniform center (clipped at borders, overlap zeroed).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"
_CIFAR_RECORD = 3073
_CIFAR_IMG = (3, 32, 32)

DRIM_MAGIC = b"DRIM"


class DataError(Exception):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, 3, 32, 32) uint8
    labels: np.ndarray  # (N,) int64
    split: str

    def __post_init__(self):
        if len(self.images) != len(self.labels) or len(self.images) == 0:
            raise DataError("dataset must be non-empty with matching images/labels")
        if self.images.dtype != np.uint8:
            raise DataError("images must be uint8")
        if self.labels.min() < 0 or self.labels.max() >= 10:
            raise DataError("labels must lie in [0, 10)")

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices: np.ndarray, split: str | None = None) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices], split or self.split)


# --------------------------------------------------------------------------
# CIFAR-10 binary format
# --------------------------------------------------------------------------


def _read_cifar_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    if raw.size % _CIFAR_RECORD != 0:
        offset = (raw.size // _CIFAR_RECORD) * _CIFAR_RECORD
        raise DataError(f"{path.name}: truncated record at byte offset {offset} "
                        f"(file size {raw.size} not a multiple of {_CIFAR_RECORD})")
    records = raw.reshape(-1, _CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() >= 10:
        bad = int(np.argmax(labels >= 10))
        raise DataError(f"{path.name}: label {labels[bad]} out of range in record {bad}")
    images = records[:, 1:].reshape(-1, *_CIFAR_IMG)
    return images.copy(), labels


def load_cifar10(root) -> tuple[Dataset, Dataset]:
    """Load the 5+1 binary batch files under ``root``; 50,000/10,000 items."""
    root = Path(root)
    train_imgs, train_labels = [], []
    for name in CIFAR_TRAIN_FILES:
        path = root / name
        if not path.exists():
            raise DataError(f"missing CIFAR-10 file {path}")
        imgs, labels = _read_cifar_file(path)
        train_imgs.append(imgs)
        train_labels.append(labels)
    test_path = root / CIFAR_TEST_FILE
    if not test_path.exists():
        raise DataError(f"missing CIFAR-10 file {test_path}")
    test_imgs, test_labels = _read_cifar_file(test_path)
    train = Dataset(np.concatenate(train_imgs), np.concatenate(train_labels), "train")
    test = Dataset(test_imgs, test_labels, "test")
    return train, test


def save_cifar10_batch(path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write records in the public binary layout (test/synthesis helper)."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), -1)
    records = np.empty((len(labels), _CIFAR_RECORD), dtype=np.uint8)
    records[:, 0] = np.asarray(labels, dtype=np.uint8)
    records[:, 1:] = images
    Path(path).write_bytes(records.tobytes())


# --------------------------------------------------------------------------
# DRIM raw format
# --------------------------------------------------------------------------


def load_raw(path) -> Dataset:
    """Parse a DRIM container into a dataset."""
    buf = Path(path).read_bytes()
    if buf[:4] != DRIM_MAGIC:
        raise DataError(f"bad magic {buf[:4]!r}, expected {DRIM_MAGIC!r}")
    count, channels, height, width = struct.unpack_from("<IBBB", buf, 4)
    item = 1 + channels * height * width
    body = buf[11:]
    if len(body) != count * item:
        raise DataError(f"count {count} implies {count * item} payload bytes, found {len(body)}")
    records = np.frombuffer(body, dtype=np.uint8).reshape(count, item)
    labels = records[:, 0].astype(np.int64)
    images = records[:, 1:].reshape(count, channels, height, width)
    return Dataset(images.copy(), labels, "raw")


def save_raw(path, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, c, h, w = images.shape
    header = DRIM_MAGIC + struct.pack("<IBBB", n, c, h, w)
    records = np.empty((n, 1 + c * h * w), dtype=np.uint8)
    records[:, 0] = np.asarray(labels, dtype=np.uint8)
    records[:, 1:] = images.reshape(n, -1)
    Path(path).write_bytes(header + records.tobytes())


# --------------------------------------------------------------------------
# Splits
# --------------------------------------------------------------------------


@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray


def make_splits(n: int, mode: str, seed: int, search_fraction: float = 0.5,
                retrain_val_size: int = 5000) -> SplitIndices:
    """Index sets over the training corpus.

    ``search`` splits Train into disjoint halves (gradient steps for the
    weights vs. the architecture parameters).  ``retrain`` keeps almost all
    of Train for gradient steps and carves a held-out validation set used
    only for early stopping.
    """
    if n < 2:
        raise DataError(f"cannot split {n} items")
    perm = np.random.default_rng(seed).permutation(n)
    if mode == "search":
        cut = round(n * search_fraction)
        if cut == 0 or cut == n:
            raise DataError("degenerate search split")
        return SplitIndices(train=np.sort(perm[:cut]), val=np.sort(perm[cut:]))
    if mode == "retrain":
        val_size = min(retrain_val_size, n // 5) or 1
        return SplitIndices(train=np.sort(perm[val_size:]), val=np.sort(perm[:val_size]))
    raise ValueError(f"mode must be 'search' or 'retrain', got {mode!r}")


# --------------------------------------------------------------------------
# Normalization
# --------------------------------------------------------------------------


@dataclass
class NormStats:
    mean: np.ndarray  # (3,)
    std: np.ndarray   # (3,)

    def __post_init__(self):
        if np.any(self.std <= 0):
            raise DataError("per-channel std must be positive")

    def save(self, path) -> None:
        Path(path).write_text(
            "mean " + " ".join(f"{v:.8f}" for v in self.mean) + "\n"
            "std " + " ".join(f"{v:.8f}" for v in self.std) + "\n")

    @classmethod
    def load(cls, path) -> "NormStats":
        lines = Path(path).read_text().splitlines()
        mean = np.array([float(v) for v in lines[0].split()[1:]])
        std = np.array([float(v) for v in lines[1].split()[1:]])
        return cls(mean, std)


def compute_norm_stats(train_images: np.ndarray) -> NormStats:
    """Per-channel mean/std of train pixels scaled to [0,1]; train split only."""
    x = train_images.astype(np.float64) / 255.0
    return NormStats(mean=x.mean(axis=(0, 2, 3)), std=x.std(axis=(0, 2, 3)))


def normalize(images: np.ndarray, stats: NormStats, dtype=np.float32) -> np.ndarray:
    """(x/255 - mean) / std per channel; accepts one image or a batch."""
    x = images.astype(np.float64) / 255.0
    shape = (1, 3, 1, 1) if x.ndim == 4 else (3, 1, 1)
    out = (x - stats.mean.reshape(shape)) / stats.std.reshape(shape)
    return out.astype(dtype)


# --------------------------------------------------------------------------
# Augmentation
# --------------------------------------------------------------------------


@dataclass
class AugmentConfig:
    hflip_prob: float = 0.5
    crop_pad: int = 4
    cutout_size: int = 16


def hflip(image: np.ndarray) -> np.ndarray:
    return image[:, :, ::-1].copy()


def pad_crop(image: np.ndarray, pad: int, offset: tuple[int, int]) -> np.ndarray:
    """Zero-pad by ``pad`` on every side, crop the original size at ``offset``.

    Offset (pad, pad) recovers the original image.
    """
    if pad == 0:
        return image.copy()
    _, h, w = image.shape
    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)))
    oy, ox = offset
    return padded[:, oy:oy + h, ox:ox + w].copy()


def cutout(image: np.ndarray, size: int, center: tuple[int, int]) -> np.ndarray:
    """Zero a size x size square around ``center``, clipped at the borders."""
    if size == 0:
        return image.copy()
    _, h, w = image.shape
    cy, cx = center
    y0, x0 = cy - size // 2, cx - size // 2
    out = image.copy()
    out[:, max(0, y0):min(h, y0 + size), max(0, x0):min(w, x0 + size)] = 0
    return out


def augment(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Flip -> pad+crop -> cutout, with all randomness drawn from ``rng``."""
    _, h, w = image.shape
    out = image
    if rng.random() < config.hflip_prob:
        out = hflip(out)
    if config.crop_pad > 0:
        offset = tuple(rng.integers(0, 2 * config.crop_pad + 1, size=2))
        out = pad_crop(out, config.crop_pad, offset)
    if config.cutout_size > 0:
        center = tuple(rng.integers(0, (h, w)))
        out = cutout(out, config.cutout_size, center)
    return np.ascontiguousarray(out)


def augment_rng(seed: int, worker_id: int, epoch: int, item: int) -> np.random.Generator:
    """Per-item stream: reproducible under any worker count or batch order."""
    return np.random.default_rng(np.random.SeedSequence((seed, worker_id, epoch, item)))


def prepare_batch(dataset: Dataset, indices: np.ndarray, stats: NormStats,
                  augment_config: AugmentConfig | None, seed: int, epoch: int,
                  dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Materialize one batch: optional augmentation, then normalization.

    Evaluation callers pass ``augment_config=None`` and get the clean
    pipeline; training callers get per-item derived rng streams.
    """
    imgs = dataset.images[indices]
    if augment_config is not None:
        imgs = np.stack([
            augment(img, augment_config, augment_rng(seed, 0, epoch, int(idx)))
            for img, idx in zip(imgs, indices)])
    return normalize(imgs, stats, dtype), dataset.labels[indices]


# --------------------------------------------------------------------------
# Synthetic corpus (for environments without the real datasets)
# --------------------------------------------------------------------------


def synthetic_corpus(n: int, seed: int, split: str = "train") -> Dataset:
    """A learnable 10-class stand-in with CIFAR-10 geometry.

    Each class gets a characteristic low-frequency pattern and color bias;
    samples add per-image brightness jitter, spatial shift, and pixel noise.
    Useful for smoke training and demos when the real corpus is absent.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:32, 0:32] / 31.0
    proto = np.random.default_rng(1234)  # class prototypes fixed across splits
    bases = np.empty((10, 3, 32, 32))
    for k in range(10):
        fy, fx = proto.uniform(1.0, 3.5, size=2)
        phase = proto.uniform(0, 2 * np.pi)
        patt = np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
        color = proto.uniform(0.3, 1.0, size=3)
        bases[k] = 127 + 80 * patt[None] * color[:, None, None]
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, 3, 32, 32), dtype=np.uint8)
    for start in range(0, n, 4096):
        idx = slice(start, min(n, start + 4096))
        m = idx.stop - idx.start
        chunk = bases[labels[idx]] + rng.normal(0, 24, size=(m, 3, 32, 32))
        chunk += rng.normal(0, 12, size=(m, 1, 1, 1))
        shifts = rng.integers(-3, 4, size=(m, 2))
        for i in range(m):
            chunk[i] = np.roll(chunk[i], shift=tuple(shifts[i]), axis=(1, 2))
        images[idx] = np.clip(chunk, 0, 255).astype(np.uint8)
    return Dataset(images, labels.astype(np.int64), split)
