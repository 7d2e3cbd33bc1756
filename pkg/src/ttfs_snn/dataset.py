"""MNIST IDX ingestion and preprocessing.

Images are kept as ``uint8`` arrays of shape ``(count, rows, cols)``; the
network consumes the central 20x20 window flattened to 400 inputs.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
I_MAX = 255
CROP_BORDER = 4
DATA_DIR_ENV = "TTFS_SNN_DATA"

# Known filename spellings for the four MNIST files.
_SPLIT_FILES = {
    "train": (
        ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
        ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
    ),
    "test": (
        ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
        ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
    ),
}


class IdxParseError(ValueError):
    """Malformed IDX container. ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, H, W) uint8
    labels: np.ndarray  # (N,) int64
    i_max: int = I_MAX

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ValueError("labels must lie in [0, 9]")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int | None = None, start: int = 0) -> "LabeledDataset":
        stop = None if n is None else start + n
        return LabeledDataset(self.images[start:stop], self.labels[start:stop], self.i_max)

    @property
    def flat(self) -> np.ndarray:
        """Pixels as ``(N, H*W)`` for the input layer."""
        return self.images.reshape(len(self.images), -1)


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _header(buf: bytes, n_fields: int) -> tuple[int, ...]:
    need = 4 * n_fields
    if len(buf) < need:
        raise IdxParseError(
            f"header needs {need} bytes, file has {len(buf)}", len(buf)
        )
    return struct.unpack(f">{n_fields}I", buf[:need])


def parse_idx_images(buf: bytes) -> np.ndarray:
    magic, count, rows, cols = _header(buf, 4)
    if magic != IMAGE_MAGIC:
        raise IdxParseError(f"bad image magic 0x{magic:08x}", 0)
    if rows == 0 or cols == 0:
        raise IdxParseError(f"degenerate image dimensions {rows}x{cols}", 8)
    payload = count * rows * cols
    if len(buf) - 16 < payload:
        raise IdxParseError(
            f"truncated payload: expected {payload} pixel bytes, got {len(buf) - 16}",
            len(buf),
        )
    if len(buf) - 16 > payload:
        raise IdxParseError("trailing bytes after image payload", 16 + payload)
    return np.frombuffer(buf, dtype=np.uint8, count=payload, offset=16).reshape(
        count, rows, cols
    ).copy()


def parse_idx_labels(buf: bytes) -> np.ndarray:
    magic, count = _header(buf, 2)
    if magic != LABEL_MAGIC:
        raise IdxParseError(f"bad label magic 0x{magic:08x}", 0)
    if len(buf) - 8 < count:
        raise IdxParseError(
            f"truncated payload: expected {count} labels, got {len(buf) - 8}", len(buf)
        )
    if len(buf) - 8 > count:
        raise IdxParseError("trailing bytes after label payload", 8 + count)
    labels = np.frombuffer(buf, dtype=np.uint8, count=count, offset=8)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise IdxParseError(f"label {labels[bad[0]]} out of range [0, 9]", 8 + int(bad[0]))
    return labels.astype(np.int64)


def load_idx_images(path) -> np.ndarray:
    """Read an IDX3 unsigned-byte image file (optionally gzipped)."""
    return parse_idx_images(_read_bytes(path))


def load_idx_labels(path) -> np.ndarray:
    """Read an IDX1 unsigned-byte label file (optionally gzipped)."""
    return parse_idx_labels(_read_bytes(path))


def crop_center(image: np.ndarray, border: int = CROP_BORDER) -> np.ndarray:
    """Drop a ``border``-pixel frame from a 28x28 image (or a stack of them)."""
    image = np.asarray(image)
    if image.shape[-2:] != (28, 28):
        raise ValueError(f"expected 28x28 image(s), got shape {image.shape}")
    return image[..., border : 28 - border, border : 28 - border].copy()


def find_split(data_dir, split: str) -> tuple[Path, Path]:
    data_dir = Path(data_dir)
    found = []
    for names in _SPLIT_FILES[split]:
        for stem in names:
            hit = next(
                (data_dir / (stem + ext) for ext in ("", ".gz") if (data_dir / (stem + ext)).exists()),
                None,
            )
            if hit is not None:
                found.append(hit)
                break
        else:
            raise FileNotFoundError(f"no {names[0]}[.gz] under {data_dir}")
    return found[0], found[1]


def load_mnist(data_dir=None, split: str = "train", crop: bool = True) -> LabeledDataset:
    """Load one MNIST split from ``data_dir`` (default: ``$TTFS_SNN_DATA``)."""
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV)
        if not data_dir:
            raise FileNotFoundError(
                f"no MNIST directory given and ${DATA_DIR_ENV} is not set"
            )
    img_path, lbl_path = find_split(data_dir, split)
    images = load_idx_images(img_path)
    labels = load_idx_labels(lbl_path)
    if crop:
        images = crop_center(images)
    return LabeledDataset(images, labels)
