"""
MNIST IDX container I/O.

Big-endian header: a 32-bit magic number (0x00000803 for unsigned-byte images
of rank 3, 0x00000801 for unsigned-byte labels of rank 1), one 32-bit size per
dimension, then the raw bytes. Paths ending in `.gz` are read and written
through gzip.
"""

import gzip
import logging
import struct
from pathlib import Path

import numpy as np

from ..errors import IdxFormatError
from .dataset import Dataset

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        # mtime=0 keeps the archive bytes reproducible
        with gzip.GzipFile(path, "wb", mtime=0) as f:
            f.write(payload)
    else:
        path.write_bytes(payload)


def _parse(raw: bytes, magic: int, rank: int, what: str) -> np.ndarray:
    header_size = 4 + 4 * rank
    if len(raw) < 4:
        raise IdxFormatError(f"{what} file is truncated before the magic number", 0)
    (found,) = struct.unpack_from(">i", raw, 0)
    if found != magic:
        raise IdxFormatError(
            f"{what} file has magic 0x{found:08x}, expected 0x{magic:08x}", 0
        )
    if len(raw) < header_size:
        raise IdxFormatError(f"{what} file is truncated inside its header", len(raw))
    dims = struct.unpack_from(f">{rank}i", raw, 4)
    expected = int(np.prod(dims, dtype=np.int64))
    available = len(raw) - header_size
    if available < expected:
        raise IdxFormatError(
            f"{what} file declares {expected} data bytes but holds {available}",
            header_size + available,
        )
    if available > expected:
        raise IdxFormatError(
            f"{what} file has {available - expected} trailing bytes",
            header_size + expected,
        )
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header_size).reshape(dims)


def load_idx(images_path: Path, labels_path: Path) -> Dataset:
    """Parse an image/label IDX pair into a Dataset with pixels scaled into [0, 1]."""
    images = _parse(_read_bytes(images_path), IMAGES_MAGIC, 3, "Image")
    labels = _parse(_read_bytes(labels_path), LABELS_MAGIC, 1, "Label")
    if images.shape[0] != labels.shape[0]:
        # first dimension sits right after the magic
        raise IdxFormatError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} "
            f"holds {labels.shape[0]} labels",
            4,
        )
    if labels.size and labels.max() > 9:
        offset = 8 + int(np.argmax(labels > 9))
        raise IdxFormatError(f"Label {int(labels.max())} is not a digit class", offset)

    n, rows, cols = images.shape
    inputs = images.reshape(n, rows * cols).astype(np.float32) / np.float32(255.0)
    logger.info(f"Loaded {n} samples of {rows}x{cols} from {images_path}")
    return Dataset(inputs, labels.astype(np.int64))


def write_idx(
    dataset: Dataset,
    images_path: Path,
    labels_path: Path,
    image_shape: tuple[int, int] | None = None,
) -> None:
    """
    Inverse of `load_idx`: pixels are multiplied by 255 and rounded to bytes.

    `image_shape` defaults to the square whose area is the input width.
    """
    n, width = dataset.inputs.shape
    if image_shape is None:
        side = int(round(width**0.5))
        if side * side != width:
            raise ValueError(f"Input width {width} is not square; pass image_shape")
        image_shape = (side, side)
    rows, cols = image_shape
    if rows * cols != width:
        raise ValueError(f"Image shape {image_shape} does not cover width {width}")

    pixels = np.clip(np.rint(dataset.inputs.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    _write_bytes(
        images_path, struct.pack(">4i", IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()
    )
    _write_bytes(
        labels_path,
        struct.pack(">2i", LABELS_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes(),
    )
    logger.info(f"Wrote {n} samples to {images_path}")
