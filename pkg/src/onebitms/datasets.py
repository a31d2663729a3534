"""Dataset synthesis, ingestion, and point-cloud file I/O."""

import io
import struct
import warnings
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError
from .gmra import PointCloud
from .rng import rng_for

CLOUD_MAGIC = b"OMSP"
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def sample_sphere(d, D, n, seed):
    """n points uniform on the d-sphere occupying coordinates 1..d+1 of R^D.

    Rows are exactly unit norm with zeros beyond coordinate d+1; d=0 gives
    points in {+-e1}. Deterministic in the seed.
    """
    if d < 0 or d >= D:
        raise DomainError(f"need 0 <= d < D, got d={d}, D={D}")
    if n < 1:
        raise DomainError("n must be positive")
    rng = rng_for(seed, "data", d, D, n)
    raw = rng.standard_normal((n, d + 1))
    norms = np.linalg.norm(raw, axis=1)
    degenerate = norms == 0.0
    if np.any(degenerate):
        raw[degenerate, 0] = 1.0
        norms[degenerate] = 1.0
    data = np.zeros((n, D))
    data[:, : d + 1] = raw / norms[:, None]
    return PointCloud(data=data, normalized=True)


def save_cloud(cloud, path):
    """Write a point cloud: magic "OMSP", u32 n, u32 D, then n*D f64 row-major."""
    data = cloud.data if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(CLOUD_MAGIC)
        fh.write(struct.pack("<II", data.shape[0], data.shape[1]))
        fh.write(data.astype("<f8").tobytes(order="C"))


def load_cloud(path):
    """Read a point cloud written by :func:`save_cloud`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    buf = io.BytesIO(raw)
    magic = buf.read(4)
    if magic != CLOUD_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CLOUD_MAGIC!r}", offset=0)
    header = buf.read(8)
    if len(header) != 8:
        raise FormatError("truncated header", offset=4)
    n, D = struct.unpack("<II", header)
    body = buf.read(n * D * 8)
    if len(body) != n * D * 8:
        raise FormatError(
            f"truncated data: expected {n * D * 8} bytes, found {len(body)}",
            offset=12 + len(body),
        )
    data = np.frombuffer(body, dtype="<f8").reshape(n, D).astype(np.float64)
    norms = np.linalg.norm(data, axis=1) if n else np.array([])
    normalized = bool(n and np.max(np.abs(norms - 1.0)) <= 1e-9)
    return PointCloud(data=data, normalized=normalized)


def _read_be_u32(buf, what):
    offset = buf.tell()
    raw = buf.read(4)
    if len(raw) != 4:
        raise FormatError(f"truncated {what}", offset=offset)
    return struct.unpack(">I", raw)[0], offset


def parse_idx_images(raw):
    """Decode an IDX image file (big-endian, magic 0x00000803) to (count, rows, cols)."""
    buf = io.BytesIO(raw)
    magic, offset = _read_be_u32(buf, "image magic")
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}",
            offset=offset,
        )
    count, _ = _read_be_u32(buf, "image count")
    rows, _ = _read_be_u32(buf, "row count")
    cols, _ = _read_be_u32(buf, "column count")
    expected = count * rows * cols
    body = buf.read(expected)
    if len(body) != expected:
        raise FormatError(
            f"truncated pixels: expected {expected} bytes, found {len(body)}",
            offset=16 + len(body),
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def parse_idx_labels(raw):
    """Decode an IDX label file (big-endian, magic 0x00000801) to (count,)."""
    buf = io.BytesIO(raw)
    magic, offset = _read_be_u32(buf, "label magic")
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(
            f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}",
            offset=offset,
        )
    count, _ = _read_be_u32(buf, "label count")
    body = buf.read(count)
    if len(body) != count:
        raise FormatError(
            f"truncated labels: expected {count} bytes, found {len(body)}",
            offset=8 + len(body),
        )
    return np.frombuffer(body, dtype=np.uint8)


def _resolve_idx_paths(path, labels_path):
    path = Path(path)
    if path.is_dir():
        images = sorted(p for p in path.iterdir() if "idx3" in p.name)
        labels = sorted(p for p in path.iterdir() if "idx1" in p.name)
        if not images or not labels:
            raise FormatError(f"no idx3/idx1 files found under {path}")
        return images[0], labels[0]
    if labels_path is not None:
        return path, Path(labels_path)
    guess = Path(str(path).replace("idx3", "idx1").replace("images", "labels"))
    if guess == path or not guess.exists():
        raise FormatError(
            f"cannot locate a label file for {path}; pass labels_path explicitly"
        )
    return path, guess


def load_mnist(path, digit, n, normalize=True, labels_path=None):
    """First n images with the given label, flattened and scaled to unit norm.

    ``path`` may be a directory holding the conventional idx3/idx1 pair or
    the image file itself (with ``labels_path`` naming the label file). When
    fewer than n matching images exist the smaller count is returned; an
    absent digit yields an empty cloud plus a warning.
    """
    images_path, lbl_path = _resolve_idx_paths(path, labels_path)
    images = parse_idx_images(Path(images_path).read_bytes())
    labels = parse_idx_labels(Path(lbl_path).read_bytes())
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    selected = np.flatnonzero(labels == digit)[: max(int(n), 0)]
    if selected.shape[0] == 0:
        warnings.warn(f"no images with label {digit}", stacklevel=2)
        dim = images.shape[1] * images.shape[2]
        return PointCloud(data=np.zeros((0, dim)), normalized=normalize)
    flat = images[selected].reshape(selected.shape[0], -1).astype(np.float64)
    if normalize:
        norms = np.linalg.norm(flat, axis=1)
        nonzero = norms > 0.0
        if not np.all(nonzero):
            warnings.warn(
                f"dropped {int(np.count_nonzero(~nonzero))} all-zero images",
                stacklevel=2,
            )
            flat = flat[nonzero]
            norms = norms[nonzero]
        flat = flat / norms[:, None]
    else:
        flat = flat / 255.0
    return PointCloud(data=flat, normalized=normalize)
