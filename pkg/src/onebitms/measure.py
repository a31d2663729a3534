"""Gaussian measurement ensembles, one-bit quantization, and sign metrics.

A measurement ensemble is an m x D matrix of i.i.d. standard normal entries.
Quantizing a signal keeps only the signs of the linear measurements, so the
entry scale is irrelevant and standard normal entries are used throughout.
Three distances live here: the Hamming distance between bit patterns, the
normalized sign disagreement between two signals under a fixed ensemble, and
the normalized geodesic distance on the sphere (antipodes at distance 1).
"""

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionError,
    EmptyInputError,
    FormatError,
)
from .rng import rng_for
from .validation import as_bits, as_matrix, as_nonzero_vector, as_vector

ENSEMBLE_MAGIC = b"OMSA"


@dataclass(frozen=True)
class MeasurementEnsemble:
    """An m x D matrix of i.i.d. standard normal rows, reproducible from seed."""

    m: int
    D: int
    seed: int
    A: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=np.float64)
        if A.shape != (self.m, self.D):
            raise DimensionError(
                f"matrix shape {A.shape} does not match (m, D)=({self.m}, {self.D})"
            )
        if not np.all(np.isfinite(A)):
            raise DegenerateInputError("ensemble matrix contains non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @classmethod
    def generate(cls, m, D, seed):
        """Draw a fresh ensemble. Same (m, D, seed) reproduces A bit-for-bit."""
        if m < 1 or D < 1:
            raise DimensionError("m and D must be positive")
        A = rng_for(seed, "ensemble", m, D).standard_normal((m, D))
        return cls(m=int(m), D=int(D), seed=int(seed), A=A)


def quantize(ensemble, x):
    """One-bit measurements of ``x``: entrywise sign of the matrix product.

    sign(0) is taken as +1 so that the output is always over {-1, +1}.
    """
    x = as_vector(x, dim=ensemble.D, name="signal")
    return _signs(ensemble.A @ x)


def quantize_rows(ensemble, X):
    """Quantize every row of an (n, D) array at once; returns (n, m) int8."""
    X = as_matrix(X, name="signals")
    if X.shape[1] != ensemble.D:
        raise DimensionError(
            f"signals have dimension {X.shape[1]}, ensemble expects {ensemble.D}"
        )
    return _signs(X @ ensemble.A.T)


def _signs(values):
    return np.where(values >= 0.0, 1, -1).astype(np.int8)


def hamming_distance(y1, y2):
    """Number of positions at which two bit patterns differ."""
    b1 = as_bits(y1)
    b2 = as_bits(y2, length=b1.shape[0], name="second bit pattern")
    return int(np.count_nonzero(b1 != b2))


def measurement_distance(ensemble, z1, z2):
    """Fraction of measurements whose signs disagree between two signals.

    Invariant under positive rescaling of either argument; a pseudometric.
    """
    z1 = as_nonzero_vector(z1, dim=ensemble.D, name="first signal")
    z2 = as_nonzero_vector(z2, dim=ensemble.D, name="second signal")
    return hamming_distance(quantize(ensemble, z1), quantize(ensemble, z2)) / ensemble.m


def geodesic_distance(z1, z2):
    """Angle between the directions of two nonzero vectors, normalized by pi.

    Antipodal directions are at distance 1. The cosine is clamped to [-1, 1]
    before the arccos to absorb floating-point drift at the endpoints.
    """
    z1 = as_nonzero_vector(z1, name="first vector")
    z2 = as_nonzero_vector(z2, len(z1), name="second vector")
    cos = np.dot(z1, z2) / (np.linalg.norm(z1) * np.linalg.norm(z2))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)) / np.pi)


def tessellation_uniformity(ensemble, points, pairs, seed=0):
    """Empirical uniformity defect of the hyperplane tessellation over a cloud.

    Samples ``pairs`` ordered index pairs from the cloud (deterministically in
    ``seed``) and returns the largest observed gap between the sign-based
    distance and the normalized geodesic distance. Smaller values mean the m
    hyperplanes separate the cloud more uniformly.
    """
    data = as_matrix(points.data if hasattr(points, "data") else points, name="points")
    n = data.shape[0]
    if n < 1:
        raise EmptyInputError("point cloud is empty")
    if data.shape[1] != ensemble.D:
        raise DimensionError(
            f"points have dimension {data.shape[1]}, ensemble expects {ensemble.D}"
        )
    if pairs < 1:
        raise DimensionError("pairs must be at least 1")
    norms = np.linalg.norm(data, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("point cloud contains a zero vector")

    bits = quantize_rows(ensemble, data).astype(np.int32)
    unit = data / norms[:, None]

    rng = rng_for(seed, "pairs", ensemble.seed, n)
    idx1 = rng.integers(0, n, size=pairs)
    idx2 = rng.integers(0, n, size=pairs)

    # d_H = (m - <b_i, b_j>) / 2 for +-1 patterns.
    agree = np.einsum("ij,ij->i", bits[idx1], bits[idx2])
    d_a = (ensemble.m - agree) / (2.0 * ensemble.m)
    cos = np.clip(np.einsum("ij,ij->i", unit[idx1], unit[idx2]), -1.0, 1.0)
    d_g = np.arccos(cos) / np.pi
    return float(np.max(np.abs(d_a - d_g)))


def save_ensemble(ensemble, path):
    """Write an ensemble to its binary file format.

    Layout: magic "OMSA", little-endian u32 m, u32 D, u64 seed, then the
    m*D matrix entries as little-endian f64, row-major.
    """
    with open(path, "wb") as fh:
        fh.write(ENSEMBLE_MAGIC)
        fh.write(struct.pack("<IIQ", ensemble.m, ensemble.D, ensemble.seed))
        fh.write(ensemble.A.astype("<f8").tobytes(order="C"))


def load_ensemble(path):
    """Read an ensemble written by :func:`save_ensemble`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    buf = io.BytesIO(raw)
    magic = buf.read(4)
    if magic != ENSEMBLE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {ENSEMBLE_MAGIC!r}", offset=0)
    header = buf.read(16)
    if len(header) != 16:
        raise FormatError("truncated header", offset=4)
    m, D, seed = struct.unpack("<IIQ", header)
    expected = m * D * 8
    body = buf.read(expected)
    if len(body) != expected:
        raise FormatError(
            f"truncated matrix: expected {expected} bytes, found {len(body)}",
            offset=20 + len(body),
        )
    A = np.frombuffer(body, dtype="<f8").reshape(m, D).astype(np.float64)
    return MeasurementEnsemble(m=m, D=D, seed=seed, A=A)
