"""Multiscale piecewise-affine approximation of a sampled manifold.

Each stored level j partitions the sample into Voronoi cells of the scale-j
cover tree landmarks and fits every cell with its mean and the top-d
principal directions of the centered cell. The resulting family of affine
projectors approximates the underlying manifold at resolution ~2^{-j};
refinement behavior across levels is reported by :func:`audit_gmra` but never
enforced, since it reflects the data rather than the construction.
"""

import io
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .covertree import CoverTree, build_cover_tree
from .errors import (
    DegenerateCellWarning,
    DimensionError,
    DomainError,
    EmptyInputError,
    FormatError,
    ScaleTruncatedWarning,
)
from .validation import as_matrix

GMRA_MAGIC = b"OMSG"
NO_PARENT = 0xFFFFFFFF


@dataclass(frozen=True)
class PointCloud:
    """n sample points in ambient dimension D, optionally unit-normalized."""

    data: np.ndarray = field(repr=False)
    normalized: bool = False

    def __post_init__(self):
        data = np.ascontiguousarray(as_matrix(self.data, name="point cloud"))
        if self.normalized and data.shape[0] > 0:
            norms = np.linalg.norm(data, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise DomainError(
                    "cloud flagged as normalized but rows deviate from unit norm"
                )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def D(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class GmraLevel:
    """Centers, orthonormal bases, and tree structure of one refinement level."""

    j: int
    centers: np.ndarray  # (K, D)
    bases: np.ndarray  # (K, d, D), rows of each basis orthonormal
    parent: np.ndarray | None  # (K,) indices into the previous level, or None
    cell_counts: np.ndarray  # (K,)
    landmarks: np.ndarray | None = None  # (K,) sample indices, build metadata
    cell_of: np.ndarray | None = None  # (n,) training assignment, build metadata
    degenerate: np.ndarray | None = None  # (K,) cells fit from < d+1 points
    flat_spectrum: np.ndarray | None = None  # (K,) ties at the d-th eigenvalue
    residuals: np.ndarray | None = None  # (K,) mean squared fit residual

    @property
    def K(self):
        return self.centers.shape[0]


@dataclass(frozen=True)
class Gmra:
    """Ordered refinement levels sharing one intrinsic dimension d."""

    d: int
    D: int
    levels: tuple
    source: dict = field(default_factory=dict)

    def scales(self):
        return [lvl.j for lvl in self.levels]

    def level(self, j):
        for lvl in self.levels:
            if lvl.j == j:
                return lvl
        raise KeyError(f"level {j} not stored; available: {self.scales()}")


def assign_cells(landmark_points, points):
    """Index of the nearest landmark for every point (ties: lowest index)."""
    landmarks = as_matrix(landmark_points, name="landmarks")
    if landmarks.shape[0] < 1:
        raise EmptyInputError("at least one landmark is required")
    data = as_matrix(points.data if hasattr(points, "data") else points, name="points")
    if data.shape[1] != landmarks.shape[1]:
        raise DimensionError("landmarks and points have different ambient dimensions")
    d2 = (
        np.sum(data * data, axis=1)[:, None]
        - 2.0 * (data @ landmarks.T)
        + np.sum(landmarks * landmarks, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def fit_cell(cell_points, d):
    """Mean, top-d principal directions, and residual of one cell.

    Returns ``(center, basis, residual, degenerate, flat_spectrum)``. The
    residual is the mean squared distance of the cell points to the fitted
    affine space. Cells with fewer than d+1 points cannot determine d
    directions; the basis is padded with ambient axes orthogonal to the
    available directions and the cell is flagged (a DegenerateCellWarning is
    emitted).
    """
    X = as_matrix(cell_points, name="cell points")
    n_c, D = X.shape
    if n_c < 1:
        raise EmptyInputError("cell is empty")
    if d < 1 or d > D:
        raise DomainError(f"intrinsic dimension {d} outside [1, {D}]")

    center = X.mean(axis=0)
    centered = X - center
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:d]

    degenerate = n_c < d + 1
    if basis.shape[0] < d:
        basis = _pad_basis(basis, d, D)
    if degenerate:
        warnings.warn(
            f"cell of {n_c} points cannot determine {d} directions; basis padded",
            DegenerateCellWarning,
            stacklevel=2,
        )

    eigs = svals**2 / n_c
    residual = float(np.sum(eigs[d:]))
    lam_d = eigs[d - 1] if eigs.shape[0] >= d else 0.0
    lam_next = eigs[d] if eigs.shape[0] >= d + 1 else 0.0
    flat = bool(abs(lam_d - lam_next) <= 1e-9)
    return center, basis, residual, degenerate, flat


def _pad_basis(rows, d, D):
    """Complete a partial orthonormal row set to d rows using ambient axes."""
    out = list(rows)
    for axis in range(D):
        if len(out) == d:
            break
        e = np.zeros(D)
        e[axis] = 1.0
        for row in out:
            e -= np.dot(e, row) * row
        norm = np.linalg.norm(e)
        if norm > 0.5:
            out.append(e / norm)
    return np.vstack(out)


def project(level, k, z):
    """Affine projection of ``z`` onto cell k's fitted space; idempotent."""
    K = level.K
    if not 0 <= k < K:
        raise IndexError(f"cell {k} out of range [0, {K})")
    z = np.asarray(z, dtype=np.float64)
    c = level.centers[k]
    phi = level.bases[k]
    return c + phi.T @ (phi @ (z - c))


def nearest_center(level, z):
    """Index of the center closest to ``z`` (ties: lowest index)."""
    z = np.asarray(z, dtype=np.float64)
    d2 = np.sum((level.centers - z) ** 2, axis=1)
    return int(np.argmin(d2))


def nearest_centers(level, X):
    return assign_cells(level.centers, X)


def build_gmra(points, d, j_min=None, j_max=None, tree=None, source=None):
    """Fit the multiscale affine model for a sampled manifold.

    Parameters
    ----------
    points : PointCloud or (n, D) array
        Sample points, expected on or near the unit sphere.
    d : int
        Intrinsic dimension of the model (user supplied).
    j_min, j_max : int, optional
        Range of refinement levels to store. ``j_min`` defaults to the
        coarsest nonnegative scale with at least two landmarks, ``j_max``
        to 10. A ``j_max`` beyond what the sample supports is reduced with a
        ScaleTruncatedWarning.
    tree : CoverTree, optional
        Reuse a prebuilt landmark hierarchy.
    source : dict, optional
        Provenance metadata carried on the result (not serialized).
    """
    cloud = points if isinstance(points, PointCloud) else PointCloud(np.asarray(points))
    data = cloud.data
    if cloud.n < 1:
        raise EmptyInputError("cannot build a model on an empty cloud")
    if d < 1 or d > cloud.D:
        raise DomainError(f"intrinsic dimension {d} outside [1, {cloud.D}]")

    if tree is None:
        tree = build_cover_tree(data)

    if j_max is None:
        j_max = 10
    if j_max > tree.max_scale:
        warnings.warn(
            f"finest requested scale {j_max} unsupported by the sample; "
            f"truncated to {tree.max_scale}",
            ScaleTruncatedWarning,
            stacklevel=2,
        )
        j_max = tree.max_scale
    if j_min is None:
        j_min = _default_j_min(tree)
        j_min = min(j_min, j_max)
    j_min = max(int(j_min), tree.root_scale)
    j_max = int(j_max)
    if j_min > j_max:
        raise DomainError(f"empty level range [{j_min}, {j_max}]")

    levels = []
    prev_landmarks = None
    for j in range(j_min, j_max + 1):
        landmarks = tree.level_landmarks(j)
        landmark_coords = tree.points[landmarks]
        cell_of = assign_cells(landmark_coords, data)
        K = landmarks.shape[0]

        centers = np.empty((K, cloud.D))
        bases = np.empty((K, d, cloud.D))
        counts = np.empty(K, dtype=np.int64)
        degenerate = np.empty(K, dtype=bool)
        flat = np.empty(K, dtype=bool)
        residuals = np.empty(K)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCellWarning)
            for k in range(K):
                members = np.flatnonzero(cell_of == k)
                centers[k], bases[k], residuals[k], degenerate[k], flat[k] = fit_cell(
                    data[members], d
                )
                counts[k] = members.shape[0]
        n_deg = int(np.count_nonzero(degenerate))
        if n_deg:
            warnings.warn(
                f"level {j}: {n_deg} of {K} cells had fewer than {d + 1} points; "
                "their bases were padded",
                DegenerateCellWarning,
                stacklevel=2,
            )
        if np.unique(centers, axis=0).shape[0] != K:
            raise DomainError(f"level {j} produced coincident cell centers")

        parent = None
        if prev_landmarks is not None:
            parent_map = tree.parents.get(j)
            parent = np.empty(K, dtype=np.int64)
            for k, lm in enumerate(landmarks):
                parent_lm = parent_map[int(lm)] if parent_map else int(lm)
                parent[k] = int(np.searchsorted(prev_landmarks, parent_lm))

        levels.append(
            GmraLevel(
                j=j,
                centers=_frozen(centers),
                bases=_frozen(bases),
                parent=_frozen(parent) if parent is not None else None,
                cell_counts=_frozen(counts),
                landmarks=_frozen(np.asarray(landmarks, dtype=np.int64)),
                cell_of=_frozen(cell_of.astype(np.int64)),
                degenerate=_frozen(degenerate),
                flat_spectrum=_frozen(flat),
                residuals=_frozen(residuals),
            )
        )
        prev_landmarks = np.asarray(landmarks)

    return Gmra(d=int(d), D=cloud.D, levels=tuple(levels), source=dict(source or {}))


def _default_j_min(tree):
    for j in range(tree.root_scale, tree.max_scale + 1):
        if tree.levels[j].shape[0] >= 2:
            return max(j, 0)
    return max(tree.max_scale, 0)


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def projection_errors(gmra, points, assignment="center"):
    """Per-level mean distance of each point to its assigned cell's space.

    ``assignment="center"`` assigns each point to its nearest center,
    ``assignment="cell"`` reuses the training Voronoi assignment (build
    clouds only). Returns ``(scales, mean_errors)``.
    """
    X = as_matrix(points.data if hasattr(points, "data") else points, name="points")
    means = []
    for lvl in gmra.levels:
        if assignment == "cell":
            if lvl.cell_of is None or lvl.cell_of.shape[0] != X.shape[0]:
                raise DomainError("training assignment unavailable for these points")
            assign = lvl.cell_of
        else:
            assign = nearest_centers(lvl, X)
        errs = _projection_error_norms(lvl, X, assign)
        means.append(float(np.mean(errs)))
    return np.array(gmra.scales()), np.array(means)


def _projection_error_norms(level, X, assign):
    errs = np.empty(X.shape[0])
    for k in np.unique(assign):
        members = np.flatnonzero(assign == k)
        diff = X[members] - level.centers[k]
        coeff = diff @ level.bases[k].T
        resid = diff - coeff @ level.bases[k]
        errs[members] = np.linalg.norm(resid, axis=1)
    return errs


@dataclass(frozen=True)
class LevelAudit:
    j: int
    K: int
    min_center_separation: float
    packing_constant: float  # largest C1 with pairwise separation > C1 * 2^-j
    parent_ratio: float | None  # worst ratio in the parent-proximity condition
    parent_ok: bool | None
    max_center_to_sample: float | None
    mean_projection_error: float | None
    max_projection_error: float | None
    degenerate_fraction: float | None  # None when fit metadata is absent
    flat_spectrum_cells: int | None
    c_tilde_hat: float | None


@dataclass(frozen=True)
class GmraAuditReport:
    levels: tuple
    monotone_cells: bool
    decay_exponent: float | None
    decay_constant: float | None

    def __str__(self):
        lines = [
            "level   K  minsep   C1_hat  C2_hat  tube_dist  mean_err   max_err  "
            "degen  flat  Ctilde"
        ]
        for a in self.levels:
            lines.append(
                f"{a.j:5d} {a.K:4d} {a.min_center_separation:7.4f} "
                f"{a.packing_constant:8.4f} "
                f"{_fmt(a.parent_ratio):>7} {_fmt(a.max_center_to_sample):>9} "
                f"{_fmt(a.mean_projection_error):>9} {_fmt(a.max_projection_error):>9} "
                f"{_fmt(a.degenerate_fraction):>5} {_fmt(a.flat_spectrum_cells):>5} "
                f"{_fmt(a.c_tilde_hat):>7}"
            )
        lines.append(
            f"cells nondecreasing: {self.monotone_cells}; "
            f"fitted error decay ~ {_fmt(self.decay_constant)} * 2^(-{_fmt(self.decay_exponent)} j)"
        )
        return "\n".join(lines)


def _fmt(v):
    return "-" if v is None else f"{v:.4g}"


def audit_gmra(gmra, points=None, tilde_sample=500, seed=0):
    """Observational diagnostics against the multiscale model's axioms.

    Reports, per level, the empirical packing constant, the parent-proximity
    ratio, the worst center-to-sample distance, and mean/max projection
    errors; plus a log-regression fit of the error decay across levels.
    Never raises on a violated property: the numbers describe the build.
    """
    X = None
    if points is not None:
        X = as_matrix(points.data if hasattr(points, "data") else points)

    audits = []
    mean_errs = []
    for lvl in gmra.levels:
        centers = lvl.centers
        K = lvl.K
        if K > 1:
            d2 = (
                np.sum(centers * centers, axis=1)[:, None]
                - 2.0 * (centers @ centers.T)
                + np.sum(centers * centers, axis=1)[None, :]
            )
            np.fill_diagonal(d2, np.inf)
            min_sep = float(np.sqrt(max(np.min(d2), 0.0)))
        else:
            min_sep = float("inf")
        packing = min_sep * 2.0**lvl.j

        parent_ratio = None
        parent_ok = None
        prev = _previous_level(gmra, lvl)
        if lvl.parent is not None and prev is not None and prev.K > 1:
            ratios = []
            for k in range(K):
                diffs = np.linalg.norm(prev.centers - centers[k], axis=1)
                p = lvl.parent[k]
                others = np.delete(diffs, p)
                denom = float(np.min(others))
                if denom > 0:
                    ratios.append(float(diffs[p]) / denom)
            parent_ratio = max(ratios) if ratios else None
            parent_ok = parent_ratio is not None and parent_ratio <= 1.0

        tube = mean_err = max_err = None
        if X is not None:
            # Subtract first: the expanded quadratic form loses ~1e-8 of
            # precision exactly when centers coincide with samples.
            tube = max(
                float(np.min(np.linalg.norm(X - centers[k], axis=1)))
                for k in range(K)
            )
            assign = nearest_centers(lvl, X)
            errs = _projection_error_norms(lvl, X, assign)
            mean_err = float(np.mean(errs))
            max_err = float(np.max(errs))
        mean_errs.append(mean_err)

        c_tilde = None
        if X is not None:
            c_tilde = _c_tilde_hat(lvl, X, packing, tilde_sample, seed)

        audits.append(
            LevelAudit(
                j=lvl.j,
                K=K,
                min_center_separation=min_sep,
                packing_constant=packing,
                parent_ratio=parent_ratio,
                parent_ok=parent_ok,
                max_center_to_sample=tube,
                mean_projection_error=mean_err,
                max_projection_error=max_err,
                degenerate_fraction=(
                    float(np.mean(lvl.degenerate)) if lvl.degenerate is not None else None
                ),
                flat_spectrum_cells=(
                    int(np.count_nonzero(lvl.flat_spectrum))
                    if lvl.flat_spectrum is not None
                    else None
                ),
                c_tilde_hat=c_tilde,
            )
        )

    Ks = [lvl.K for lvl in gmra.levels]
    monotone = all(a <= b for a, b in zip(Ks, Ks[1:]))

    exponent = constant = None
    if X is not None:
        js = np.array(gmra.scales(), dtype=np.float64)
        errs = np.array([e if e is not None else np.nan for e in mean_errs])
        ok = np.isfinite(errs) & (errs > 0)
        if np.count_nonzero(ok) >= 2:
            slope, intercept = np.polyfit(js[ok], np.log2(errs[ok]), 1)
            exponent = float(-slope)
            constant = float(2.0**intercept)

    return GmraAuditReport(
        levels=tuple(audits),
        monotone_cells=monotone,
        decay_exponent=exponent,
        decay_constant=constant,
    )


def _previous_level(gmra, lvl):
    prev = None
    for candidate in gmra.levels:
        if candidate.j == lvl.j - 1:
            prev = candidate
    return prev


def _c_tilde_hat(level, X, packing, tilde_sample, seed):
    """Empirical constant for the near-center projection bound at this level.

    Looks at every center within 16x of the best center distance (or the
    packing radius) and records the worst projection error times 2^j.
    Subsampled for cost; observational only.
    """
    from .rng import rng_for

    n = X.shape[0]
    if n > tilde_sample:
        idx = rng_for(seed, "pairs", level.j, n).choice(n, size=tilde_sample, replace=False)
        sample = X[idx]
    else:
        sample = X
    centers = level.centers
    worst = 0.0
    radius_floor = packing * 2.0 ** (-level.j - 1)
    for x in sample:
        dists = np.linalg.norm(centers - x, axis=1)
        best = float(np.min(dists))
        eligible = np.flatnonzero(dists <= 16.0 * max(best, radius_floor))
        for k in eligible:
            diff = x - centers[k]
            resid = diff - level.bases[k].T @ (level.bases[k] @ diff)
            worst = max(worst, float(np.linalg.norm(resid)) * 2.0**level.j)
    return worst


def save_gmra(gmra, path):
    """Write a model to its binary file format.

    Layout: magic "OMSG", little-endian u32 d, u32 D, u32 level count, then
    per level: u32 j, u32 K, centers (K*D f64), bases (K*d*D f64), parent map
    (K u32, 0xFFFFFFFF when the level has no parent), cell counts (K u32).
    Scales must be nonnegative to be serializable.
    """
    for lvl in gmra.levels:
        if lvl.j < 0:
            raise DomainError(f"negative scale {lvl.j} cannot be serialized")
    with open(path, "wb") as fh:
        fh.write(GMRA_MAGIC)
        fh.write(struct.pack("<III", gmra.d, gmra.D, len(gmra.levels)))
        for lvl in gmra.levels:
            fh.write(struct.pack("<II", lvl.j, lvl.K))
            fh.write(lvl.centers.astype("<f8").tobytes(order="C"))
            fh.write(lvl.bases.astype("<f8").tobytes(order="C"))
            if lvl.parent is None:
                parent = np.full(lvl.K, NO_PARENT, dtype="<u4")
            else:
                parent = lvl.parent.astype("<u4")
            fh.write(parent.tobytes(order="C"))
            fh.write(lvl.cell_counts.astype("<u4").tobytes(order="C"))


def load_gmra(path):
    """Read a model written by :func:`save_gmra`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    buf = io.BytesIO(raw)
    magic = buf.read(4)
    if magic != GMRA_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {GMRA_MAGIC!r}", offset=0)
    header = buf.read(12)
    if len(header) != 12:
        raise FormatError("truncated header", offset=4)
    d, D, n_levels = struct.unpack("<III", header)
    levels = []
    for _ in range(n_levels):
        offset = buf.tell()
        lvl_header = buf.read(8)
        if len(lvl_header) != 8:
            raise FormatError("truncated level header", offset=offset)
        j, K = struct.unpack("<II", lvl_header)
        centers = _read_array(buf, "<f8", K * D, (K, D))
        bases = _read_array(buf, "<f8", K * d * D, (K, d, D))
        parent_raw = _read_array(buf, "<u4", K, (K,))
        counts = _read_array(buf, "<u4", K, (K,))
        parent = None
        if K > 0 and parent_raw[0] != NO_PARENT:
            parent = _frozen(parent_raw.astype(np.int64))
        levels.append(
            GmraLevel(
                j=int(j),
                centers=_frozen(centers.astype(np.float64)),
                bases=_frozen(bases.astype(np.float64)),
                parent=parent,
                cell_counts=_frozen(counts.astype(np.int64)),
            )
        )
    return Gmra(d=int(d), D=int(D), levels=tuple(levels))


def _read_array(buf, dtype, count, shape):
    offset = buf.tell()
    nbytes = np.dtype(dtype).itemsize * count
    body = buf.read(nbytes)
    if len(body) != nbytes:
        raise FormatError(
            f"truncated array: expected {nbytes} bytes, found {len(body)}",
            offset=offset,
        )
    return np.frombuffer(body, dtype=dtype).reshape(shape)
