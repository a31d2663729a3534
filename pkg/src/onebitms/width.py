"""Monte-Carlo Gaussian-width estimation and width-based diagnostics.

The Gaussian width of a set K, E sup_{x in K} <g, x> for standard normal g,
measures K's effective dimension. Estimates here replace the supremum by a
maximum over finitely many sampled points, so they are biased low; every
report should be read with that in mind. Estimates are seed-deterministic
and per-trial streams are derived independently, so trial order (or parallel
evaluation) cannot change the result.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyInputError
from .rng import rng_for
from .validation import as_matrix


@dataclass(frozen=True)
class WidthEstimate:
    """Monte-Carlo width estimate: sample mean of per-trial maxima."""

    mean: float
    std_err: float
    trials: int
    seed: int

    def __post_init__(self):
        # Gaussian widths are nonnegative; an estimate meaningfully below
        # zero indicates a broken sampler rather than noise.
        if self.mean < -3.0 * self.std_err:
            raise DomainError(
                f"width estimate {self.mean:.6g} is below -3 standard errors"
            )


@dataclass(frozen=True)
class ManifoldMeta:
    """User-supplied geometric summary of a manifold.

    Diameter, reach, and volume are inputs, not estimates; the package never
    computes reach. ``spherical`` declares the manifold to be a subset of the
    unit sphere, which caps the diameter at 2 and the reach at 1.
    """

    d: int
    diam: float
    reach: float
    volume: float
    spherical: bool = False

    def __post_init__(self):
        bad = [
            name
            for name, v in (
                ("d", self.d),
                ("diam", self.diam),
                ("reach", self.reach),
                ("volume", self.volume),
            )
            if v <= 0
        ]
        if bad:
            raise DomainError(f"nonpositive manifold parameters: {', '.join(bad)}")
        if self.spherical and (self.diam > 2.0 or self.reach > 1.0):
            raise DomainError(
                "a subset of the unit sphere has diameter <= 2 and reach <= 1"
            )


def estimate_width(sampler, trials, points_per_trial=1024, seed=0):
    """Average over trials of the maximum of <g, x> over sampled points.

    ``sampler(rng, count)`` must return a (k, D) array of points of the set;
    finite sets may ignore both arguments and return themselves, which makes
    the per-trial maxima exactly monotone under set inclusion at fixed seed.
    """
    if trials < 2:
        raise DomainError("at least two trials are required for a standard error")
    maxima = np.empty(trials)
    for t in range(trials):
        sample_rng = rng_for(seed, "width", t, 0)
        gauss_rng = rng_for(seed, "width", t, 1)
        pts = np.atleast_2d(np.asarray(sampler(sample_rng, points_per_trial), dtype=np.float64))
        if pts.shape[0] == 0:
            raise EmptyInputError("sampler returned no points")
        g = gauss_rng.standard_normal(pts.shape[1])
        maxima[t] = float(np.max(pts @ g))
    mean = float(np.mean(maxima))
    std_err = float(np.std(maxima, ddof=1) / math.sqrt(trials))
    return WidthEstimate(mean=mean, std_err=std_err, trials=trials, seed=seed)


def finite_set_sampler(points):
    """Sampler for a fixed finite set: every trial sees the whole set."""
    pts = np.ascontiguousarray(as_matrix(points, name="finite set"))
    if pts.shape[0] == 0:
        raise EmptyInputError("finite set is empty")
    pts.setflags(write=False)
    return lambda rng, count: pts


def union_sampler(*samplers):
    """Sampler for the union of sets, stacking the parts' samples."""
    if not samplers:
        raise EmptyInputError("at least one sampler is required")
    return lambda rng, count: np.vstack([s(rng, count) for s in samplers])


def subspace_sphere_sampler(basis):
    """Uniform samples on the unit sphere of the row span of ``basis``.

    The sphere is the boundary of span ∩ B(0,1), where the per-trial maxima
    of a linear functional live, so this also samples that ball's width.
    """
    B = as_matrix(basis, name="basis")

    def sample(rng, count):
        coeff = rng.standard_normal((count, B.shape[0]))
        norms = np.linalg.norm(coeff, axis=1)
        norms[norms == 0.0] = 1.0
        return (coeff / norms[:, None]) @ B

    return sample


def level_set_sampler(gmra, j, base_points):
    """Sampler for a stored level's approximation set.

    Projects the given base points through their nearest-center cells and
    clips to the radius-2 ball, yielding points of the scale-j approximation.
    """
    from .gmra import nearest_centers

    X = as_matrix(
        base_points.data if hasattr(base_points, "data") else base_points,
        name="base points",
    )
    lvl = gmra.level(j)
    assign = nearest_centers(lvl, X)
    projected = np.empty_like(X)
    for k in np.unique(assign):
        members = np.flatnonzero(assign == k)
        diff = X[members] - lvl.centers[k]
        projected[members] = lvl.centers[k] + (diff @ lvl.bases[k].T) @ lvl.bases[k]
    keep = np.linalg.norm(projected, axis=1) <= 2.0
    projected = projected[keep]
    if projected.shape[0] == 0:
        raise EmptyInputError("every projected point left the radius-2 ball")
    return finite_set_sampler(projected)


@dataclass(frozen=True)
class UnionWidthReport:
    """Empirical check of the two-sided width bound for a union of sets."""

    lower_ok: bool
    upper_ok: bool
    lower_margin: float  # w(union) + slack - max(w(A), w(B)); >= 0 when ok
    upper_margin: float  # 2w(A) + 2w(B) + 3 + slack - w(union); >= 0 when ok


def check_union_width(w_a, w_b, w_union):
    """Check max{w(A), w(B)} <= w(A u B) <= 2 w(A) + 2 w(B) + 3 with slack.

    Each side gets three combined standard errors of slack. With nested
    finite sets estimated at the same seed the lower inequality holds exactly
    at the estimator level (a maximum over a superset dominates), so it is
    reported without slack consumed.
    """
    lower_slack = 3.0 * math.hypot(max(w_a.std_err, w_b.std_err), w_union.std_err)
    upper_slack = 3.0 * math.hypot(2.0 * w_a.std_err, 2.0 * w_b.std_err, w_union.std_err)
    lower_margin = w_union.mean + lower_slack - max(w_a.mean, w_b.mean)
    upper_margin = 2.0 * w_a.mean + 2.0 * w_b.mean + 3.0 + upper_slack - w_union.mean
    return UnionWidthReport(
        lower_ok=lower_margin >= 0.0,
        upper_ok=upper_margin >= 0.0,
        lower_margin=float(lower_margin),
        upper_margin=float(upper_margin),
    )


def riemannian_width_bound(meta, C=1.0, c=1.0):
    """Width bound for a compact Riemannian manifold from its geometry.

    Evaluates C * diam * sqrt(d * max(log(c * sqrt(d) / min(1, reach)), 1)
    + log(max(1, volume))). The absolute constants C and c are not pinned by
    the theory; the defaults of 1 make this a shape diagnostic, not a
    certified bound.
    """
    if C <= 0 or c <= 0:
        raise DomainError("constants C and c must be positive")
    inner = c * math.sqrt(meta.d) / min(1.0, meta.reach)
    log_term = max(math.log(inner), 1.0)
    vol_term = math.log(max(1.0, meta.volume))
    return C * meta.diam * math.sqrt(meta.d * log_term + vol_term)


def finite_width_screen(points, estimate, constant=3.0):
    """Screen a finite-set estimate against the diameter–log-size bound.

    Returns True when the estimate is consistent with
    ``constant * diam(K u {0}) * sqrt(log |K|)`` after allowing three
    standard errors; a False value flags a suspicious estimate but is never
    an error by itself.
    """
    pts = as_matrix(points, name="finite set")
    k = pts.shape[0]
    if k < 1:
        raise EmptyInputError("finite set is empty")
    with_origin = np.vstack([pts, np.zeros(pts.shape[1])])
    sq = np.sum(with_origin**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (with_origin @ with_origin.T)
    diam = math.sqrt(max(float(np.max(d2)), 0.0))
    bound = constant * diam * math.sqrt(math.log(k)) if k > 1 else 0.0
    return estimate.mean <= bound + 3.0 * estimate.std_err
