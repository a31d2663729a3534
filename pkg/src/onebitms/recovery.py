"""Signal recovery from one-bit measurements over a multiscale affine model.

Recovery is two-step: identify the stored center whose sign pattern agrees
best with the observed bits, then solve a convex program over a feasible
region attached to that center's affine piece. The regions are

* the cap hull: the convex hull of the radial projection of the clipped
  affine piece onto the unit sphere, described exactly by a ball constraint,
  a span constraint, and one half-space constraint (see :func:`make_cap`);
* the radius-R disk inside the affine piece itself (the simpler variant,
  which needs the radius as a tuning parameter and can be infeasible).

Linear objectives over both regions have closed-form minimizers in reduced
coordinates, so no numerical solver is involved; the hinge-loss variant is
the one iterative method (projected subgradient).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InfeasibleCellError, InfeasibleError
from .measure import quantize, quantize_rows
from .validation import as_bits, as_vector

ORIGIN_TOL = 1e-10


@dataclass(frozen=True)
class FeasibleCap:
    """Reduced description of the cap hull of one cell.

    ``basis`` has orthonormal rows spanning the cell's direction space plus,
    when the affine piece misses the origin, the direction of the foot point
    ``c`` (the projection of the origin onto the piece). In reduced
    coordinates u = basis @ z the feasible set is the unit ball intersected,
    when ``c`` is nonzero, with the half-space u_last >= ||c|| / 2.
    """

    basis: np.ndarray = field(repr=False)  # (p, D), orthonormal rows
    c: np.ndarray = field(repr=False)  # foot point, zero vector if origin case
    c_norm: float
    contains_origin: bool

    @property
    def reduced_dim(self):
        return self.basis.shape[0]

    @property
    def half_space_offset(self):
        """Lower bound on the last reduced coordinate (0 in the origin case)."""
        return 0.0 if self.contains_origin else self.c_norm / 2.0


@dataclass(frozen=True)
class RecoveryResult:
    x_star: np.ndarray | None
    center_index: int
    used_step_two: bool
    residual_hamming: int | None
    variant: str
    iterations: int = 0
    feasible: bool = True
    step_one_hamming: int = 0


class CenterSignCache:
    """Per-level sign patterns of the centers under one fixed ensemble.

    Built lazily, then shared read-only; safe for concurrent readers.
    """

    def __init__(self, gmra, ensemble):
        self.gmra = gmra
        self.ensemble = ensemble
        self._patterns = {}

    def patterns(self, j):
        if j not in self._patterns:
            lvl = self.gmra.level(j)
            bits = quantize_rows(self.ensemble, lvl.centers)
            # float32 keeps the Hamming matmul exact for m up to 2^24.
            self._patterns[j] = bits.astype(np.float32)
        return self._patterns[j]

    def hamming_to(self, j, y):
        """Hamming distance of every level-j center pattern to ``y``."""
        pats = self.patterns(j)
        agree = pats @ y.astype(np.float32)
        return ((self.ensemble.m - agree) / 2.0).astype(np.int64)


def select_center(gmra, j, ensemble, y, mode="exhaustive", beam_width=10, cache=None):
    """Step I: the stored center whose sign pattern best matches ``y``.

    ``mode="exhaustive"`` scans every center of level j (exact argmin, ties
    toward the lowest index). ``mode="beam"`` starts from the coarsest stored
    level and descends the parent structure keeping the ``beam_width`` best
    centers per level, which searches a fraction of the centers and may
    return a slightly worse match. Returns ``(center_index, hamming)``.
    """
    y = as_bits(y, length=ensemble.m, name="measurements")
    if cache is None:
        cache = CenterSignCache(gmra, ensemble)
    if mode == "exhaustive":
        dists = cache.hamming_to(j, y)
        k = int(np.argmin(dists))
        return k, int(dists[k])
    if mode == "beam":
        return _beam_select(gmra, j, y, beam_width, cache)
    raise ValueError(f"unknown search mode {mode!r}")


def _beam_select(gmra, j, y, beam_width, cache):
    path = [lvl for lvl in gmra.levels if lvl.j <= j]
    if not path or path[-1].j != j:
        raise KeyError(f"level {j} not stored; available: {gmra.scales()}")
    candidates = np.arange(path[0].K)
    for idx, lvl in enumerate(path):
        dists = cache.hamming_to(lvl.j, y)[candidates]
        order = np.lexsort((candidates, dists))
        if lvl.j == j:
            best = order[0]
            return int(candidates[best]), int(dists[best])
        kept = candidates[order[: max(1, int(beam_width))]]
        nxt = path[idx + 1]
        if nxt.parent is None:
            raise DimensionError(
                f"level {nxt.j} lacks a parent map; beam search needs "
                "contiguous stored levels"
            )
        candidates = np.flatnonzero(np.isin(nxt.parent, kept))
    raise RuntimeError("unreachable")  # pragma: no cover


def make_cap(level, k, origin_tol=ORIGIN_TOL):
    """Feasible cap hull of cell k.

    Computes the foot point c of the origin on the affine piece and the
    orthonormal reduced basis. Raises InfeasibleCellError when the piece
    stays outside the radius-2 ball (then the hull is empty).
    """
    phi = level.bases[k]
    center = level.centers[k]
    foot = center - phi.T @ (phi @ center)
    c_norm = float(np.linalg.norm(foot))
    if c_norm > 2.0:
        raise InfeasibleCellError(c_norm)
    if c_norm <= origin_tol:
        return FeasibleCap(
            basis=phi, c=np.zeros(level.centers.shape[1]), c_norm=0.0,
            contains_origin=True,
        )
    basis = np.vstack([phi, foot / c_norm])
    return FeasibleCap(basis=basis, c=foot, c_norm=c_norm, contains_origin=False)


def cap_contains(cap, z, tol=1e-8):
    """Membership test for the cap hull: ball, span, and half-space checks."""
    z = as_vector(z, dim=cap.basis.shape[1], name="candidate")
    if np.linalg.norm(z) > 1.0 + tol:
        return False
    u = cap.basis @ z
    if np.linalg.norm(z - cap.basis.T @ u) > tol:
        return False
    if cap.contains_origin:
        return True
    return float(np.dot(z, cap.c)) >= 0.5 * cap.c_norm**2 - tol


def solve_linear_on_cap(cap, w):
    """Global minimizer of <w, z> over the cap hull, in closed form.

    The minimum of a linear functional over the ball-and-half-space region
    lies either at the antipode of the reduced objective (when feasible) or
    on the half-space boundary; both cases reduce to at most one square root.
    Degenerate objectives fall back to fixed conventions: a zero objective
    returns the first reduced axis (origin case) or the spherical projection
    of the foot point; a face-constant objective returns the face center.
    """
    w = as_vector(w, dim=cap.basis.shape[1], name="objective")
    w_hat = cap.basis @ w
    u = _solve_linear_reduced(cap, w_hat)
    return cap.basis.T @ u


def _solve_linear_reduced(cap, w_hat):
    p = cap.reduced_dim
    norm_w = float(np.linalg.norm(w_hat))
    if cap.contains_origin:
        if norm_w == 0.0:
            u = np.zeros(p)
            u[0] = 1.0
            return u
        return -w_hat / norm_w

    h = cap.half_space_offset
    if norm_w == 0.0:
        u = np.zeros(p)
        u[-1] = 1.0
        return u
    u_ball = -w_hat / norm_w
    if u_ball[-1] >= h:
        return u_ball
    w_perp = w_hat[:-1]
    norm_perp = float(np.linalg.norm(w_perp))
    u = np.zeros(p)
    u[-1] = h
    if norm_perp > 0.0:
        u[:-1] = -np.sqrt(max(1.0 - h * h, 0.0)) * w_perp / norm_perp
    return u


def solve_linear_on_disk(level, k, w, R):
    """Global minimizer of <w, z> over the affine piece clipped to radius R.

    Feasible only when the piece meets the radius-R ball, i.e. the origin's
    foot point has norm at most R; otherwise raises InfeasibleError. The
    minimizer sits on the disk boundary opposite the objective's in-plane
    component (first basis direction when that component vanishes).
    """
    if R <= 0:
        raise InfeasibleError(float("inf"), R)
    phi = level.bases[k]
    center = level.centers[k]
    w = as_vector(w, dim=level.centers.shape[1], name="objective")
    foot = center - phi.T @ (phi @ center)
    c_norm = float(np.linalg.norm(foot))
    if c_norm > R:
        raise InfeasibleError(c_norm, R)
    radius = np.sqrt(max(R * R - c_norm * c_norm, 0.0))
    w_in = phi @ w
    norm_in = float(np.linalg.norm(w_in))
    if norm_in == 0.0:
        return foot + radius * phi[0]
    return foot - radius * (phi.T @ (w_in / norm_in))


def project_ball_half_space(v, h):
    """Euclidean projection onto {||u|| <= 1, u_last >= h} for 0 <= h <= 1."""
    v = np.asarray(v, dtype=np.float64)
    norm_v = float(np.linalg.norm(v))
    in_half = v[-1] >= h
    if in_half and norm_v <= 1.0:
        return v
    if not in_half:
        p = v.copy()
        p[-1] = h
        if np.linalg.norm(p) <= 1.0:
            return p
    else:
        p = v / norm_v
        if p[-1] >= h:
            return p
    # On the rim: last coordinate pinned at h, the rest rescaled.
    out = np.zeros_like(v)
    out[-1] = h
    rim = np.sqrt(max(1.0 - h * h, 0.0))
    perp = v[:-1]
    norm_perp = float(np.linalg.norm(perp))
    if norm_perp > 0.0:
        out[:-1] = perp * (rim / norm_perp)
    elif v.shape[0] > 1:
        out[0] = rim
    return out


def _project_feasible(cap, u):
    if cap.contains_origin:
        norm_u = float(np.linalg.norm(u))
        return u if norm_u <= 1.0 else u / norm_u
    return project_ball_half_space(u, cap.half_space_offset)


def solve_plus_on_cap(cap, ensemble, y, max_iter=2000, step_scale=1.0):
    """Minimize the hinge objective sum_l max(0, -y_l <a_l, z>) over the cap.

    Projected subgradient descent in reduced coordinates with step
    ``step_scale / sqrt(t)`` along the normalized subgradient, warm-started
    at the linear-objective minimizer. Always returns the best feasible
    iterate seen, together with the number of iterations performed; the
    objective of the returned point therefore never exceeds that of the
    linear solution.
    """
    y = as_bits(y, length=ensemble.m, name="measurements")
    M = ensemble.A @ cap.basis.T
    signs = -y.astype(np.float64)

    w = ensemble.A.T @ signs
    u = _solve_linear_reduced(cap, cap.basis @ w)

    def objective(point):
        return float(np.sum(np.maximum(signs * (M @ point), 0.0)))

    best_u = u
    best_f = objective(u)
    iterations = 0
    for t in range(1, max_iter + 1):
        iterations = t
        margins = signs * (M @ u)
        value = float(np.sum(np.maximum(margins, 0.0)))
        if value < best_f:
            best_f = value
            best_u = u
        if best_f == 0.0:
            break
        grad = M.T @ (signs * (margins > 0.0))
        norm_g = float(np.linalg.norm(grad))
        if norm_g == 0.0:
            break
        u = _project_feasible(cap, u - (step_scale / np.sqrt(t)) * grad / norm_g)
    return cap.basis.T @ best_u, iterations, best_f


def oms(
    gmra,
    j,
    ensemble,
    y,
    variant="linear",
    search="exhaustive",
    beam_width=10,
    cache=None,
    plus_iterations=2000,
    step_scale=1.0,
):
    """Two-step recovery over the cap hull.

    Step I picks the best-matching center; when its sign pattern reproduces
    ``y`` exactly the center itself is returned and step II is skipped.
    Otherwise step II minimizes the linear one-bit objective
    (``variant="linear"``) or its hinge-loss modification
    (``variant="plus"``) over the cap hull of the chosen cell.
    """
    y = as_bits(y, length=ensemble.m, name="measurements")
    level = gmra.level(j)
    k, dh = select_center(
        gmra, j, ensemble, y, mode=search, beam_width=beam_width, cache=cache
    )
    tag = "oms" if variant == "linear" else "oms-plus"
    if dh == 0:
        x_star = np.array(level.centers[k])
        return RecoveryResult(
            x_star=x_star,
            center_index=k,
            used_step_two=False,
            residual_hamming=0,
            variant=tag,
            step_one_hamming=dh,
        )
    cap = make_cap(level, k)
    if variant == "linear":
        w = -(ensemble.A.T @ y.astype(np.float64))
        x_star = solve_linear_on_cap(cap, w)
        iterations = 0
    elif variant == "plus":
        x_star, iterations, _ = solve_plus_on_cap(
            cap, ensemble, y, max_iter=plus_iterations, step_scale=step_scale
        )
    else:
        raise ValueError(f"unknown variant {variant!r}")
    residual = int(np.count_nonzero(quantize(ensemble, x_star) != y))
    return RecoveryResult(
        x_star=x_star,
        center_index=k,
        used_step_two=True,
        residual_hamming=residual,
        variant=tag,
        iterations=iterations,
        step_one_hamming=dh,
    )


def oms_simple(
    gmra,
    j,
    ensemble,
    y,
    R=1.5,
    search="exhaustive",
    beam_width=10,
    cache=None,
):
    """Two-step recovery over the radius-R disk in the chosen affine piece.

    Needs R as a tuning parameter; when the affine piece lies entirely
    outside the radius-R ball the program is infeasible, which is reported
    as a result with ``feasible=False`` rather than an exception so batch
    harnesses can count failures.
    """
    y = as_bits(y, length=ensemble.m, name="measurements")
    level = gmra.level(j)
    k, dh = select_center(
        gmra, j, ensemble, y, mode=search, beam_width=beam_width, cache=cache
    )
    tag = f"oms-simple({R:g})"
    if dh == 0:
        return RecoveryResult(
            x_star=np.array(level.centers[k]),
            center_index=k,
            used_step_two=False,
            residual_hamming=0,
            variant=tag,
            step_one_hamming=dh,
        )
    w = -(ensemble.A.T @ y.astype(np.float64))
    try:
        x_star = solve_linear_on_disk(level, k, w, R)
    except InfeasibleError:
        return RecoveryResult(
            x_star=None,
            center_index=k,
            used_step_two=True,
            residual_hamming=None,
            variant=tag,
            feasible=False,
            step_one_hamming=dh,
        )
    residual = int(np.count_nonzero(quantize(ensemble, x_star) != y))
    return RecoveryResult(
        x_star=x_star,
        center_index=k,
        used_step_two=True,
        residual_hamming=residual,
        variant=tag,
        step_one_hamming=dh,
    )


def recover_center_only(gmra, j, ensemble, y, search="exhaustive", beam_width=10, cache=None):
    """Step-I-only baseline: return the best-matching center itself."""
    y = as_bits(y, length=ensemble.m, name="measurements")
    level = gmra.level(j)
    k, dh = select_center(
        gmra, j, ensemble, y, mode=search, beam_width=beam_width, cache=cache
    )
    x_star = np.array(level.centers[k])
    residual = int(np.count_nonzero(quantize(ensemble, x_star) != y))
    return RecoveryResult(
        x_star=x_star,
        center_index=k,
        used_step_two=False,
        residual_hamming=residual,
        variant="center",
        step_one_hamming=dh,
    )
