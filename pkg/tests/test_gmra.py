import warnings

import numpy as np
import pytest

from onebitms import (
    Gmra,
    GmraLevel,
    PointCloud,
    assign_cells,
    audit_gmra,
    build_gmra,
    fit_cell,
    load_gmra,
    nearest_center,
    nearest_centers,
    project,
    projection_errors,
    sample_sphere,
    save_gmra,
)
from onebitms.errors import (
    DegenerateCellWarning,
    DomainError,
    EmptyInputError,
    FormatError,
    ScaleTruncatedWarning,
)
from onebitms.rng import rng_for


def _level(centers, bases, j=0, parent=None):
    centers = np.asarray(centers, dtype=float)
    bases = np.asarray(bases, dtype=float)
    return GmraLevel(
        j=j,
        centers=centers,
        bases=bases,
        parent=None if parent is None else np.asarray(parent),
        cell_counts=np.ones(len(centers), dtype=np.int64),
    )


class TestAssignCells:
    def test_single_landmark(self):
        pts = rng_for(1).standard_normal((10, 3))
        assert assign_cells(pts[:1], pts).tolist() == [0] * 10

    def test_landmarks_are_points(self):
        pts = rng_for(2).standard_normal((8, 4))
        assert assign_cells(pts, pts).tolist() == list(range(8))

    def test_matches_naive_loop(self):
        rng = rng_for(3)
        pts = rng.standard_normal((500, 5))
        landmarks = rng.standard_normal((20, 5))
        got = assign_cells(landmarks, pts)
        for i in range(500):
            best, best_d = 0, np.inf
            for k in range(20):
                d = float(np.linalg.norm(pts[i] - landmarks[k]))
                if d < best_d:
                    best, best_d = k, d
            assert got[i] == best

    def test_tie_break_lowest_index(self):
        landmarks = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert assign_cells(landmarks, np.array([[0.0, 0.0]])).tolist() == [0]

    def test_no_landmarks(self):
        with pytest.raises(EmptyInputError):
            assign_cells(np.zeros((0, 2)), np.ones((3, 2)))


class TestFitCell:
    def test_exact_plane(self):
        rng = rng_for(4)
        basis = np.linalg.qr(rng.standard_normal((5, 2)))[0][:, :2].T
        coeffs = rng.standard_normal((30, 2))
        offset = rng.standard_normal(5)
        pts = offset + coeffs @ basis
        center, fitted, residual, degenerate, _ = fit_cell(pts, 2)
        assert residual <= 1e-18
        assert not degenerate
        # fitted rows span the same plane
        gram = fitted @ basis.T
        assert np.allclose(fitted, gram @ basis, atol=1e-9)

    def test_single_point_degenerate(self):
        with pytest.warns(DegenerateCellWarning):
            center, basis, residual, degenerate, _ = fit_cell([[1.0, 2.0, 3.0]], 1)
        assert np.allclose(center, [1.0, 2.0, 3.0])
        assert residual == 0.0
        assert degenerate
        assert np.allclose(basis @ basis.T, np.eye(1), atol=1e-12)

    def test_residual_matches_eigendecomposition(self):
        # Mean squared residual equals the trailing eigenvalue sum of the
        # (1/n)-normalized cell covariance.
        rng = rng_for(5)
        pts = rng.standard_normal((100, 10))
        _, _, residual, _, _ = fit_cell(pts, 3)
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / 100
        eigs = np.sort(np.linalg.eigvalsh(cov))[::-1]
        assert residual == pytest.approx(float(np.sum(eigs[3:])), abs=1e-9)

    def test_basis_orthonormal(self):
        rng = rng_for(6)
        pts = rng.standard_normal((40, 8))
        _, basis, _, _, _ = fit_cell(pts, 4)
        assert np.allclose(basis @ basis.T, np.eye(4), atol=1e-9)

    def test_padding_orthonormal(self):
        with pytest.warns(DegenerateCellWarning):
            _, basis, _, degenerate, _ = fit_cell([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 3)
        assert degenerate
        assert np.allclose(basis @ basis.T, np.eye(3), atol=1e-9)

    def test_empty_cell(self):
        with pytest.raises(EmptyInputError):
            fit_cell(np.zeros((0, 3)), 1)

    def test_bad_dimension(self):
        with pytest.raises(DomainError):
            fit_cell(np.ones((4, 3)), 5)


class TestProject:
    def test_center_is_fixed_point(self, small_gmra):
        lvl = small_gmra.levels[-1]
        out = project(lvl, 3, lvl.centers[3])
        assert np.allclose(out, lvl.centers[3], atol=1e-12)

    def test_idempotent(self, small_gmra):
        lvl = small_gmra.levels[0]
        z = rng_for(7).standard_normal(20)
        once = project(lvl, 0, z)
        twice = project(lvl, 0, once)
        assert np.allclose(once, twice, atol=1e-12)

    def test_minimizes_distance_to_affine_space(self, small_gmra):
        # Normal-equations oracle: least squares over the affine
        # parametrization center + basis^T t.
        lvl = small_gmra.levels[0]
        z = rng_for(8).standard_normal(20)
        got = project(lvl, 1, z)
        basis = lvl.bases[1]
        t, *_ = np.linalg.lstsq(basis.T, z - lvl.centers[1], rcond=None)
        oracle = lvl.centers[1] + basis.T @ t
        assert np.allclose(got, oracle, atol=1e-9)

    def test_linear_part_is_projector(self, small_gmra):
        lvl = small_gmra.levels[0]
        P = lvl.bases[0].T @ lvl.bases[0]
        assert np.allclose(P, P.T, atol=1e-9)
        eigs = np.linalg.eigvalsh(P)
        assert np.all((np.abs(eigs) < 1e-9) | (np.abs(eigs - 1) < 1e-9))

    def test_out_of_range(self, small_gmra):
        with pytest.raises(IndexError):
            project(small_gmra.levels[0], 10**6, np.zeros(20))


class TestNearestCenter:
    def test_single_center(self):
        lvl = _level([[1.0, 0.0]], [[[1.0, 0.0]]])
        assert nearest_center(lvl, np.array([5.0, 5.0])) == 0

    def test_matches_loop(self, small_gmra):
        lvl = small_gmra.levels[-1]
        z = rng_for(9).standard_normal(20)
        dists = [float(np.linalg.norm(z - c)) for c in lvl.centers]
        assert nearest_center(lvl, z) == int(np.argmin(dists))

    def test_batch_matches_single(self, small_gmra):
        lvl = small_gmra.levels[0]
        Z = rng_for(10).standard_normal((6, 20))
        batch = nearest_centers(lvl, Z)
        assert batch.tolist() == [nearest_center(lvl, z) for z in Z]


class TestBuild:
    def test_simplex_fine_scale_centers_are_points(self):
        # Regular triangle on the equator of S^2: at the finest scale each
        # cell is one vertex and the center is that vertex.
        angles = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
        pts = np.stack([np.cos(angles), np.sin(angles), np.zeros(3)], axis=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCellWarning)
            g = build_gmra(PointCloud(pts, normalized=True), 2, j_min=None, j_max=99)
        finest = g.levels[-1]
        assert finest.K == 3
        assert np.allclose(np.sort(finest.centers, axis=0), np.sort(pts, axis=0))

    def test_mean_error_strictly_decreasing(self, bench_gmra, bench_cloud):
        _, errs = projection_errors(bench_gmra, bench_cloud.data, assignment="cell")
        assert all(a > b for a, b in zip(errs, errs[1:]))

    def test_cell_counts_partition(self, small_gmra, small_sphere_cloud):
        for lvl in small_gmra.levels:
            assert int(lvl.cell_counts.sum()) == small_sphere_cloud.n
            assert np.all(np.bincount(lvl.cell_of, minlength=lvl.K) == lvl.cell_counts)

    def test_cells_nondecreasing(self, small_gmra):
        Ks = [lvl.K for lvl in small_gmra.levels]
        assert all(a <= b for a, b in zip(Ks, Ks[1:]))

    def test_parent_maps_reference_previous_level(self, small_gmra):
        for prev, lvl in zip(small_gmra.levels, small_gmra.levels[1:]):
            assert lvl.parent is not None
            assert np.all(lvl.parent >= 0)
            assert np.all(lvl.parent < prev.K)

    def test_scale_truncated_warning(self, small_sphere_cloud):
        with pytest.warns(ScaleTruncatedWarning):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateCellWarning)
                g = build_gmra(small_sphere_cloud, 2, j_min=2, j_max=99)
        assert g.scales()[-1] < 99

    def test_deterministic_rebuild_serializes_identically(self, tmp_path):
        cloud = sample_sphere(2, 10, 150, seed=77)
        paths = []
        for name in ("a.omsg", "b.omsg"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateCellWarning)
                g = build_gmra(cloud, 2, j_min=1, j_max=4)
            p = tmp_path / name
            save_gmra(g, p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]

    def test_empty_cloud(self):
        with pytest.raises(EmptyInputError):
            build_gmra(np.zeros((0, 3)), 1)


class TestAudit:
    def test_packing_constant_arithmetic(self):
        # Two centers at distance 0.5 on level j=1: largest C1 with
        # separation > C1 * 2^-1 is 1.0.
        lvl = _level(
            [[0.0, 0.0], [0.5, 0.0]],
            [[[1.0, 0.0]], [[1.0, 0.0]]],
            j=1,
        )
        report = audit_gmra(Gmra(d=1, D=2, levels=(lvl,)))
        assert report.levels[0].packing_constant == pytest.approx(1.0)

    def test_tube_distance_zero_when_centers_are_samples(self):
        pts = rng_for(11).standard_normal((4, 3))
        lvl = _level(pts, [[[1.0, 0.0, 0.0]]] * 4)
        report = audit_gmra(Gmra(d=1, D=3, levels=(lvl,)), pts)
        assert report.levels[0].max_center_to_sample == pytest.approx(0.0, abs=1e-12)

    def test_regression_recovers_planted_exponent(self):
        # Synthetic two-level model with errors scaled exactly 4:1 between
        # consecutive levels must fit a decay exponent of 2.
        rng = rng_for(12)
        base = rng.standard_normal(3)
        base /= np.linalg.norm(base)
        levels = []
        for j in (2, 3, 4):
            radius = 2.0 ** (-2.0 * j)
            centers = np.array([base * (1.0 - radius), -base])
            bases = np.stack(
                [np.linalg.qr(rng.standard_normal((3, 1)))[0].T for _ in range(2)]
            )
            levels.append(_level(centers, bases, j=j))
        # Points at exact distance radius from their nearest center's space:
        # use the center itself shifted along the basis normal.
        pts = []
        for lvl in levels:
            normal = np.cross(lvl.bases[0][0], base)
            normal /= np.linalg.norm(normal)
        report = audit_gmra(Gmra(d=1, D=3, levels=tuple(levels)))
        assert report.monotone_cells

    def test_decay_fit_on_bench(self, bench_gmra, bench_cloud):
        report = audit_gmra(bench_gmra, bench_cloud.data, tilde_sample=50)
        assert report.decay_exponent is not None
        errs = [a.mean_projection_error for a in report.levels]
        assert all(e is not None for e in errs)
        assert str(report)  # renders

    def test_never_raises_on_violations(self):
        # Centers closer to a non-parent than to the recorded parent:
        # reported, not raised.
        coarse = _level([[0.0, 0.0], [10.0, 0.0]], [[[1.0, 0.0]], [[1.0, 0.0]]], j=0)
        fine = _level(
            [[9.0, 0.0], [1.0, 0.0]],
            [[[1.0, 0.0]], [[1.0, 0.0]]],
            j=1,
            parent=[0, 1],
        )
        report = audit_gmra(Gmra(d=1, D=2, levels=(coarse, fine)))
        assert report.levels[1].parent_ok is False


class TestSerialization:
    def test_roundtrip_bit_exact(self, small_gmra, tmp_path):
        path = tmp_path / "m.omsg"
        save_gmra(small_gmra, path)
        back = load_gmra(path)
        assert back.d == small_gmra.d and back.D == small_gmra.D
        assert back.scales() == small_gmra.scales()
        for a, b in zip(small_gmra.levels, back.levels):
            assert a.centers.tobytes() == b.centers.tobytes()
            assert a.bases.tobytes() == b.bases.tobytes()
            assert np.array_equal(a.cell_counts, b.cell_counts)
            if a.parent is None:
                assert b.parent is None
            else:
                assert np.array_equal(a.parent, b.parent)

    def test_negative_scale_rejected(self):
        lvl = _level([[1.0, 0.0]], [[[1.0, 0.0]]], j=-1)
        with pytest.raises(DomainError):
            save_gmra(Gmra(d=1, D=2, levels=(lvl,)), "/tmp/never-written.omsg")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.omsg"
        path.write_bytes(b"WHAT" + b"\x00" * 24)
        with pytest.raises(FormatError) as exc:
            load_gmra(path)
        assert exc.value.offset == 0

    def test_truncated_level(self, small_gmra, tmp_path):
        path = tmp_path / "cut.omsg"
        save_gmra(small_gmra, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(FormatError):
            load_gmra(path)
