import numpy as np
import pytest

from hypspots.eigen import (
    EigenSolverError,
    NonConvergenceError,
    _lanczos,
    eigenvalue_convergence_study,
    empirical_order,
    richardson,
    smallest_eigenpairs,
    solve_mesh,
)
from hypspots.fem import assemble_mass, assemble_stiffness
from hypspots.mesh import DomainSpec, triangulate
from hypspots.special import threshold_radius


def check_pairs(pairs, K, M, tol):
    vals, V = pairs.eigenvalues, pairs.eigenvectors
    assert np.all(np.diff(vals) >= 0) and np.all(np.isfinite(vals))
    G = V.T @ (M @ V)
    assert np.max(np.abs(G - np.eye(len(vals)))) <= 1e-8
    R = K @ V - (M @ V) * vals
    assert np.all(np.linalg.norm(R, axis=0) <= tol * np.sqrt(np.diag(G)) * (1 + 1e-12))


class TestSolve:
    def test_neumann_constant_mode(self, disk1_mesh):
        pairs = solve_mesh(disk1_mesh, k=4)
        assert -1e-8 <= pairs.eigenvalues[0] <= 1e-8
        u = pairs.eigenvectors[:, 0]
        assert np.ptp(u) / np.abs(u).mean() < 1e-6
        K, M = assemble_stiffness(disk1_mesh), assemble_mass(disk1_mesh)
        check_pairs(pairs, K, M, 1e-8)

    def test_threshold_disk(self):
        m = triangulate(DomainSpec.disk(threshold_radius()), 0.1)
        pairs = solve_mesh(m, k=4)
        assert pairs.method == "lanczos"
        assert pairs.eigenvalues[1] == pytest.approx(0.25, abs=5e-3)
        K, M = assemble_stiffness(m), assemble_mass(m)
        check_pairs(pairs, K, M, 1e-8)

    def test_lanczos_matches_dense_200(self, small_disk_mesh):
        K, M = assemble_stiffness(small_disk_mesh), assemble_mass(small_disk_mesh)
        assert 150 <= K.shape[0] <= 300
        d = smallest_eigenpairs(K, M, 5, method="dense")
        lz = smallest_eigenpairs(K, M, 5, method="lanczos")
        assert np.max(np.abs(d.eigenvalues - lz.eigenvalues)) <= 1e-8
        check_pairs(lz, K, M, 1e-8)

    def test_mixed_vectors(self):
        m = triangulate(DomainSpec.disk(2.0, dirichlet=(0.0, 2.0)), 0.2)
        pairs = solve_mesh(m, k=3)
        full = pairs.full_vectors()
        assert full.shape == (m.n_vertices, 3)
        assert np.all(full[m.dirichlet_vertices()] == 0)
        assert pairs.eigenvalues[0] > 0

    def test_deterministic(self):
        m = triangulate(DomainSpec.disk(3.0), 0.2)
        a = solve_mesh(m, k=4, method="lanczos")
        b = solve_mesh(m, k=4, method="lanczos")
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)


class TestErrors:
    def test_k_range(self, small_disk_mesh):
        K, M = assemble_stiffness(small_disk_mesh), assemble_mass(small_disk_mesh)
        with pytest.raises(EigenSolverError):
            smallest_eigenpairs(K, M, 0)
        with pytest.raises(EigenSolverError):
            smallest_eigenpairs(K, M, K.shape[0] // 2, method="lanczos")
        with pytest.raises(ValueError):
            smallest_eigenpairs(K, M, 2, method="qr")

    def test_non_convergence_reports_residuals(self, disk3_mesh):
        K, M = assemble_stiffness(disk3_mesh), assemble_mass(disk3_mesh)
        with pytest.raises(NonConvergenceError) as info:
            _lanczos(K, M, 4, tol=1e-30, max_dim=12)
        assert len(info.value.residuals) == 4


class TestStudy:
    def test_extrapolation(self):
        s = eigenvalue_convergence_study(DomainSpec.disk(threshold_radius()), [0.4, 0.2, 0.1])
        assert abs(s.extrapolated - 0.25) < 1e-3
        assert 1.7 <= s.order <= 2.3
        d = s.as_dict()
        assert d["h"] == [0.4, 0.2, 0.1] and len(d["values"]) == 3

    def test_nested_monotone(self):
        s = eigenvalue_convergence_study(DomainSpec.disk(threshold_radius()), [0.4, 0.2, 0.1], project=False)
        v = s.values
        assert all(b <= a + 1e-9 for a, b in zip(v, v[1:]))

    def test_argument_checks(self):
        spec = DomainSpec.disk(1.0)
        with pytest.raises(ValueError):
            eigenvalue_convergence_study(spec, [0.4, 0.2])
        with pytest.raises(ValueError):
            eigenvalue_convergence_study(spec, [0.4, 0.3, 0.1])

    def test_richardson_exact_for_quadratic(self):
        h = np.array([0.4, 0.2, 0.1])
        vals = 0.3 + 2.0 * h**2
        assert richardson(vals) == pytest.approx(0.3, abs=1e-14)
        assert empirical_order(vals) == pytest.approx(2.0)
        assert np.isnan(empirical_order([1.0, 1.0, 1.0]))
