import math

import numpy as np
import pytest
import scipy.io
import scipy.linalg as la
from scipy.integrate import quad

from hypspots.eigen import smallest_eigenpairs, solve_mesh
from hypspots.fem import (
    AssemblyError,
    DofMap,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    element_gradients,
    rayleigh_quotient,
    write_matrix_market,
)
from hypspots.geometry import DiskPoint
from hypspots.hotspots import cutoff_function, cutoff_mesh
from hypspots.mesh import DomainSpec, TriMesh, mesh_area, triangulate
from hypspots.quadrature import triangle_rule
from hypspots.special import RadialEigenfunction, disk_mu2, eval_J, eval_J_dr, threshold_radius


def single(pts):
    pts = np.asarray(pts, dtype=float)
    return TriMesh(pts, np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [2, 0]]), np.ones(3, int), 0.1)


class TestStiffness:
    def test_constants_in_kernel(self, disk1_mesh):
        K = assemble_stiffness(disk1_mesh)
        assert np.max(np.abs(K @ np.ones(disk1_mesh.n_vertices))) < 1e-12
        assert abs(K - K.T).max() < 1e-15

    def test_unit_right_triangle(self):
        K = assemble_stiffness(single([[0, 0], [1, 0], [0, 1]])).toarray()
        ref = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
        assert np.allclose(K, ref, atol=1e-15)

    def test_metric_factors_cancel(self):
        # |grad u|_H^2 dA_H = lambda^-2 |grad u|^2 lambda^2 dA for a linear u
        m = single([[0.5, 0.1], [0.7, 0.2], [0.55, 0.4]])
        g, area = element_gradients(m)
        bary, w = triangle_rule(4)
        q = bary @ m.points
        lam2 = (2 / (1 - np.sum(q**2, axis=1))) ** 2
        K = assemble_stiffness(m).toarray()
        for i in range(3):
            for j in range(3):
                val = area[0] * np.sum(w * (lam2**-1) * (g[0, i] @ g[0, j]) * lam2)
                assert val == pytest.approx(K[i, j], abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(AssemblyError):
            assemble_stiffness(single([[0, 0], [0.1, 0], [0.2, 0]]))


class TestMass:
    def test_partition_of_unity(self, disk1_mesh):
        M = assemble_mass(disk1_mesh)
        one = np.ones(disk1_mesh.n_vertices)
        assert one @ M @ one == pytest.approx(mesh_area(disk1_mesh), rel=1e-12)
        assert one @ M @ one == pytest.approx(2 * math.pi * (math.cosh(1) - 1), rel=0.01)
        assert np.all(M.diagonal() > 0)

    def test_origin_limit(self):
        s = 1e-5
        m = single(s * np.array([[0, 0], [1, 0], [0, 1]]))
        euclid = (0.5 * s * s) / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
        assert np.allclose(assemble_mass(m).toarray(), 4 * euclid, rtol=1e-8)

    def test_positive_definite(self, small_disk_mesh):
        M = assemble_mass(small_disk_mesh).toarray()
        la.cholesky(M)
        K = assemble_stiffness(small_disk_mesh).toarray()
        ev = np.linalg.eigvalsh(K)
        assert ev[0] > -1e-12 and ev[1] > 1e-6

    def test_quadrature_degree_insensitive(self):
        m = triangulate(DomainSpec.disk(threshold_radius()), 0.2)
        a = solve_mesh(m, k=3, mass_degree=4).eigenvalues[1]
        b = solve_mesh(m, k=3, mass_degree=7).eigenvalues[1]
        assert abs(a - b) < 1e-6


class TestDirichlet:
    def test_empty(self, disk1_mesh):
        K, M = assemble_stiffness(disk1_mesh), assemble_mass(disk1_mesh)
        dofs = DofMap.from_mesh(disk1_mesh)
        assert len(dofs.constrained) == 0
        K2, M2 = apply_dirichlet(K, M, dofs)
        assert K2 is K and M2 is M

    def test_one_vertex(self, disk1_mesh):
        K, M = assemble_stiffness(disk1_mesh), assemble_mass(disk1_mesh)
        K2, _ = apply_dirichlet(K, M, DofMap.from_constrained(disk1_mesh.n_vertices, [5]))
        assert K2.shape[0] == K.shape[0] - 1

    def test_all_constrained(self, disk1_mesh):
        K, M = assemble_stiffness(disk1_mesh), assemble_mass(disk1_mesh)
        with pytest.raises(AssemblyError):
            apply_dirichlet(K, M, DofMap.from_constrained(disk1_mesh.n_vertices, np.arange(disk1_mesh.n_vertices)))

    def test_partition_and_expand(self):
        d = DofMap.from_constrained(6, [4, 1])
        assert sorted(np.r_[d.free, d.constrained]) == list(range(6))
        out = d.expand(np.array([1.0, 2.0, 3.0, 4.0]))
        assert out[1] == 0 and out[4] == 0 and out[5] == 4.0

    def test_full_boundary_above_quarter(self):
        m = triangulate(DomainSpec.disk(3.0, dirichlet=(0, 1e3)), 0.2)
        assert solve_mesh(m, k=2).eigenvalues[0] > 0.25


class TestRayleigh:
    def test_constant(self, disk1_mesh):
        K, M = assemble_stiffness(disk1_mesh), assemble_mass(disk1_mesh)
        assert abs(rayleigh_quotient(K, M, np.ones(disk1_mesh.n_vertices))) < 1e-14

    def test_zero_vector(self, disk1_mesh):
        K, M = assemble_stiffness(disk1_mesh), assemble_mass(disk1_mesh)
        with pytest.raises(ValueError):
            rayleigh_quotient(K, M, np.zeros(disk1_mesh.n_vertices))

    def test_discrete_cutoff(self):
        eps = 1e-3
        m = cutoff_mesh(DomainSpec.disk(3.0), eps, h=0.2)
        u = cutoff_function(m.z, eps)
        q = rayleigh_quotient(assemble_stiffness(m), assemble_mass(m), u)
        assert q < 0.05

    def test_interpolated_J(self):
        # quotient of J on a disk of radius 1 against radial quadrature
        J = RadialEigenfunction.from_mu(0.2, DiskPoint(0, 0))
        num = quad(lambda r: eval_J_dr(J, r) ** 2 * math.sinh(r), 0, 1)[0]
        den = quad(lambda r: eval_J(J, r) ** 2 * math.sinh(r), 0, 1)[0]
        exact = num / den
        errs = []
        for h in (0.2, 0.1):
            m = triangulate(DomainSpec.disk(1.0), h)
            u = J.at_points(m.z)
            q = rayleigh_quotient(assemble_stiffness(m), assemble_mass(m), u)
            errs.append(abs(q - exact) / exact)
        assert errs[1] < 0.1 and errs[1] < errs[0]

    def test_J_weak_residual(self):
        # K j - mu M j vanishes against interior hats up to discretization error
        mu = 0.2
        m = triangulate(DomainSpec.disk(1.0), 0.1)
        J = RadialEigenfunction.from_mu(mu)
        j = J.at_points(m.z)
        K, M = assemble_stiffness(m), assemble_mass(m)
        r = K @ j - mu * (M @ j)
        inner = np.setdiff1d(np.arange(m.n_vertices), m.boundary_vertices())
        scale = np.abs(M @ j)[inner].max()
        assert np.abs(r[inner]).max() / scale < 0.05


def test_isometry_invariance():
    exact = disk_mu2(1.0)
    for h in (0.3, 0.15):
        a = solve_mesh(triangulate(DomainSpec.disk(1.0), h), k=3).eigenvalues[1]
        b = solve_mesh(triangulate(DomainSpec.disk(1.0, center=0.5 + 0.2j), h), k=3).eigenvalues[1]
        err = max(abs(a - exact), abs(b - exact))
        assert abs(a - b) <= 2 * err + 1e-12


def test_matrix_market(tmp_path, small_disk_mesh):
    K = assemble_stiffness(small_disk_mesh)
    p = tmp_path / "K.mtx"
    write_matrix_market(K, p)
    back = scipy.io.mmread(str(p)).tocsr()
    assert abs(back - K).max() < 1e-14


def test_smallest_pairs_used_by_fem(small_disk_mesh):
    K, M = assemble_stiffness(small_disk_mesh), assemble_mass(small_disk_mesh)
    pairs = smallest_eigenpairs(K, M, 3)
    assert abs(pairs.eigenvalues[0]) < 1e-8
