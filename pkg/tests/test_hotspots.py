import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy.integrate import quad

from hypspots.eigen import solve_mesh
from hypspots.geometry import DiskPoint
from hypspots.hotspots import (
    CONSISTENT,
    NOT_MET,
    VIOLATION,
    analyze_hotspots,
    count_nodal_domains,
    critical_vertices,
    cutoff_energy_closed_form,
    cutoff_function,
    cutoff_rayleigh,
    ideal_polygon_sweep,
    mixed_arc_experiment,
    nodal_set,
    proof_witness,
    recover_gradient,
    verify_domain,
    write_svg,
)
from hypspots.mesh import DomainSpec, TriMesh, mesh_area, red_refine, triangulate
from hypspots.special import RadialEigenfunction, eval_J_dr


def fan(radius=0.05, n=6):
    ang = 2 * math.pi * np.arange(n) / n
    pts = np.r_[[[0.0, 0.0]], radius * np.c_[np.cos(ang), np.sin(ang)]]
    tris = np.array([[0, 1 + i, 1 + (i + 1) % n] for i in range(n)])
    bnd = np.array([[1 + i, 1 + (i + 1) % n] for i in range(n)])
    return TriMesh(pts, tris, bnd, np.ones(n, int), 0.1)


@pytest.fixture(scope="module")
def disk3_pairs(disk3_mesh):
    return solve_mesh(disk3_mesh, k=4)


def center_vertex(m):
    return int(np.argmin(np.abs(m.z)))


class TestGradient:
    def test_constant(self, disk1_mesh):
        g = recover_gradient(disk1_mesh, np.full(disk1_mesh.n_vertices, 3.0))
        assert np.max(g.hyperbolic_magnitude) < 1e-12

    def test_linear_at_origin(self):
        m = fan()
        g = recover_gradient(m, m.points[:, 0])
        assert np.allclose(g.euclidean[0], [1.0, 0.0], atol=1e-14)
        assert g.hyperbolic_magnitude[0] == pytest.approx(0.5, abs=1e-14)

    def test_linear_reproduced(self, disk1_mesh):
        u = 2.0 * disk1_mesh.points[:, 0] - 0.5 * disk1_mesh.points[:, 1]
        g = recover_gradient(disk1_mesh, u)
        assert np.allclose(g.euclidean, [2.0, -0.5], atol=1e-12)
        assert np.all(g.hyperbolic_magnitude >= 0)

    def test_radial_derivative_of_J(self):
        J = RadialEigenfunction.from_mu(0.2)
        errs = []
        m = triangulate(DomainSpec.disk(2.0), 0.4)
        for _ in range(4):
            u = J.at_points(m.z)
            g = recover_gradient(m, u).hyperbolic_magnitude
            r = 2 * np.arctanh(np.abs(m.z))
            errs.append(np.max(np.abs(g - np.abs(eval_J_dr(J, r)))))
            m = red_refine(m)
        assert all(a > b for a, b in zip(errs, errs[1:]))
        # first order, reached from below on the finest pair
        assert math.log2(errs[-2] / errs[-1]) >= 0.9
        assert errs[-1] < 0.005


class TestNodal:
    def test_constant(self, disk1_mesh):
        u = np.ones(disk1_mesh.n_vertices)
        assert nodal_set(disk1_mesh, u) == []
        assert count_nodal_domains(disk1_mesh, u) == 1

    def test_linear(self, disk1_mesh):
        u = disk1_mesh.points[:, 0]
        lines = nodal_set(disk1_mesh, u)
        assert len(lines) == 1
        pts = lines[0]
        assert np.max(np.abs(pts.real)) < 1e-12
        rho = math.tanh(0.5)
        assert np.max(np.abs(pts.imag)) > 0.95 * rho and np.min(pts.imag) < -0.95 * rho
        assert count_nodal_domains(disk1_mesh, u) == 2

    def test_eigenfunctions(self, disk3_mesh, disk3_pairs):
        V = disk3_pairs.full_vectors()
        assert count_nodal_domains(disk3_mesh, V[:, 0]) == 1
        assert count_nodal_domains(disk3_mesh, V[:, 1]) == 2
        for i in range(V.shape[1]):
            assert count_nodal_domains(disk3_mesh, V[:, i]) <= i + 1


class TestCritical:
    def test_peak_and_saddle(self):
        m = triangulate(DomainSpec.disk(1.5), 0.15)
        p = center_vertex(m)
        z0 = m.z[p]
        ext, sad = critical_vertices(m, RadialEigenfunction.from_mu(0.2, DiskPoint.from_complex(z0)).at_points(m.z))
        assert list(ext) == [p] and len(sad) == 0
        w = m.z - z0
        ext, sad = critical_vertices(m, w.real**2 - w.imag**2 + 1e-3 * w.real * w.imag)
        assert list(sad) == [p] and len(ext) == 0
        ext, sad = critical_vertices(m, m.points[:, 0] + 0.3 * m.points[:, 1])
        assert len(ext) == 0 and len(sad) == 0


class TestAnalyze:
    def test_disk3(self, disk3_mesh, disk3_pairs):
        rep = analyze_hotspots(disk3_mesh, disk3_pairs, 2)
        assert rep.verdict == CONSISTENT
        assert rep.problem == "neumann"
        assert rep.mu2_or_lambda1 < 0.25
        assert rep.nodal_domain_count == 2
        assert rep.max_boundary_distance <= 2 * disk3_mesh.target_h
        assert rep.min_boundary_distance <= 2 * disk3_mesh.target_h
        zmax, zmin = complex(*rep.max_point), complex(*rep.min_point)
        assert abs(zmax + zmin) < 0.05
        # the multiplicity-two eigenspace is analyzed as a whole
        assert [d["index"] for d in rep.eigenspace] == [2, 3]
        json.loads(rep.to_json())

    def test_small_disk_not_met(self):
        m = triangulate(DomainSpec.disk(0.5), 0.1)
        rep = analyze_hotspots(m, solve_mesh(m, k=4), 2)
        assert rep.mu2_or_lambda1 > 0.25
        assert rep.verdict == NOT_MET

    def test_nonconvex_not_met(self):
        l_shape = [[-0.4, -0.4], [0.5, -0.4], [0.5, 0.05], [0.05, 0.05], [0.05, 0.5], [-0.4, 0.5]]
        m = triangulate(DomainSpec.polygon(l_shape, edges="euclidean"), 0.1)
        rep = analyze_hotspots(m, solve_mesh(m, k=4), 2)
        assert not rep.convex and rep.verdict == NOT_MET

    def test_strict_tau_gives_violation(self, disk3_mesh, disk3_pairs):
        rep = analyze_hotspots(disk3_mesh, disk3_pairs, 2, tau=0.45)
        assert rep.verdict == VIOLATION

    def test_index_errors(self, disk3_mesh, disk3_pairs):
        with pytest.raises(IndexError):
            analyze_hotspots(disk3_mesh, disk3_pairs, 9)
        with pytest.raises(IndexError):
            analyze_hotspots(disk3_mesh, disk3_pairs, 0)

    def test_mixed_positive(self):
        m = triangulate(DomainSpec.disk(2.0, dirichlet=(-0.5, 0.5)), 0.15)
        pairs = solve_mesh(m, k=3)
        u = pairs.full_vectors()[:, 0]
        inner = np.setdiff1d(np.arange(m.n_vertices), m.boundary_vertices())
        assert np.all(u[inner] > 0)
        rep = analyze_hotspots(m, pairs, 1)
        assert rep.problem == "mixed" and rep.verdict == CONSISTENT
        assert rep.nodal_domain_count == 1
        with pytest.raises(IndexError):
            analyze_hotspots(m, pairs, 2)

    def test_verify_remeshes(self):
        rep, m, _ = verify_domain(DomainSpec.disk(3.0), h=0.3, tau=0.45)
        assert rep.verdict == VIOLATION
        assert m.target_h == pytest.approx(0.15)
        assert any("re-meshed" in n for n in rep.notes)


class TestWitness:
    def test_vanishes_at_basepoint(self, disk3_mesh, disk3_pairs):
        u = disk3_pairs.full_vectors()[:, 1]
        p = int(np.argmax(u))
        w = proof_witness(disk3_mesh, u, 0.2, p)
        assert w.values[p] == 0.0
        assert w.basepoint == DiskPoint(*disk3_mesh.points[p])

    def test_self_cancellation(self, disk3_mesh):
        p = center_vertex(disk3_mesh)
        bp = DiskPoint(*disk3_mesh.points[p])
        u = RadialEigenfunction.from_mu(0.2, bp).at_points(disk3_mesh.z)
        w = proof_witness(disk3_mesh, u, 0.2, bp)
        assert np.max(np.abs(w.values)) < 1e-12

    def test_gradient_at_critical_point(self):
        m = triangulate(DomainSpec.disk(2.0), 0.1)
        p = center_vertex(m)
        bp = DiskPoint(*m.points[p])
        u = 0.7 * RadialEigenfunction.from_mu(0.1, bp).at_points(m.z)
        w = proof_witness(m, u, 0.2, p)
        rec_u = recover_gradient(m, u).hyperbolic_magnitude[p]
        rec_j = recover_gradient(m, RadialEigenfunction.from_mu(0.2, bp).at_points(m.z)).hyperbolic_magnitude[p]
        err = rec_u + u[p] * rec_j
        assert recover_gradient(m, w.values).hyperbolic_magnitude[p] <= 2 * err + 1e-15

    def test_errors(self, disk3_mesh, disk3_pairs):
        u = disk3_pairs.full_vectors()[:, 1]
        with pytest.raises(ValueError):
            proof_witness(disk3_mesh, u, 0.2, int(np.argmin(u)))
        with pytest.raises(ValueError):
            proof_witness(disk3_mesh, u, 0.3, int(np.argmax(u)))
        with pytest.raises(ValueError):
            proof_witness(disk3_mesh, u, 0.2, DiskPoint(0.123456, 0.0))


class TestCutoff:
    @pytest.mark.parametrize("eps", [1e-2, 1e-6])
    def test_energy(self, eps):
        e, _ = cutoff_rayleigh(eps)
        oracle = quad(lambda r: 2 * math.pi * r / (r * math.log(math.sqrt(eps))) ** 2, eps, math.sqrt(eps),
                      epsabs=0, epsrel=1e-12)[0]
        assert oracle == pytest.approx(cutoff_energy_closed_form(eps), rel=1e-10)
        assert e == pytest.approx(oracle, rel=5e-3)

    def test_energy_decreases(self):
        assert cutoff_rayleigh(1e-6)[0] < cutoff_rayleigh(1e-2)[0]
        assert cutoff_energy_closed_form(1e-2) == pytest.approx(2.729, abs=1e-3)
        assert cutoff_energy_closed_form(1e-6) == pytest.approx(0.9095, abs=1e-4)

    def test_mass(self):
        spec = DomainSpec.disk(3.0)
        _, mass = cutoff_rayleigh(1e-6, spec)
        assert mass == pytest.approx(mesh_area(triangulate(spec, 0.1)), rel=0.01)

    def test_profile(self):
        eps = 1e-4
        assert cutoff_function(np.array([0.5 * eps]), eps)[0] == 0.0
        assert cutoff_function(np.array([eps]), eps)[0] == pytest.approx(0.0, abs=1e-15)
        assert cutoff_function(np.array([math.sqrt(eps)]), eps)[0] == pytest.approx(1.0)
        assert cutoff_function(np.array([0.5]), eps)[0] == 1.0

    def test_range(self):
        with pytest.raises(ValueError):
            cutoff_rayleigh(0.0)
        with pytest.raises(ValueError):
            cutoff_rayleigh(1.5)


class TestExperiments:
    def test_mixed_small(self):
        rows = mixed_arc_experiment(DomainSpec.disk(1.0), [4.0, 1.0], h=0.25)
        assert [r["arc_length"] for r in rows] == [4.0, 1.0]
        assert rows[1]["lambda1"] < rows[0]["lambda1"]
        assert rows[0]["report"]["problem"] == "mixed"

    def test_ideal_sweep_threads(self, monkeypatch):
        seq = ideal_polygon_sweep([3], [2.0, 3.0], h=0.3)
        monkeypatch.setenv("HYPSPOTS_THREADS", "2")
        par = ideal_polygon_sweep([3], [2.0, 3.0], h=0.3)
        assert [r["mu2"] for r in seq] == [r["mu2"] for r in par]
        assert seq[0]["trend"] is None and seq[1]["trend"] == pytest.approx(seq[1]["mu2"] - seq[0]["mu2"])


def test_svg(tmp_path, disk3_mesh, disk3_pairs):
    p = tmp_path / "u.svg"
    write_svg(disk3_mesh, disk3_pairs.full_vectors()[:, 1], p, levels=3, draw_mesh=True)
    root = ET.parse(p).getroot()
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) >= 1
