import math

import numpy as np
import pytest

from eigenlab.circle import (
    CircleMap,
    align_rotation,
    class_from_winding,
    density,
    dump_circle_map,
    load_circle_map,
    min_density,
    minimize,
    p_energy,
    p_energy_gradient,
    vertex_angles,
)
from eigenlab.errors import ClassMismatch, NoConvergence, UnsupportedTopology
from eigenlab.mesh import (
    build_flat_torus,
    build_icosphere,
    build_mapping_torus,
    conformal_scale,
    quarter_turn_permutation,
)
from eigenlab.operators import assemble_operators

TWO_PI = 2.0 * math.pi


def reference_p_energy(mesh, metric, theta_edges, edges, p, eps):
    """Independent per-cell summation: plain python loop, explicit solves."""
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    total = 0.0
    for cell, g in zip(mesh.cells, metric.cell_matrices):
        delta = []
        v0 = int(cell[0])
        for vi in cell[1:]:
            vi = int(vi)
            if v0 < vi:
                delta.append(theta_edges[lookup[(v0, vi)]])
            else:
                delta.append(-theta_edges[lookup[(vi, v0)]])
        delta = np.array(delta)
        dens = float(delta @ np.linalg.solve(g, delta))
        vol = math.sqrt(np.linalg.det(g)) / math.factorial(mesh.dim)
        total += (dens + eps * eps) ** (p / 2.0) * vol
    return total


class TestCircleClass:
    def test_axis_winding_periods(self, t3_res6):
        mesh, metric = t3_res6
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (1, 0, 0))
        for gen, expected in zip(mesh.generators, (TWO_PI, 0.0, 0.0)):
            assert ops.loop_sum(cls.theta0, gen.loop) == pytest.approx(expected, abs=1e-10)

    def test_zero_winding_is_zero_cochain(self, t3_res6):
        mesh, _ = t3_res6
        cls = class_from_winding(mesh, (0, 0, 0))
        assert np.abs(cls.theta0).max() == 0.0

    def test_theta0_closed(self, t3_res6):
        mesh, metric = t3_res6
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (2, -1, 3))
        assert np.abs(ops.face_sums(cls.theta0)).max() < 1e-12

    def test_mapping_torus_period(self):
        fiber = build_flat_torus((1.0, 1.0), (5, 5), split="crossed")
        mesh, metric = build_mapping_torus(fiber, quarter_turn_permutation(5), 6)
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (1,))
        gen = mesh.generators[0]
        assert ops.loop_sum(cls.theta0, gen.loop) == pytest.approx(TWO_PI, abs=1e-10)

    def test_unsupported_topology(self, icosphere3):
        mesh, _ = icosphere3
        with pytest.raises(UnsupportedTopology):
            class_from_winding(mesh, (1,))


class TestPEnergy:
    def test_closed_form_flat_torus(self, t3_res6):
        # oracle 1: independent per-cell summation; oracle 2: (2*pi)^3
        mesh, metric = t3_res6
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (1, 0, 0))
        cmap = CircleMap(cls, np.zeros(mesh.num_vertices))
        value = p_energy(mesh, metric, cmap, 3, 0.0, ops=ops)
        ref = reference_p_energy(mesh, metric, cls.theta0, ops.edges, 3, 0.0)
        assert value == pytest.approx(ref, rel=1e-12)
        assert value == pytest.approx(TWO_PI ** 3, rel=1e-12)

    def test_zero_class_zero_energy(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (0, 0, 0))
        cmap = CircleMap(cls, np.zeros(mesh.num_vertices))
        assert p_energy(mesh, metric, cmap, 3) == 0.0

    def test_conformal_invariance_at_p_equals_n(self, t3_res6):
        mesh, metric = t3_res6
        rng = np.random.default_rng(42)
        cls = class_from_winding(mesh, (1, 2, 0))
        cmap = CircleMap(cls, rng.standard_normal(mesh.num_vertices))
        base = p_energy(mesh, metric, cmap, 3, 0.0)
        rho = np.exp(rng.uniform(-1.0, 1.0, mesh.num_cells))
        scaled = p_energy(mesh, conformal_scale(metric, rho), cmap, 3, 0.0)
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_gauge_invariance(self, t3_res6):
        mesh, metric = t3_res6
        rng = np.random.default_rng(1)
        cls = class_from_winding(mesh, (1, 0, 0))
        phi = rng.standard_normal(mesh.num_vertices)
        a = p_energy(mesh, metric, CircleMap(cls, phi), 3, 1e-2)
        b = p_energy(mesh, metric, CircleMap(cls, phi + 0.37), 3, 1e-2)
        assert a == pytest.approx(b, rel=1e-13)

    def test_convexity(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, 0, 0))
        rng = np.random.default_rng(9)
        for p, eps in ((2.0, 0.0), (3.0, 0.0), (3.0, 1e-2), (4.0, 1e-1)):
            phi0 = rng.standard_normal(mesh.num_vertices)
            phi1 = rng.standard_normal(mesh.num_vertices)
            s = rng.uniform(0.05, 0.95)
            mid = p_energy(mesh, metric, CircleMap(cls, (1 - s) * phi0 + s * phi1), p, eps)
            chord = (1 - s) * p_energy(mesh, metric, CircleMap(cls, phi0), p, eps) \
                + s * p_energy(mesh, metric, CircleMap(cls, phi1), p, eps)
            assert mid <= chord + 1e-12 * abs(chord)


class TestGradient:
    def test_finite_difference_oracle(self):
        # central differences, step 1e-6, on random states
        mesh, metric = build_flat_torus((1.0, 1.3, 0.8), (4, 4, 4))
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (1, -1, 2))
        rng = np.random.default_rng(123)
        for trial in range(20):
            phi = rng.standard_normal(mesh.num_vertices)
            eps = [1e-2, 1e-3][trial % 2]
            cmap = CircleMap(cls, phi)
            grad = p_energy_gradient(mesh, metric, cmap, 3, eps, ops=ops)
            d = rng.standard_normal(mesh.num_vertices)
            d /= np.linalg.norm(d)
            h = 1e-6
            ep = p_energy(mesh, metric, CircleMap(cls, phi + h * d), 3, eps, ops=ops)
            em = p_energy(mesh, metric, CircleMap(cls, phi - h * d), 3, eps, ops=ops)
            fd = (ep - em) / (2 * h)
            assert fd == pytest.approx(float(grad @ d), rel=1e-5)

    def test_orthogonal_to_constants(self, t3_res6):
        mesh, metric = t3_res6
        rng = np.random.default_rng(2)
        cls = class_from_winding(mesh, (1, 1, 0))
        grad = p_energy_gradient(
            mesh, metric, CircleMap(cls, rng.standard_normal(mesh.num_vertices)), 3, 1e-2
        )
        assert abs(grad.sum()) < 1e-12 * max(1.0, np.abs(grad).max())

    def test_vanishes_at_minimizer(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, 0, 0))
        cmap, report = minimize(mesh, metric, cls, 3, 1e-8)
        assert report.grad_sup <= 1e-8 * (1.0 + abs(report.energy))


class TestMinimize:
    def test_flat_torus_closed_form(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, 0, 0))
        cmap, report = minimize(mesh, metric, cls, 3, 1e-8)
        assert report.energy == pytest.approx(TWO_PI ** 3, rel=1e-10)
        assert np.abs(cmap.phi).max() < 1e-8

    def test_energy_not_above_zero_potential(self, t3_res6):
        mesh, metric = t3_res6
        rng = np.random.default_rng(8)
        rho = np.exp(0.3 * rng.standard_normal(mesh.num_cells))
        metric2 = conformal_scale(metric, rho)
        cls = class_from_winding(mesh, (1, 1, 0))
        cmap, report = minimize(mesh, metric2, cls, 3, 1e-8)
        zero = p_energy(mesh, metric2, CircleMap(cls, np.zeros(mesh.num_vertices)), 3)
        assert report.energy <= zero + 1e-9 * zero

    def test_minimizer_conformal_invariance(self, t3_res6):
        mesh, metric = t3_res6
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (1, 0, 0))
        base_map, base = minimize(mesh, metric, cls, 3, 1e-8, ops=ops)
        rng = np.random.default_rng(77)
        rho = np.exp(rng.uniform(-1.0, 1.0, mesh.num_cells))
        other_map, other = minimize(mesh, conformal_scale(metric, rho), cls, 3, 1e-8)
        assert other.energy == pytest.approx(base.energy, rel=1e-10)
        t1, t2 = base_map.theta(ops), other_map.theta(ops)
        assert np.abs(t1 - t2).max() <= 1e-10 * np.abs(t1).max()

    def test_zero_class_constant_map(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (0, 0, 0))
        cmap, report = minimize(mesh, metric, cls, 3, 1e-8)
        assert report.energy == pytest.approx(0.0, abs=1e-12)

    def test_gauge_fixed_output(self, t3_res6):
        mesh, metric = t3_res6
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (1, 1, 1))
        rng = np.random.default_rng(4)
        cmap, _ = minimize(mesh, metric, cls, 3, 1e-8,
                           init_phi=rng.standard_normal(mesh.num_vertices), ops=ops)
        assert abs(float(ops.mass @ cmap.phi)) < 1e-10

    def test_monotone_continuation_trace(self, t3_res6):
        mesh, metric = t3_res6
        rng = np.random.default_rng(14)
        rho = np.exp(0.4 * rng.standard_normal(mesh.num_cells))
        cls = class_from_winding(mesh, (1, 0, 0))
        _, report = minimize(mesh, conformal_scale(metric, rho), cls, 3, 1e-8)
        energies = [s.energy for s in report.stages]
        assert all(a >= b - 1e-12 * abs(a) for a, b in zip(energies, energies[1:]))

    def test_no_convergence_reports(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, 0, 0))
        rng = np.random.default_rng(5)
        with pytest.raises(NoConvergence) as info:
            minimize(mesh, metric, cls, 3, 1e-12, max_iter=2,
                     init_phi=10.0 * rng.standard_normal(mesh.num_vertices))
        assert info.value.report is not None
        assert info.value.report.iterations >= 1


class TestDensity:
    def test_flat_minimizer_constant_density(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, 0, 0))
        cmap, _ = minimize(mesh, metric, cls, 3, 1e-8)
        dens = density(mesh, metric, cmap)
        assert dens == pytest.approx(4.0 * math.pi ** 2, rel=1e-12)
        assert min_density(mesh, metric, cmap) == pytest.approx(TWO_PI, rel=1e-12)

    def test_zero_class(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (0, 0, 0))
        cmap = CircleMap(cls, np.zeros(mesh.num_vertices))
        assert min_density(mesh, metric, cmap) == 0.0


class TestAlignRotation:
    def test_recovers_constant_shift(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, 0, 0))
        rng = np.random.default_rng(6)
        a = CircleMap(cls, rng.standard_normal(mesh.num_vertices))
        b = a.shifted(0.7)
        phase, dist = align_rotation(mesh, metric, b, a)
        assert phase == pytest.approx(0.7, abs=1e-12)
        assert dist < 1e-12

    def test_multistart_uniqueness(self, t3_res6):
        mesh, metric = t3_res6
        ops = assemble_operators(mesh, metric)
        cls = class_from_winding(mesh, (1, 0, 0))
        rng = np.random.default_rng(10)
        maps = [
            minimize(mesh, metric, cls, 3, 1e-10,
                     init_phi=rng.standard_normal(mesh.num_vertices), ops=ops)[0]
            for _ in range(3)
        ]
        for i in range(3):
            for j in range(i):
                _, dist = align_rotation(mesh, metric, maps[i], maps[j], ops=ops)
                assert dist <= 1e-6

    def test_class_mismatch(self, t3_res6):
        mesh, metric = t3_res6
        a = CircleMap(class_from_winding(mesh, (1, 0, 0)), np.zeros(mesh.num_vertices))
        b = CircleMap(class_from_winding(mesh, (0, 1, 0)), np.zeros(mesh.num_vertices))
        with pytest.raises(ClassMismatch):
            align_rotation(mesh, metric, a, b)


class TestAngleIntegration:
    def test_angles_match_coordinates(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, 0, 0))
        cmap = CircleMap(cls, np.zeros(mesh.num_vertices))
        alpha = vertex_angles(mesh, metric, cmap)
        expected = TWO_PI * mesh.vertex_coords[:, 0]
        # equal modulo 2*pi up to the basepoint
        diff = alpha - expected
        diff -= diff[0]
        wrapped = diff - TWO_PI * np.round(diff / TWO_PI)
        assert np.abs(wrapped).max() < 1e-10


class TestMapDump:
    def test_roundtrip(self, tmp_path, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (1, -2, 0))
        rng = np.random.default_rng(3)
        cmap = CircleMap(cls, rng.standard_normal(mesh.num_vertices))
        path = tmp_path / "map.txt"
        dump_circle_map(cmap, path)
        loaded = load_circle_map(mesh, path)
        assert loaded.winding == cmap.winding
        assert np.array_equal(loaded.phi, cmap.phi)
