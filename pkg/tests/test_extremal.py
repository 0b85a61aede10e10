import math

import numpy as np
import pytest

from eigenlab.circle import CircleMap, class_from_winding, density, minimize
from eigenlab.errors import DegenerateDensity, InvalidGeometry
from eigenlab.extremal import (
    eigenmap_residual,
    normalize_volume,
    rescale_to_unit_density,
    run_extremal_pipeline,
)
from eigenlab.mesh import (
    MetricField,
    build_flat_torus,
    build_mapping_torus,
    conformal_scale,
    quarter_turn_permutation,
    volume,
)
from eigenlab.sphere import SphereMap, normalized, projection_map

FOUR_PI_SQ = 4.0 * math.pi ** 2


@pytest.fixture(scope="module")
def t3_minimizer(t3_res6):
    mesh, metric = t3_res6
    cls = class_from_winding(mesh, (1, 0, 0))
    cmap, _ = minimize(mesh, metric, cls, 3, 1e-8)
    return mesh, metric, cmap


class TestRescale:
    def test_constant_density_scales_metric(self, t3_minimizer):
        mesh, metric, cmap = t3_minimizer
        g_prime = rescale_to_unit_density(mesh, metric, cmap)
        expected = FOUR_PI_SQ * metric.cell_matrices
        assert np.abs(g_prime.cell_matrices - expected).max() < 1e-12 * FOUR_PI_SQ
        assert volume(mesh, g_prime) == pytest.approx(FOUR_PI_SQ ** 1.5, rel=1e-12)

    def test_density_becomes_one(self, t3_minimizer):
        mesh, metric, cmap = t3_minimizer
        g_prime = rescale_to_unit_density(mesh, metric, cmap)
        dens = density(mesh, g_prime, cmap)
        assert np.abs(dens - 1.0).max() < 1e-12

    def test_density_one_after_random_conformal_start(self, t3_res6):
        mesh, metric = t3_res6
        rng = np.random.default_rng(3)
        metric2 = conformal_scale(metric, np.exp(rng.uniform(-0.5, 0.5, mesh.num_cells)))
        cls = class_from_winding(mesh, (1, 1, 0))
        cmap, _ = minimize(mesh, metric2, cls, 3, 1e-8)
        g_prime = rescale_to_unit_density(mesh, metric2, cmap)
        assert np.abs(density(mesh, g_prime, cmap) - 1.0).max() < 1e-12

    def test_zero_class_degenerate(self, t3_res6):
        mesh, metric = t3_res6
        cls = class_from_winding(mesh, (0, 0, 0))
        cmap = CircleMap(cls, np.zeros(mesh.num_vertices))
        with pytest.raises(DegenerateDensity) as info:
            rescale_to_unit_density(mesh, metric, cmap)
        assert info.value.value == 0.0


class TestNormalizeVolume:
    def test_volume_eight_gives_quarter_scale(self):
        mesh, metric = build_flat_torus((2.0, 2.0, 2.0), (4, 4, 4))
        assert volume(mesh, metric) == pytest.approx(8.0, rel=1e-13)
        normalized_metric, scale = normalize_volume(mesh, metric)
        assert scale == pytest.approx(0.25, rel=1e-13)
        assert volume(mesh, normalized_metric) == pytest.approx(1.0, abs=1e-12)

    def test_unit_volume_unchanged(self, t3_res6):
        mesh, metric = t3_res6
        normalized_metric, scale = normalize_volume(mesh, metric)
        assert scale == pytest.approx(1.0, abs=1e-13)
        assert np.abs(normalized_metric.cell_matrices - metric.cell_matrices).max() < 1e-14

    def test_idempotent(self, t3_res6):
        mesh, metric = t3_res6
        scaled = MetricField(metric.cell_matrices * 3.7, require_spd=False)
        once, _ = normalize_volume(mesh, scaled)
        twice, scale2 = normalize_volume(mesh, once)
        assert abs(scale2 - 1.0) < 1e-14
        assert np.abs(twice.cell_matrices - once.cell_matrices).max() < 1e-14


class TestEigenmapResidual:
    def test_projection_product_metric(self, s1_x_s2):
        mesh, metric = s1_x_s2
        rep = eigenmap_residual(mesh, metric, projection_map(mesh))
        assert rep.residual < 0.02
        assert rep.density_variation < 0.02

    def test_random_map_not_an_eigenmap(self, s1_x_s2):
        mesh, metric = s1_x_s2
        rng = np.random.default_rng(8)
        rand = SphereMap(normalized(rng.standard_normal((mesh.num_vertices, 3))))
        rep = eigenmap_residual(mesh, metric, rand)
        assert rep.residual > 0.1

    def test_flat_torus_candidate(self, t3_minimizer):
        mesh, metric, cmap = t3_minimizer
        g_prime = rescale_to_unit_density(mesh, metric, cmap)
        g_hat, _ = normalize_volume(mesh, g_prime)
        rep = eigenmap_residual(mesh, g_hat, cmap)
        assert rep.residual <= 1e-6


class TestPipeline:
    def test_flat_torus_closed_form(self, t3_res12):
        mesh, metric = t3_res12
        cand = run_extremal_pipeline(mesh, metric, (1, 0, 0), kind="circle")
        assert cand.eigenvalue_estimate == pytest.approx(FOUR_PI_SQ, rel=1e-10)
        assert cand.residual <= 1e-6
        assert cand.min_density_pre == pytest.approx(2.0 * math.pi, rel=1e-10)
        assert cand.volume_check == pytest.approx(1.0, abs=1e-12)

    def test_conformal_perturbation_same_candidate(self, t3_res6):
        mesh, metric = t3_res6
        base = run_extremal_pipeline(mesh, metric, (1, 0, 0), kind="circle")
        rng = np.random.default_rng(12)
        omega = 0.05 * (2.0 * rng.random(mesh.num_cells) - 1.0)
        pert = conformal_scale(metric, np.exp(2.0 * omega))
        cand = run_extremal_pipeline(mesh, pert, (1, 0, 0), kind="circle")
        assert cand.eigenvalue_estimate == pytest.approx(
            base.eigenvalue_estimate, rel=1e-8
        )
        assert cand.residual <= 1e-6
        # the normalized metric itself coincides: rescaling removes the factor
        assert np.abs(
            cand.g_hat.cell_matrices - base.g_hat.cell_matrices
        ).max() < 1e-10

    def test_mapping_torus_quarter_turn(self):
        fiber = build_flat_torus((1.0, 1.0), (6, 6), split="crossed")
        mesh, metric = build_mapping_torus(fiber, quarter_turn_permutation(6), 6)
        cand = run_extremal_pipeline(mesh, metric, (1,), kind="circle")
        assert cand.residual <= 1e-6
        assert cand.density_variation < 1e-12
        assert cand.eigenvalue_estimate == pytest.approx(FOUR_PI_SQ, rel=1e-10)

    def test_scale_equivariance(self, t3_res6):
        mesh, metric = t3_res6
        base = run_extremal_pipeline(mesh, metric, (1, 0, 0), kind="circle")
        scaled_metric = MetricField(metric.cell_matrices * 5.0, require_spd=False)
        cand = run_extremal_pipeline(mesh, scaled_metric, (1, 0, 0), kind="circle")
        assert np.abs(
            cand.g_hat.cell_matrices - base.g_hat.cell_matrices
        ).max() < 1e-12 * np.abs(base.g_hat.cell_matrices).max()

    def test_sphere_pipeline_projection(self, s1_x_s2):
        mesh, metric = s1_x_s2
        cand = run_extremal_pipeline(
            mesh, metric, projection_map(mesh), kind="sphere"
        )
        assert cand.residual < 0.02
        assert cand.density_variation < 0.02
        assert cand.volume_check == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_winding_propagates(self, t3_res6):
        mesh, metric = t3_res6
        with pytest.raises(DegenerateDensity):
            run_extremal_pipeline(mesh, metric, (0, 0, 0), kind="circle")

    def test_residual_within_solver_tolerance_margin(self, t3_res6):
        mesh, metric = t3_res6
        cand = run_extremal_pipeline(mesh, metric, (1, 0, 0), kind="circle", tol=1e-8)
        assert cand.residual <= 10.0 * 1e-8
