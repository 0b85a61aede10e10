import math

import numpy as np
import pytest

from eigenlab.errors import InvalidGeometry, SpectrumTooShallow
from eigenlab.extremal import circle_map_components, run_extremal_pipeline
from eigenlab.mesh import (
    MetricField,
    build_flat_torus,
    build_mapping_torus,
    conformal_scale,
)
from eigenlab.spectrum import (
    cluster_eigenvalues,
    eigenvalue_functional,
    extremality_gap_check,
    laplace_spectrum,
)

FOUR_PI_SQ = 4.0 * math.pi ** 2


@pytest.fixture(scope="module")
def t3_spectrum(t3_res12):
    return laplace_spectrum(*t3_res12, 10)


@pytest.fixture(scope="module")
def sphere_spectrum(icosphere3):
    return laplace_spectrum(*icosphere3, 8)


class TestLaplaceSpectrum:
    def test_torus_first_cluster(self, t3_spectrum):
        # oracle: flat-torus spectrum 4*pi^2*|k|^2, first cluster multiplicity 6
        vals = t3_spectrum.eigenvalues
        assert vals[0] < 1e-8
        assert np.all(np.diff(vals) > -1e-12)
        cluster = vals[1:7]
        assert np.all(np.abs(cluster / FOUR_PI_SQ - 1.0) < 0.03)
        width = cluster.max() - cluster.min()
        assert width < 1e-8 * cluster.mean()
        assert vals[7] > 1.5 * cluster.mean()

    def test_constant_ground_mode(self, t3_spectrum):
        vec = t3_spectrum.eigenvectors[:, 0]
        mass = t3_spectrum.mass
        const = np.ones(len(vec)) / math.sqrt(mass.sum())
        corr = abs(float(vec @ (mass * const)))
        assert corr > 1.0 - 1e-6

    def test_sphere_first_cluster(self, sphere_spectrum):
        # oracle: round-sphere spectrum l(l+1): first cluster at 2, multiplicity 3
        vals = sphere_spectrum.eigenvalues
        assert vals[0] < 1e-8
        cluster = vals[1:4]
        assert np.all(np.abs(cluster / 2.0 - 1.0) < 0.03)
        assert vals[4] > 2.5

    def test_mass_orthonormality(self, t3_spectrum):
        assert t3_spectrum.orthonormality_defect() < 1e-8

    def test_residuals_small(self, t3_spectrum):
        assert t3_spectrum.residuals.max() < 1e-8

    def test_nonnegative(self, t3_spectrum, sphere_spectrum):
        assert t3_spectrum.eigenvalues.min() > -1e-10
        assert sphere_spectrum.eigenvalues.min() > -1e-10

    def test_count_validation(self, t3_res6):
        with pytest.raises(InvalidGeometry):
            laplace_spectrum(*t3_res6, 0)

    def test_scale_invariance_after_normalization(self, t3_res6):
        mesh, metric = t3_res6
        lam = eigenvalue_functional(mesh, metric, 1)
        scaled = MetricField(metric.cell_matrices * 7.3, require_spd=False)
        lam2 = eigenvalue_functional(mesh, scaled, 1)
        assert lam2 == pytest.approx(lam, rel=1e-10)

    def test_mapping_torus_identity_matches_flat_torus(self):
        fiber = build_flat_torus((1.0, 1.0), (5, 5))
        mt = build_mapping_torus(fiber, np.arange(25), 5)
        t3 = build_flat_torus((1.0, 1.0, 1.0), (5, 5, 5))
        v1 = laplace_spectrum(*mt, 8).eigenvalues
        v2 = laplace_spectrum(*t3, 8).eigenvalues
        assert np.abs(v1 - v2).max() < 1e-10


class TestClustering:
    def test_groups_degenerate_values(self):
        vals = np.array([1e-14, 38.58, 38.58 + 1e-10, 77.2, 77.2, 78.9])
        labels = cluster_eigenvalues(vals, 0.02)
        assert labels.tolist() == [0, 1, 1, 2, 2, 3]

    def test_zero_cluster_merges(self):
        vals = np.array([1e-14, 3e-13, 40.0])
        labels = cluster_eigenvalues(vals, 0.02)
        assert labels.tolist() == [0, 0, 1]


class TestGapCheck:
    def test_flat_torus_candidate(self, t3_res12):
        mesh, metric = t3_res12
        cand = run_extremal_pipeline(mesh, metric, (1, 0, 0), kind="circle")
        spec = laplace_spectrum(mesh, cand.g_hat, 10)
        comps = circle_map_components(mesh, cand.g_hat, cand.map)
        gap = extremality_gap_check(
            mesh, cand.g_hat, spec, comps, cand.eigenvalue_estimate, cluster_tol=0.05
        )
        assert gap.cluster_multiplicity == 6
        assert gap.match_residual < 1e-3
        assert gap.gap_below > 0
        assert gap.gap_above > 0

    def test_sphere_coordinate_components(self, icosphere3, sphere_spectrum):
        mesh, metric = icosphere3
        gap = extremality_gap_check(
            mesh, metric, sphere_spectrum, mesh.vertex_positions, 2.0, cluster_tol=0.05
        )
        assert gap.cluster_multiplicity == 3
        assert gap.match_residual < 1e-3
        assert gap.gap_below > 0

    def test_random_component_rejected(self, icosphere3, sphere_spectrum):
        mesh, metric = icosphere3
        rng = np.random.default_rng(0)
        gap = extremality_gap_check(
            mesh, metric, sphere_spectrum,
            rng.standard_normal(mesh.num_vertices), 2.0, cluster_tol=0.05,
        )
        assert gap.match_residual > 0.5

    def test_unbracketed_candidate(self, icosphere3, sphere_spectrum):
        mesh, metric = icosphere3
        with pytest.raises(SpectrumTooShallow):
            extremality_gap_check(
                mesh, metric, sphere_spectrum, mesh.vertex_positions, 500.0
            )


class TestEigenvalueFunctional:
    def test_torus_lambda_one(self, t3_res12):
        mesh, metric = t3_res12
        lam = eigenvalue_functional(mesh, metric, 1)
        assert lam == pytest.approx(FOUR_PI_SQ, rel=0.03)

    def test_lambda_zero(self, t3_res6):
        mesh, metric = t3_res6
        assert abs(eigenvalue_functional(mesh, metric, 0)) < 1e-8

    def test_conformal_scaling_changes_value(self, t3_res6):
        # sanity: a genuine conformal factor moves lambda_1, constants do not
        mesh, metric = t3_res6
        lam = eigenvalue_functional(mesh, metric, 1)
        rng = np.random.default_rng(4)
        rho = np.exp(rng.uniform(-0.5, 0.5, mesh.num_cells))
        lam2 = eigenvalue_functional(mesh, conformal_scale(metric, rho), 1)
        assert lam2 != pytest.approx(lam, rel=1e-6)
