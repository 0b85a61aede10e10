"""Seed-derived smooth perturbation fields for metric stability sweeps.

Fields are finite trigonometric sums in the mesh's periodic chart coordinates
with coefficients drawn from a seeded generator and sup-norm scaled to the
requested amplitude: a reproducible, mesh-independent stand-in for smooth
metric deformations.
"""

import itertools

import numpy as np

from .errors import UnsupportedTopology
from .mesh import MetricField, conformal_scale


def _mode_vectors(dim, frequency):
    modes = []
    for k in itertools.product(range(-frequency, frequency + 1), repeat=dim):
        if all(v == 0 for v in k):
            continue
        # one representative per +-k pair
        if k > tuple(-v for v in k):
            continue
        modes.append(k)
    return modes


def trig_field(points, periods, seed, frequency=2):
    """Smooth random field on periodic chart points, sup-normalized to 1."""
    pts = np.asarray(points, float)
    periods = np.asarray(periods, float)
    u = pts / periods
    rng = np.random.default_rng(seed)
    values = np.zeros(len(pts))
    for k in _mode_vectors(pts.shape[1], frequency):
        phase = 2.0 * np.pi * (u @ np.asarray(k, float))
        a, b = rng.standard_normal(2)
        values += a * np.cos(phase) + b * np.sin(phase)
    sup = np.abs(values).max()
    if sup == 0.0:
        return values
    return values / sup


def _require_chart(mesh):
    if mesh.cell_vertex_coords is None or mesh.coord_periods is None:
        raise UnsupportedTopology(
            "perturbation fields need periodic chart coordinates on the mesh"
        )
    return mesh.cell_vertex_coords.mean(axis=1), mesh.coord_periods


def conformal_perturbation(mesh, metric, amplitude, seed, frequency=2):
    """Per-cell conformal factors exp(eps * f) with a smooth bump field f."""
    centroids, periods = _require_chart(mesh)
    f = trig_field(centroids, periods, seed, frequency)
    return conformal_scale(metric, np.exp(amplitude * f))


def general_perturbation(mesh, metric, amplitude, seed, frequency=2):
    """g + eps * h for a random smooth symmetric coordinate tensor field h
    with sup spectral norm 1, pulled back to each cell's edge chart."""
    centroids, periods = _require_chart(mesh)
    dim = mesh.dim
    comps = {}
    for offset, (i, j) in enumerate(
        (i, j) for i in range(dim) for j in range(i, dim)
    ):
        comps[(i, j)] = trig_field(centroids, periods, [int(seed), offset], frequency)
    h = np.zeros((mesh.num_cells, dim, dim))
    for (i, j), vals in comps.items():
        h[:, i, j] = vals
        h[:, j, i] = vals
    # scale the whole field to unit sup spectral norm
    spectral = np.abs(np.linalg.eigvalsh(h)).max()
    if spectral > 0:
        h /= spectral
    # cell edge vectors in chart coordinates
    lifts = mesh.cell_vertex_coords
    edges = lifts[:, 1:, :] - lifts[:, :1, :]
    delta = np.einsum("cia,cab,cjb->cij", edges, h, edges)
    return MetricField(metric.cell_matrices + amplitude * delta)


def perturbed_metric(mesh, metric, mode, amplitude, seed, frequency=2):
    if amplitude < 0:
        raise UnsupportedTopology("perturbation amplitude must be >= 0")
    if amplitude == 0:
        return metric
    if mode == "conformal":
        return conformal_perturbation(mesh, metric, amplitude, seed, frequency)
    if mode == "general":
        return general_perturbation(mesh, metric, amplitude, seed, frequency)
    raise UnsupportedTopology(f"unknown perturbation mode {mode!r}")


def random_smooth_potential(mesh, amplitude, seed, frequency=2):
    """Smooth random vertex potential, used for multistart initial guesses."""
    if mesh.vertex_coords is None or mesh.coord_periods is None:
        rng = np.random.default_rng(seed)
        return amplitude * rng.standard_normal(mesh.num_vertices)
    f = trig_field(mesh.vertex_coords, mesh.coord_periods, seed, frequency)
    return amplitude * f
