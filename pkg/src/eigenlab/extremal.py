"""Turning nowhere-degenerate harmonic-type maps into extremal-metric candidates.

The pipeline: minimize the dimension-matched energy, check the density stays
above a hard floor, rescale the metric conformally by the density (making the
density identically one), then normalize to unit volume. The candidate's
eigenvalue estimate is the constant density under the normalized metric, and
the eigenmap residual certifies the map's components against the discrete
Laplacian of that metric.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .circle import CircleMap, class_from_winding, density as circle_density, minimize, vertex_angles
from .errors import DegenerateDensity, InvalidGeometry
from .mesh import MetricField, conformal_scale, volume
from .operators import assemble_operators
from .sphere import SphereMap, map_density, minimize_sphere

DENSITY_THRESHOLD = 1e-8


class ResidualReport(NamedTuple):
    residual: float
    density_variation: float


@dataclass(frozen=True)
class ExtremalCandidate:
    """Rescaled and normalized metric together with its certifying map."""

    map: object
    g_prime: MetricField
    g_hat: MetricField
    norm_scale: float
    min_density_pre: float
    eigenvalue_estimate: float
    residual: float
    density_variation: float
    volume_check: float
    solve_report: object = None

    def csv_row(self, case_id):
        return (
            case_id,
            self.min_density_pre,
            self.eigenvalue_estimate,
            self.residual,
            self.density_variation,
            self.volume_check,
        )

    CSV_COLUMNS = ("case_id", "min_density_pre", "eigenvalue_estimate",
                   "residual", "density_variation", "volume_check")


def _map_density(mesh, metric, the_map, *, ops=None):
    if isinstance(the_map, CircleMap):
        return circle_density(mesh, metric, the_map, ops=ops)
    if isinstance(the_map, SphereMap):
        return map_density(mesh, metric, the_map, ops=ops)
    raise InvalidGeometry(f"unsupported map type {type(the_map).__name__}")


def rescale_to_unit_density(mesh, metric, the_map, threshold=DENSITY_THRESHOLD):
    """Scale each cell metric by the map's density there.

    Requires density >= threshold^2 on every cell; the rescaled metric gives
    the map density identically one.
    """
    dens = _map_density(mesh, metric, the_map)
    floor = threshold * threshold
    if dens.min() < floor:
        cell = int(np.argmin(dens))
        raise DegenerateDensity(
            f"density {dens[cell]:.3e} on cell {cell} below threshold {floor:.1e}",
            cell=cell,
            value=float(dens[cell]),
        )
    return conformal_scale(metric, dens)


def normalize_volume(mesh, metric):
    """Scale the metric by vol^(-2/n) so the total volume becomes one."""
    vol = volume(mesh, metric)
    if not (vol > 0.0 and math.isfinite(vol)):
        raise InvalidGeometry(f"cannot normalize nonpositive volume {vol}")
    scale = vol ** (-2.0 / mesh.dim)
    return MetricField(metric.cell_matrices * scale, require_spd=False), scale


def eigenmap_residual(mesh, metric, the_map, *, ops=None):
    """Mass-normalized defect of the eigenmap equation for the given metric.

    Circle maps report the weak divergence defect of the angle form (the
    right-hand side is identically absorbed in the angle formulation); sphere
    maps report || K u - rho_mean M u || componentwise. Both come with the
    density variation max/min - 1.
    """
    ops = ops or assemble_operators(mesh, metric)
    dens = _map_density(mesh, metric, the_map, ops=ops)
    vols = ops.cell_volumes
    total = vols.sum()
    rho = float(np.dot(dens, vols) / total)
    dmin = float(dens.min())
    variation = float(dens.max() / dmin - 1.0) if dmin > 0 else math.inf

    if isinstance(the_map, CircleMap):
        r = ops.divergence_of_cochain(the_map.theta(ops))
        norm = math.sqrt(float((r * r / ops.mass).sum()))
        return ResidualReport(norm / (rho * math.sqrt(total)), variation)

    k = ops.stiffness
    m = ops.mass
    u = the_map.values
    r = k @ u - rho * (m[:, None] * u)
    norm = math.sqrt(float((r * r / m[:, None]).sum()))
    unorm = math.sqrt(float((m[:, None] * u * u).sum()))
    return ResidualReport(norm / (rho * unorm), variation)


def circle_map_components(mesh, metric, cmap, *, ops=None):
    """Cos/sin of the integrated angle: the eigenfunction candidates of a
    circle-valued map."""
    alpha = vertex_angles(mesh, metric, cmap, ops=ops)
    return np.stack([np.cos(alpha), np.sin(alpha)], axis=1)


def run_extremal_pipeline(mesh, metric, class_or_map, *, kind="circle", p=None,
                          tol=1e-8, threshold=DENSITY_THRESHOLD,
                          descent_steps=0, winding=None):
    """Minimize, gate on minimum density, rescale, normalize.

    ``class_or_map`` is a CircleClass (or winding tuple) for circle targets,
    or an initial SphereMap for sphere targets (descended ``descent_steps``
    projected-gradient steps before rescaling). Propagates DegenerateDensity
    and NoConvergence from the submodules.
    """
    ops = assemble_operators(mesh, metric)
    solve_report = None
    if kind == "circle":
        cls = class_or_map
        if cls is None and winding is not None:
            cls = class_from_winding(mesh, winding)
        if isinstance(cls, (tuple, list)):
            cls = class_from_winding(mesh, cls)
        the_map, solve_report = minimize(mesh, metric, cls, p=p, tol=tol, ops=ops)
    elif kind == "sphere":
        the_map = class_or_map
        if descent_steps > 0:
            result = minimize_sphere(mesh, metric, the_map, p or mesh.dim, descent_steps)
            the_map = result.map
    else:
        raise InvalidGeometry(f"unknown pipeline kind {kind!r}")

    dens = _map_density(mesh, metric, the_map, ops=ops)
    min_density_pre = math.sqrt(max(0.0, float(dens.min())))
    g_prime = rescale_to_unit_density(mesh, metric, the_map, threshold)
    g_hat, scale = normalize_volume(mesh, g_prime)
    # density one under g_prime scales by 1/scale under the normalized metric
    estimate = 1.0 / scale
    res = eigenmap_residual(mesh, g_hat, the_map)
    return ExtremalCandidate(
        map=the_map,
        g_prime=g_prime,
        g_hat=g_hat,
        norm_scale=scale,
        min_density_pre=min_density_pre,
        eigenvalue_estimate=estimate,
        residual=res.residual,
        density_variation=res.density_variation,
        volume_check=volume(mesh, g_hat),
        solve_report=solve_report,
    )
