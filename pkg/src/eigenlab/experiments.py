"""Config-driven experiment drivers behind the command-line interface.

Each command builds its case from an :class:`~eigenlab.config.ExperimentConfig`,
runs the corresponding pipeline, and writes CSV (and SVG) artifacts with
deterministic bytes: fixed row order, shortest round-trip float formatting,
and seeded randomness only.
"""

import logging
import math
import os

import numpy as np

from . import circle, extremal, perturb, sphere, spectrum as spectrum_mod
from .config import ExperimentConfig
from .errors import (
    ConfigError,
    DegenerateConformalFactor,
    DegenerateDensity,
    EigensolverFailure,
    InvalidGeometry,
    LabError,
    NoConvergence,
    SpectrumTooShallow,
)
from .mesh import (
    build_flat_circle,
    build_flat_torus,
    build_icosphere,
    build_mapping_torus,
    build_product,
    dump_mesh,
    quarter_turn_permutation,
    volume,
)
from .operators import assemble_operators
from .svgplot import write_loglog_plot

logger = logging.getLogger("eigenlab")

SWEEP_COLUMNS = ("amplitude", "seed", "min_density_pre", "energy",
                 "eigenvalue_estimate", "eigenmap_residual",
                 "gap_below", "gap_above", "status")
BOUND_COLUMNS = ("s", "mesh_size", "E_projection", "bound", "relative_gap",
                 "order", "min_perturbed_energy")
UNIQ_COLUMNS = ("start_i", "start_j", "phase", "distance")
SPECTRUM_COLUMNS = ("index", "eigenvalue", "cluster_id", "residual")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) for x in row) + "\n")


def build_case(cfg: ExperimentConfig):
    """Mesh + metric + winding for the configured case."""
    if cfg.kind == "flat_torus":
        mesh, metric = build_flat_torus(cfg.periods, cfg.resolution, cfg.split)
        return mesh, metric, tuple(cfg.winding)
    if cfg.kind == "product_sphere":
        circ = build_flat_circle(cfg.circle_length, cfg.circle_segments)
        ico = build_icosphere(cfg.subdivisions)
        mesh, metric = build_product(circ, ico)
        return mesh, metric, None
    if cfg.kind == "mapping_torus":
        fiber = build_flat_torus(cfg.fiber_periods, cfg.fiber_resolution, cfg.fiber_split)
        nfv = fiber[0].num_vertices
        if cfg.twist == "identity":
            phi = np.arange(nfv)
        else:
            if cfg.fiber_split != "crossed" or cfg.fiber_resolution[0] != cfg.fiber_resolution[1]:
                raise ConfigError(
                    "quarter_turn twist needs a square crossed fiber grid"
                )
            phi = quarter_turn_permutation(cfg.fiber_resolution[0])
        mesh, metric = build_mapping_torus(fiber, phi, cfg.segments)
        w = cfg.winding if len(cfg.winding) == 1 else (1,)
        return mesh, metric, tuple(w)
    raise ConfigError(f"unknown case kind {cfg.kind!r}")


def _candidate_and_gap(cfg, mesh, metric, winding):
    """Run the pipeline and certify the candidate against the spectrum."""
    if cfg.kind == "product_sphere":
        cand = extremal.run_extremal_pipeline(
            mesh, metric, sphere.projection_map(mesh), kind="sphere",
            p=mesh.dim, tol=cfg.tol,
        )
        components = cand.map.values
    else:
        cand = extremal.run_extremal_pipeline(
            mesh, metric, winding, kind="circle", p=cfg.p, tol=cfg.tol,
        )
        components = extremal.circle_map_components(mesh, cand.g_hat, cand.map)
    spec = spectrum_mod.laplace_spectrum(mesh, cand.g_hat, cfg.spectrum_count)
    gap = spectrum_mod.extremality_gap_check(
        mesh, cand.g_hat, spec, components, cand.eigenvalue_estimate, cfg.cluster_tol
    )
    return cand, gap


def cmd_pipeline(cfg: ExperimentConfig, out_dir):
    """Build, minimize, rescale, normalize; write candidate + gap CSV rows."""
    mesh, metric, winding = build_case(cfg)
    cand, gap = _candidate_and_gap(cfg, mesh, metric, winding)
    write_csv(
        os.path.join(out_dir, "candidate.csv"),
        extremal.ExtremalCandidate.CSV_COLUMNS,
        [cand.csv_row(cfg.case_id)],
    )
    write_csv(
        os.path.join(out_dir, "gap.csv"),
        spectrum_mod.GapReport.CSV_COLUMNS,
        [gap.csv_row()],
    )
    if isinstance(cand.map, circle.CircleMap):
        circle.dump_circle_map(cand.map, os.path.join(out_dir, "map.txt"))
    else:
        sphere.dump_sphere_map(cand.map, os.path.join(out_dir, "map.txt"))
    logger.info(
        "pipeline %s: eigenvalue %.6g, residual %.3e, gap below %.4g",
        cfg.case_id, cand.eigenvalue_estimate, cand.residual, gap.gap_below,
    )
    return cand, gap


_DEGENERATE_ERRORS = (DegenerateDensity, DegenerateConformalFactor, InvalidGeometry)
_STALL_ERRORS = (NoConvergence, EigensolverFailure, SpectrumTooShallow)


def cmd_perturb_sweep(cfg: ExperimentConfig, out_dir, base_seed=0):
    """One pipeline run per (amplitude, seed); failures are recorded as rows."""
    mesh, metric, winding = build_case(cfg)
    if cfg.kind == "product_sphere":
        raise ConfigError("perturb-sweep needs a circle-target case")
    rows = []
    ok_amplitudes = set()
    for amp in cfg.amplitudes:
        for s in range(cfg.seeds):
            seed = base_seed + s
            row = [amp, seed, None, None, None, None, None, None, "ok"]
            try:
                g_eps = perturb.perturbed_metric(
                    mesh, metric, cfg.perturb_mode, amp, seed, cfg.frequency
                )
                cand, gap = _candidate_and_gap(cfg, mesh, g_eps, winding)
                energy = cand.solve_report.energy if cand.solve_report else None
                row[2:8] = [cand.min_density_pre, energy, cand.eigenvalue_estimate,
                            cand.residual, gap.gap_below, gap.gap_above]
                ok_amplitudes.add(amp)
            except _DEGENERATE_ERRORS:
                row[8] = "degenerate"
            except _STALL_ERRORS:
                row[8] = "no_convergence"
            rows.append(row)
    write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_COLUMNS, rows)
    all_ok = [a for a in cfg.amplitudes
              if all(r[8] == "ok" for r in rows if r[0] == a)]
    logger.info(
        "perturb-sweep: %d rows, largest all-ok amplitude %s",
        len(rows), max(all_ok) if all_ok else "none",
    )
    return rows


def cmd_bound_study(cfg: ExperimentConfig, out_dir, base_seed=0):
    """Projection energy vs the closed-form floor across refinement levels."""
    if cfg.kind != "product_sphere":
        raise ConfigError("bound-study needs a product_sphere case")
    if not cfg.subdivision_levels:
        raise ConfigError("bound-study needs a nonempty subdivision level list")
    rows = []
    gaps = []
    sizes = []
    for s in cfg.subdivision_levels:
        circ = build_flat_circle(cfg.circle_length, cfg.bound_circle_segments)
        ico, gico = build_icosphere(s)
        mesh, metric = build_product(circ, (ico, gico))
        proj = sphere.projection_map(mesh)
        ops = assemble_operators(mesh, metric)
        e_proj = sphere.sphere_energy(mesh, metric, proj, mesh.dim, ops=ops)
        vol_n = cfg.circle_length
        bound = sphere.lower_bound(vol_n, 2, 1)
        gap = (bound - e_proj) / bound
        edge_vecs = ico.cell_vertex_coords[:, 1:, :] - ico.cell_vertex_coords[:, :1, :]
        size = float(np.linalg.norm(edge_vecs, axis=2).max())
        order = None
        if gaps:
            order = math.log(gaps[-1] / gap) / math.log(sizes[-1] / size)
        min_pert = _min_perturbed_energy(mesh, metric, proj, cfg, base_seed, ops)
        rows.append([s, size, e_proj, bound, gap, order, min_pert])
        gaps.append(gap)
        sizes.append(size)
    write_csv(os.path.join(out_dir, "bound_study.csv"), BOUND_COLUMNS, rows)
    write_loglog_plot(
        os.path.join(out_dir, "bound_gap.svg"), sizes, gaps,
        title="projection energy gap vs refinement",
        xlabel="mesh size", ylabel="relative gap",
    )
    logger.info("bound-study: final gap %.4g, orders %s",
                gaps[-1], [r[5] for r in rows[1:]])
    return rows


def _min_perturbed_energy(mesh, metric, proj, cfg, base_seed, ops):
    if cfg.bound_perturbations <= 0:
        return None
    best = math.inf
    for i in range(cfg.bound_perturbations):
        rng = np.random.default_rng([base_seed + i, 202])
        noise = cfg.bound_noise * rng.standard_normal(proj.values.shape)
        noise -= (noise * proj.values).sum(axis=1, keepdims=True) * proj.values
        candidate = sphere.SphereMap(sphere.normalized(proj.values + noise))
        e = sphere.sphere_energy(mesh, metric, candidate, mesh.dim, ops=ops)
        best = min(best, e)
    return best


def cmd_uniqueness(cfg: ExperimentConfig, out_dir, base_seed=0):
    """Multistart minimization + rotation alignment; per-pair distances."""
    mesh, metric, winding = build_case(cfg)
    if winding is None:
        raise ConfigError("uniqueness needs a circle-target case")
    ops = assemble_operators(mesh, metric)
    cls = circle.class_from_winding(mesh, winding)
    maps = []
    for i in range(cfg.uniq_starts):
        phi0 = perturb.random_smooth_potential(
            mesh, cfg.uniq_amplitude, [base_seed + i, 11], cfg.frequency
        )
        cmap, _ = circle.minimize(
            mesh, metric, cls, p=cfg.p, tol=cfg.uniq_tol,
            max_iter=cfg.max_iter, init_phi=phi0, ops=ops,
        )
        maps.append(cmap)
    rows = []
    worst = 0.0
    for i in range(len(maps)):
        for j in range(i):
            phase, dist = circle.align_rotation(mesh, metric, maps[i], maps[j], ops=ops)
            rows.append([i, j, phase, dist])
            worst = max(worst, dist)
    write_csv(os.path.join(out_dir, "uniqueness.csv"), UNIQ_COLUMNS, rows)
    logger.info("uniqueness: %d starts, max aligned distance %.3e", len(maps), worst)
    return rows, worst


def cmd_spectrum(cfg: ExperimentConfig, out_dir):
    """Low spectrum of the configured case with cluster labels."""
    mesh, metric, _ = build_case(cfg)
    spec = spectrum_mod.laplace_spectrum(mesh, metric, cfg.spectrum_count)
    labels = spectrum_mod.cluster_eigenvalues(spec.eigenvalues, cfg.cluster_tol)
    rows = [
        [i, spec.eigenvalues[i], int(labels[i]), spec.residuals[i]]
        for i in range(len(spec.eigenvalues))
    ]
    write_csv(os.path.join(out_dir, "spectrum.csv"), SPECTRUM_COLUMNS, rows)
    logger.info("spectrum: %d eigenvalues, %d clusters",
                len(rows), int(labels.max()) + 1)
    return spec, labels


def cmd_mesh_info(cfg: ExperimentConfig, out_dir, dump_path=None):
    """Print mesh statistics; optionally dump the plain-text mesh format."""
    mesh, metric, winding = build_case(cfg)
    lines = [
        f"kind: {cfg.kind}",
        f"dimension: {mesh.dim}",
        f"vertices: {mesh.num_vertices}",
        f"cells: {mesh.num_cells}",
        f"edges: {len(mesh.edges())}",
        f"volume: {volume(mesh, metric)!r}",
        f"min metric eigenvalue: {metric.min_eigenvalue()!r}",
        f"generators: {[g.name for g in mesh.generators]}",
        f"gluing: {mesh.gluing}",
    ]
    if dump_path is not None:
        dump_mesh(mesh, metric, dump_path)
        lines.append(f"dumped to: {dump_path}")
    return "\n".join(lines)
