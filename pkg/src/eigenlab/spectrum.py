"""Low Laplace-Beltrami spectra and the eigenmap extremality gap check.

Eigenpairs come from the generalized problem K x = lambda M x with the lumped
mass matrix; multiplicities are decided by relative clustering since the
discretization splits exact degeneracies. A metric is certified extremal-like
when the candidate map's components project onto one eigenvalue cluster and
that cluster has a strict spectral gap on at least one side.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigensolverFailure, InvalidGeometry, SpectrumTooShallow
from .operators import assemble_operators

_EIGSH_SEED = 12345
DENSE_FALLBACK_LIMIT = 4000


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues with mass-orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray   # (V, k)
    residuals: np.ndarray
    mass: np.ndarray

    def orthonormality_defect(self):
        gram = self.eigenvectors.T @ (self.mass[:, None] * self.eigenvectors)
        return float(np.abs(gram - np.eye(gram.shape[0])).max())


@dataclass(frozen=True)
class GapReport:
    cluster_index: int
    cluster_eigenvalue: float
    cluster_multiplicity: int
    cluster_width: float
    gap_below: float
    gap_above: float
    match_residual: float

    CSV_COLUMNS = ("k", "cluster_width", "gap_below", "gap_above", "match_residual")

    def csv_row(self):
        return (self.cluster_index, self.cluster_width, self.gap_below,
                self.gap_above, self.match_residual)


def laplace_spectrum(mesh, metric, count, *, ops=None, maxiter=None):
    """Lowest ``count`` generalized eigenpairs of (stiffness, lumped mass).

    Shift-invert iteration around zero with a fixed-seed start vector; falls
    back to a dense solve on small problems if the iteration stagnates.
    """
    ops = ops or assemble_operators(mesh, metric)
    num_v = mesh.num_vertices
    count = int(count)
    if count < 1 or count >= num_v:
        raise InvalidGeometry(f"count must be in [1, {num_v - 1}), got {count}")
    k = ops.stiffness.tocsc()
    m = ops.mass

    # a Krylov space well beyond count keeps degenerate clusters converging
    ncv = min(num_v, max(4 * count + 1, 40))
    if count >= num_v - 1 or ncv >= num_v:
        vals, vecs = _dense_spectrum(k, m, count)
    else:
        try:
            scale = float(np.median(k.diagonal() / m))
            v0 = np.random.default_rng(_EIGSH_SEED).standard_normal(num_v)
            vals, vecs = spla.eigsh(
                k, k=count, M=sp.diags(m).tocsc(), sigma=-0.01 * scale,
                which="LM", v0=v0, ncv=ncv, maxiter=maxiter or 300,
            )
        except (spla.ArpackNoConvergence, spla.ArpackError, RuntimeError) as exc:
            if num_v > DENSE_FALLBACK_LIMIT:
                raise EigensolverFailure(f"shift-invert iteration stagnated: {exc}") from exc
            vals, vecs = _dense_spectrum(k, m, count)

    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    # mass-normalize (ARPACK returns M-orthonormal vectors; renormalize anyway)
    norms = np.sqrt(np.einsum("vk,v,vk->k", vecs, m, vecs))
    vecs = vecs / norms
    res = np.empty(len(vals))
    lam_scale = max(abs(vals[-1]), 1.0)
    for i, lam in enumerate(vals):
        r = k @ vecs[:, i] - lam * (m * vecs[:, i])
        res[i] = math.sqrt(float((r * r / m).sum())) / lam_scale
    return SpectrumResult(vals, vecs, res, m)


def _dense_spectrum(k, m, count):
    import scipy.linalg

    inv_sqrt = 1.0 / np.sqrt(m)
    a = (k.toarray() * inv_sqrt[None, :]) * inv_sqrt[:, None]
    a = 0.5 * (a + a.T)
    vals, vecs = scipy.linalg.eigh(a)
    vecs = vecs * inv_sqrt[:, None]
    return vals[:count], vecs[:, :count]


def cluster_eigenvalues(values, rel_tol=0.02):
    """Group near-degenerate eigenvalues; returns an integer label per value."""
    values = np.asarray(values, float)
    labels = np.zeros(len(values), dtype=np.int64)
    floor = rel_tol * max(1e-30, float(np.abs(values).max()) * 1e-9)
    current = 0
    for i in range(1, len(values)):
        gap = values[i] - values[i - 1]
        if gap > max(rel_tol * abs(values[i]), floor):
            current += 1
        labels[i] = current
    return labels


def extremality_gap_check(mesh, metric, spectrum, components, candidate_value,
                          cluster_tol=0.02, *, ops=None):
    """Locate the cluster carrying the candidate eigenvalue and certify it.

    Projects the map components onto the cluster's eigenspace (mass inner
    product) and reports the relative projection residual together with the
    spectral gaps below and above the cluster. Raises SpectrumTooShallow when
    the candidate is not bracketed by the computed window.
    """
    vals = spectrum.eigenvalues
    if candidate_value > vals[-1] * (1.0 + cluster_tol):
        raise SpectrumTooShallow(
            f"candidate {candidate_value:.6g} above computed window "
            f"(top eigenvalue {vals[-1]:.6g})"
        )
    labels = cluster_eigenvalues(vals, cluster_tol)
    chosen = None
    for lab in range(labels.max() + 1):
        sel = labels == lab
        lo, hi = vals[sel].min(), vals[sel].max()
        center = 0.5 * (lo + hi)
        tol = cluster_tol * max(abs(center), abs(candidate_value))
        if lo - tol <= candidate_value <= hi + tol:
            chosen = lab
            break
    if chosen is None:
        raise SpectrumTooShallow(
            f"no eigenvalue cluster within {cluster_tol:.0%} of candidate "
            f"{candidate_value:.6g}"
        )
    sel = labels == chosen
    if sel[-1] and not math.isclose(vals[-1], candidate_value, rel_tol=cluster_tol * 4):
        # cluster may be cut off at the window edge
        raise SpectrumTooShallow("candidate cluster touches the computed window edge")

    lo, hi = vals[sel].min(), vals[sel].max()
    below = vals[~sel][vals[~sel] < lo]
    above = vals[~sel][vals[~sel] > hi]
    gap_below = float(lo - below.max()) if len(below) else math.nan
    gap_above = float(above.min() - hi) if len(above) else math.nan

    basis = spectrum.eigenvectors[:, sel]
    m = spectrum.mass
    comps = np.asarray(components, float)
    if comps.ndim == 1:
        comps = comps[:, None]
    coeff = basis.T @ (m[:, None] * comps)
    proj = basis @ coeff
    defect = comps - proj
    num = math.sqrt(float((m[:, None] * defect * defect).sum()))
    den = math.sqrt(float((m[:, None] * comps * comps).sum()))
    return GapReport(
        cluster_index=int(np.argmax(sel)),
        cluster_eigenvalue=float(0.5 * (lo + hi)),
        cluster_multiplicity=int(sel.sum()),
        cluster_width=float(hi - lo),
        gap_below=gap_below,
        gap_above=gap_above,
        match_residual=num / den,
    )


def eigenvalue_functional(mesh, metric, k, *, count_margin=4):
    """lambda_k of the unit-volume representative of the metric's scale class."""
    from .extremal import normalize_volume

    normalized, _ = normalize_volume(mesh, metric)
    spec = laplace_spectrum(mesh, normalized, int(k) + 1 + count_margin)
    return float(spec.eigenvalues[int(k)])
