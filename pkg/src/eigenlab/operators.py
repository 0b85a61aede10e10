"""First-order finite-element operators on a mesh + metric pair.

Everything is piecewise linear with per-cell constant metrics: the squared
gradient of a linear function with edge-chart differences d is d^T G^{-1} d,
the stiffness matrix assembles vol * B^T G^{-1} B per cell, and the mass
matrix is row-sum lumped so each vertex carries vol/(n+1) per incident cell.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidGeometry
from .mesh import cell_volumes


@dataclass
class Operators:
    """Assembled operators; immutable in practice, shareable across threads."""

    mesh: object
    metric: object
    edges: np.ndarray            # (E, 2) canonical oriented edges, tail < head
    d0: sp.csr_matrix            # (E, V) discrete differential of 0-cochains
    cell_edge_index: np.ndarray  # (C, n) edge row of (v0, vi)
    cell_edge_sign: np.ndarray   # (C, n) +-1 matching the canonical orientation
    ginv: np.ndarray             # (C, n, n) inverse cell Gram matrices
    cell_volumes: np.ndarray     # (C,)
    stiffness: sp.csr_matrix     # (V, V) symmetric positive semi-definite
    mass: np.ndarray             # (V,) lumped mass, sums to the total volume

    # -- cochain calculus --------------------------------------------------

    def d_of_vertex_function(self, values):
        """Cochain1 of a vertex function: one difference per canonical edge."""
        return self.d0 @ np.asarray(values, float)

    def cell_deltas(self, theta):
        """Edge-chart coefficients (C, n) of a 1-cochain on each cell."""
        return theta[self.cell_edge_index] * self.cell_edge_sign

    def cell_deltas_of_vertex_function(self, values):
        v = np.asarray(values, float)
        cells = self.mesh.cells
        return v[cells[:, 1:]] - v[cells[:, :1]]

    def density_of_cochain(self, theta):
        """Per-cell squared norm |theta|^2_g."""
        d = self.cell_deltas(theta)
        return np.einsum("ci,cij,cj->c", d, self.ginv, d)

    def divergence_of_cochain(self, theta):
        """Weak divergence: integrals of grad(hat_v) . theta per vertex."""
        d = self.cell_deltas(theta)
        y = np.einsum("cij,cj->ci", self.ginv, d) * self.cell_volumes[:, None]
        return _scatter_gradient(self.mesh.cells, y, self.mesh.num_vertices)

    def edge_index_map(self):
        """Dict (a, b) -> edge row with a < b; built lazily for loop sums."""
        if not hasattr(self, "_edge_map"):
            self._edge_map = {
                (int(a), int(b)): i for i, (a, b) in enumerate(self.edges)
            }
        return self._edge_map

    def loop_sum(self, theta, loop):
        """Sum of a 1-cochain along a closed vertex loop."""
        emap = self.edge_index_map()
        loop = list(loop)
        total = 0.0
        for a, b in zip(loop, loop[1:] + loop[:1]):
            if a == b:
                continue
            if a < b:
                total += theta[emap[(a, b)]]
            else:
                total -= theta[emap[(b, a)]]
        return float(total)

    def face_sums(self, theta):
        """Oriented boundary sums of a 1-cochain over every 2-face.

        Zero (to rounding) exactly when the cochain is closed; applied to
        d0 @ phi this realizes the d(d phi) = 0 identity.
        """
        mesh = self.mesh
        if mesh.dim < 2:
            return np.zeros(0)
        tris = []
        for i, j, k in itertools.combinations(range(mesh.dim + 1), 3):
            tris.append(mesh.cells[:, [i, j, k]])
        tris = np.sort(np.concatenate(tris, axis=0), axis=1)
        tris = np.unique(tris, axis=0)
        emap = self.edge_index_map()
        lookup = np.vectorize(lambda a, b: emap[(a, b)], otypes=[np.int64])
        e_ab = lookup(tris[:, 0], tris[:, 1])
        e_bc = lookup(tris[:, 1], tris[:, 2])
        e_ac = lookup(tris[:, 0], tris[:, 2])
        return theta[e_ab] + theta[e_bc] - theta[e_ac]


def _scatter_gradient(cells, y, num_vertices):
    """Accumulate per-cell edge-chart covectors into vertex values."""
    out = np.bincount(cells[:, 1:].ravel(), weights=y.ravel(), minlength=num_vertices)
    out -= np.bincount(cells[:, 0], weights=y.sum(axis=1), minlength=num_vertices)
    return out


def assemble_operators(mesh, metric):
    """Build the differential, per-cell gradient data, stiffness and lumped mass."""
    g = metric.cell_matrices
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise InvalidGeometry("cell metric is not positive definite") from None
    vols = cell_volumes(mesh, metric)
    ginv = np.linalg.inv(g)
    ginv = 0.5 * (ginv + np.swapaxes(ginv, 1, 2))

    n = mesh.dim
    cells = mesh.cells
    num_v = mesh.num_vertices

    edges = mesh.edges()
    codes = edges[:, 0].astype(np.int64) * num_v + edges[:, 1]
    pair_a = np.minimum(cells[:, :1], cells[:, 1:])
    pair_b = np.maximum(cells[:, :1], cells[:, 1:])
    idx = np.searchsorted(codes, pair_a.astype(np.int64) * num_v + pair_b)
    sign = np.where(cells[:, :1] < cells[:, 1:], 1.0, -1.0)

    rows = np.repeat(np.arange(len(edges)), 2)
    cols = edges.ravel()
    data = np.tile([-1.0, 1.0], len(edges))
    d0 = sp.csr_matrix((data, (rows, cols)), shape=(len(edges), num_v))

    block = ginv * vols[:, None, None]
    local = np.empty((len(cells), n + 1, n + 1))
    local[:, 1:, 1:] = block
    col0 = -block.sum(axis=2)
    local[:, 1:, 0] = col0
    local[:, 0, 1:] = col0
    local[:, 0, 0] = -col0.sum(axis=1)
    ii = np.repeat(cells[:, :, None], n + 1, axis=2)
    jj = np.repeat(cells[:, None, :], n + 1, axis=1)
    stiff = sp.csr_matrix(
        (local.ravel(), (ii.ravel(), jj.ravel())), shape=(num_v, num_v)
    )
    stiff = (stiff + stiff.T) * 0.5

    mass = np.bincount(
        cells.ravel(),
        weights=np.repeat(vols / (n + 1), n + 1),
        minlength=num_v,
    )

    return Operators(
        mesh=mesh,
        metric=metric,
        edges=edges,
        d0=d0,
        cell_edge_index=idx,
        cell_edge_sign=sign,
        ginv=ginv,
        cell_volumes=vols,
        stiffness=stiff,
        mass=mass,
    )
