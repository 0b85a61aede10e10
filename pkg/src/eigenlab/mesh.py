"""Discretized closed manifolds with per-cell constant metrics.

A :class:`Mesh` owns combinatorics only (vertex ids, top simplices, optional
chart/embedding metadata); all geometry lives in a :class:`MetricField`, which
stores one symmetric positive-definite Gram matrix per cell, expressed in the
cell's edge basis (edges from the first vertex of the stored tuple).

Builders cover flat tori, unit circles/icospheres with the induced chordal
metric, products (staircase split of simplex prisms), and mapping tori glued
through a metric-preserving simplicial automorphism.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConformalFactor,
    InvalidGeometry,
    InvalidGluing,
    MeshTooCoarse,
    MetricNotPhiInvariant,
    UnsupportedDimension,
)

TWO_PI = 2.0 * math.pi

_REFERENCE_VOLUME = {1: 1.0, 2: 0.5, 3: 1.0 / 6.0}


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Generator:
    """One circle direction of the mesh: per-vertex coordinate in [0,1) plus a
    representative loop used to verify periods of closed 1-cochains."""

    name: str
    coords: np.ndarray
    loop: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", _readonly(np.asarray(self.coords, float)))


@dataclass(frozen=True)
class ProductInfo:
    """Bookkeeping for meshes built as a product: vertex (ia, ib) has id
    ia * b_vertices + ib, and the copy of factor b over a fixed a-vertex is a
    fiber with factor-b connectivity."""

    a_mesh: "Mesh"
    a_metric: "MetricField"
    b_mesh: "Mesh"
    b_metric: "MetricField"

    @property
    def b_vertices(self):
        return self.b_mesh.num_vertices

    @property
    def a_vertices(self):
        return self.a_mesh.num_vertices

    def fiber_vertices(self, a_index):
        nb = self.b_mesh.num_vertices
        return a_index * nb + np.arange(nb)


class Mesh:
    """Closed connected simplicial complex of dimension 1, 2 or 3.

    Cells are stored as ordered vertex tuples; the stored order fixes the edge
    basis used by the matching :class:`MetricField`. Instances are immutable
    after construction.
    """

    def __init__(self, dim, num_vertices, cells, *, vertex_coords=None,
                 coord_periods=None, vertex_positions=None,
                 cell_vertex_coords=None, generators=(), product=None,
                 oriented=False, product_order="sorted", gluing=None,
                 validate=True):
        self.dim = int(dim)
        self.num_vertices = int(num_vertices)
        self.cells = _readonly(np.asarray(cells, dtype=np.int64))
        self.vertex_coords = None if vertex_coords is None else _readonly(np.asarray(vertex_coords, float))
        self.coord_periods = None if coord_periods is None else tuple(coord_periods)
        self.vertex_positions = None if vertex_positions is None else _readonly(np.asarray(vertex_positions, float))
        self.cell_vertex_coords = None if cell_vertex_coords is None else _readonly(np.asarray(cell_vertex_coords, float))
        self.generators = tuple(generators)
        self.product = product
        self.oriented = bool(oriented)
        self.product_order = product_order
        self.gluing = gluing
        self._edge_cache = None
        if validate:
            self._validate()

    # -- basic queries ----------------------------------------------------

    @property
    def num_cells(self):
        return self.cells.shape[0]

    def cell_centroids(self):
        if self.cell_vertex_coords is None:
            raise UnsupportedTopologyForCoords()
        return self.cell_vertex_coords.mean(axis=1)

    def edges(self):
        """Canonical oriented edge list (E, 2) with tail < head, sorted."""
        if self._edge_cache is None:
            n1 = self.dim + 1
            pairs = []
            for i, j in itertools.combinations(range(n1), 2):
                pairs.append(self.cells[:, [i, j]])
            raw = np.sort(np.concatenate(pairs, axis=0), axis=1)
            self._edge_cache = np.unique(raw, axis=0)
        return self._edge_cache

    def product_cells(self):
        """Per-cell vertex tuples in the order the product splitter must use."""
        if self.product_order == "stored":
            return self.cells
        return np.sort(self.cells, axis=1)

    # -- validation --------------------------------------------------------

    def _validate(self):
        c = self.cells
        if c.ndim != 2 or c.shape[1] != self.dim + 1:
            raise InvalidGluing(f"cells must be (C, {self.dim + 1}), got {c.shape}")
        if c.min(initial=0) < 0 or c.max(initial=-1) >= self.num_vertices:
            raise InvalidGluing("cell vertex id out of range")
        srt = np.sort(c, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise InvalidGluing("a top simplex has repeated vertex ids after gluing")
        self._check_closed()
        self._check_connected()

    def _check_closed(self):
        n1 = self.dim + 1
        facets = []
        for keep in itertools.combinations(range(n1), self.dim):
            facets.append(self.cells[:, list(keep)])
        facets = np.sort(np.concatenate(facets, axis=0), axis=1)
        _, counts = np.unique(facets, axis=0, return_counts=True)
        if not np.all(counts == 2):
            bad = int(np.sum(counts != 2))
            raise InvalidGluing(f"complex is not closed: {bad} facets not shared by exactly 2 cells")

    def _check_connected(self):
        parent = np.arange(self.num_vertices)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        first = self.cells[:, 0]
        for j in range(1, self.dim + 1):
            for a, b in zip(first, self.cells[:, j]):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
        roots = {find(v) for v in range(self.num_vertices)}
        if len(roots) != 1:
            raise InvalidGluing(f"complex is not connected ({len(roots)} components)")


class UnsupportedTopologyForCoords(InvalidGeometry):
    def __init__(self):
        super().__init__("mesh carries no chart coordinates")


class MetricField:
    """Per-cell symmetric positive-definite Gram matrices (units length^2)."""

    def __init__(self, matrices, *, require_spd=True):
        m = np.asarray(matrices, float)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise InvalidGeometry(f"metric must be (C, n, n), got {m.shape}")
        m = 0.5 * (m + np.swapaxes(m, 1, 2))
        if require_spd:
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                ev = np.linalg.eigvalsh(m)
                worst = int(np.argmin(ev[:, 0]))
                raise InvalidGeometry(
                    f"cell metric {worst} is not positive definite "
                    f"(min eigenvalue {ev[worst, 0]:.3e})"
                ) from None
        self.cell_matrices = _readonly(m)

    @property
    def dim(self):
        return self.cell_matrices.shape[1]

    @property
    def num_cells(self):
        return self.cell_matrices.shape[0]

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.cell_matrices)[:, 0].min())


@dataclass(frozen=True)
class SphereConstants:
    """Round-sphere constants for target dimension l in {1, 2}."""

    l: int
    vol: float = field(init=False)
    lambda1: float = field(init=False)

    def __post_init__(self):
        if self.l not in (1, 2):
            raise UnsupportedDimension(f"sphere targets support l in {{1, 2}}, got l={self.l}")
        object.__setattr__(self, "vol", {1: TWO_PI, 2: 4.0 * math.pi}[self.l])
        object.__setattr__(self, "lambda1", float(self.l))


def sphere_constants(l):
    return SphereConstants(int(l))


# ---------------------------------------------------------------------------
# volume / conformal scaling
# ---------------------------------------------------------------------------


def cell_volumes(mesh, metric):
    """sqrt(det G) * reference simplex volume, per cell."""
    if metric.num_cells != mesh.num_cells or metric.dim != mesh.dim:
        raise InvalidGeometry("metric does not match mesh")
    det = np.linalg.det(metric.cell_matrices)
    if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
        raise InvalidGeometry("nonpositive cell Gram determinant")
    return np.sqrt(det) * _REFERENCE_VOLUME[mesh.dim]


def volume(mesh, metric):
    """Total Riemannian volume of the discretized manifold."""
    return float(cell_volumes(mesh, metric).sum())


def conformal_scale(metric, rho):
    """Scale each cell matrix by its positive conformal factor."""
    rho = np.asarray(rho, float)
    if rho.shape != (metric.num_cells,):
        raise InvalidGeometry(f"conformal factor must have shape ({metric.num_cells},)")
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        bad = int(np.argmin(rho))
        raise DegenerateConformalFactor(f"conformal factor {rho[bad]:.3e} on cell {bad}")
    return MetricField(metric.cell_matrices * rho[:, None, None], require_spd=False)


# ---------------------------------------------------------------------------
# chord Gram helpers
# ---------------------------------------------------------------------------


def _padded_gram(matrices):
    """(C, n, n) edge Gram -> (C, n+1, n+1) chord Gram with vertex 0 padded in."""
    c, n, _ = matrices.shape
    full = np.zeros((c, n + 1, n + 1))
    full[:, 1:, 1:] = matrices
    return full


def _chord_gram(matrices, perm):
    """Chord inner products <v_i - v_0, v_j - v_0> after reordering each cell's
    vertices by ``perm`` (positions into the stored tuple)."""
    full = _padded_gram(matrices)
    c = full.shape[0]
    g = full[np.arange(c)[:, None, None], perm[:, :, None], perm[:, None, :]]
    return g - g[:, :1, :] - g[:, :, :1] + g[:, :1, :1]


# ---------------------------------------------------------------------------
# circles and flat tori
# ---------------------------------------------------------------------------


def _circle_complex(segments):
    m = int(segments)
    if m < 3:
        raise MeshTooCoarse(f"circle needs >= 3 segments, got {m}")
    idx = np.arange(m)
    cells = np.stack([idx, (idx + 1) % m], axis=1)
    return m, cells


def build_flat_circle(period, segments):
    """Intrinsically flat circle of the given circumference."""
    if period <= 0:
        raise InvalidGeometry(f"circle period must be positive, got {period}")
    m, cells = _circle_complex(segments)
    h = period / m
    lifts = np.stack([np.arange(m), np.arange(m) + 1], axis=1)[:, :, None] * h
    gen = Generator("axis0", np.arange(m) / m, tuple(range(m)))
    mesh = Mesh(
        1, m, cells,
        vertex_coords=(np.arange(m) * h)[:, None],
        coord_periods=(period,),
        cell_vertex_coords=lifts,
        generators=(gen,),
        oriented=True,
        product_order="stored",
        gluing="periodic",
    )
    metric = MetricField(np.full((m, 1, 1), h * h), require_spd=False)
    return mesh, metric


def build_unit_circle(segments):
    """Unit circle with vertex positions on S^1 and the induced chordal metric."""
    m, cells = _circle_complex(segments)
    ang = TWO_PI * np.arange(m) / m
    pos = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    chord = 2.0 * math.sin(math.pi / m)
    lifts = np.stack([np.arange(m), np.arange(m) + 1], axis=1)[:, :, None] * (TWO_PI / m)
    gen = Generator("axis0", np.arange(m) / m, tuple(range(m)))
    mesh = Mesh(
        1, m, cells,
        vertex_coords=(TWO_PI * np.arange(m) / m)[:, None],
        coord_periods=(TWO_PI,),
        vertex_positions=pos,
        cell_vertex_coords=lifts,
        generators=(gen,),
        oriented=True,
        product_order="stored",
        gluing="periodic",
    )
    metric = MetricField(np.full((m, 1, 1), chord * chord), require_spd=False)
    return mesh, metric


def build_flat_torus(periods, resolution, split="diagonal"):
    """Flat n-torus, n in {1,2,3}, as an iterated staircase product of circles.

    ``split="crossed"`` (n=2 only) adds a center vertex per grid square and
    splits it into 4 triangles; that complex is invariant under the quarter
    turn and so can host twisted mapping-torus gluings.
    """
    periods = tuple(float(p) for p in periods)
    resolution = tuple(int(r) for r in resolution)
    n = len(periods)
    if n != len(resolution):
        raise InvalidGeometry("periods and resolution must have equal length")
    if n < 1 or n > 3:
        raise UnsupportedDimension(f"flat tori support dimension 1..3, got {n}")
    if any(p <= 0 for p in periods):
        raise InvalidGeometry("torus periods must be positive")
    if any(r < 3 for r in resolution):
        raise MeshTooCoarse(f"resolution {resolution} too coarse (need >= 3 per axis)")
    if split == "crossed":
        if n != 2:
            raise UnsupportedDimension("crossed split is only defined for dimension 2")
        return _build_crossed_torus(periods, resolution)
    if split != "diagonal":
        raise InvalidGeometry(f"unknown split rule {split!r}")
    mesh, metric = build_flat_circle(periods[0], resolution[0])
    for k in range(1, n):
        circ = build_flat_circle(periods[k], resolution[k])
        mesh, metric = build_product((mesh, metric), circ)
    if n > 1:
        # rename lifted generators to plain axis names
        gens = tuple(
            Generator(f"axis{i}", g.coords, g.loop) for i, g in enumerate(mesh.generators)
        )
        mesh = Mesh(
            mesh.dim, mesh.num_vertices, mesh.cells,
            vertex_coords=mesh.vertex_coords, coord_periods=mesh.coord_periods,
            cell_vertex_coords=mesh.cell_vertex_coords, generators=gens,
            product=mesh.product, oriented=False, product_order=mesh.product_order,
            gluing="periodic", validate=False,
        )
    return mesh, metric


def _build_crossed_torus(periods, resolution):
    (l1, l2), (m1, m2) = periods, resolution
    h1, h2 = l1 / m1, l2 / m2
    ngrid = m1 * m2
    nverts = 2 * ngrid

    def gid(i, j):
        return (i % m1) * m2 + (j % m2)

    def cid(i, j):
        return ngrid + i * m2 + j

    cells = []
    lifts = []
    for i in range(m1):
        for j in range(m2):
            ctr = cid(i, j)
            corners = {(a, b): gid(i + a, j + b) for a in (0, 1) for b in (0, 1)}
            corner_xy = {(a, b): ((i + a) * h1, (j + b) * h2) for a in (0, 1) for b in (0, 1)}
            cxy = ((i + 0.5) * h1, (j + 0.5) * h2)
            # grid pairs in lifted lexicographic order, center always last
            for pa, pb in (((0, 0), (1, 0)), ((0, 1), (1, 1)), ((0, 0), (0, 1)), ((1, 0), (1, 1))):
                cells.append((corners[pa], corners[pb], ctr))
                lifts.append((corner_xy[pa], corner_xy[pb], cxy))
    cells = np.array(cells, dtype=np.int64)
    lifts = np.array(lifts, float)
    e1 = lifts[:, 1] - lifts[:, 0]
    e2 = lifts[:, 2] - lifts[:, 0]
    g = np.empty((len(cells), 2, 2))
    g[:, 0, 0] = (e1 * e1).sum(1)
    g[:, 0, 1] = g[:, 1, 0] = (e1 * e2).sum(1)
    g[:, 1, 1] = (e2 * e2).sum(1)

    ii, jj = np.divmod(np.arange(ngrid), m2)
    coords = np.empty((nverts, 2))
    coords[:ngrid, 0] = ii * h1
    coords[:ngrid, 1] = jj * h2
    coords[ngrid:, 0] = (ii + 0.5) * h1
    coords[ngrid:, 1] = (jj + 0.5) * h2
    gens = (
        Generator("axis0", coords[:, 0] / l1, tuple(gid(i, 0) for i in range(m1))),
        Generator("axis1", coords[:, 1] / l2, tuple(gid(0, j) for j in range(m2))),
    )
    mesh = Mesh(
        2, nverts, cells,
        vertex_coords=coords, coord_periods=(l1, l2),
        cell_vertex_coords=lifts, generators=gens,
        product_order="stored", gluing="periodic",
    )
    return mesh, MetricField(g, require_spd=False)


# ---------------------------------------------------------------------------
# icosphere
# ---------------------------------------------------------------------------


def build_icosphere(subdivisions):
    """Icosahedron subdivided ``subdivisions`` times, vertices projected to the
    unit sphere, per-triangle induced chordal metric, outward orientation."""
    s = int(subdivisions)
    if s < 0:
        raise InvalidGeometry("subdivisions must be >= 0")
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = [np.asarray(v, float) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(s):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    pos = np.array(verts)
    cells = np.array(faces, dtype=np.int64)
    # enforce outward orientation
    p0, p1, p2 = pos[cells[:, 0]], pos[cells[:, 1]], pos[cells[:, 2]]
    signs = np.einsum("ij,ij->i", np.cross(p1 - p0, p2 - p0), (p0 + p1 + p2) / 3.0)
    flip = signs < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    p1, p2 = pos[cells[:, 1]], pos[cells[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    g = np.empty((len(cells), 2, 2))
    g[:, 0, 0] = (e1 * e1).sum(1)
    g[:, 0, 1] = g[:, 1, 0] = (e1 * e2).sum(1)
    g[:, 1, 1] = (e2 * e2).sum(1)
    lifts = pos[cells]
    mesh = Mesh(
        2, len(pos), cells,
        vertex_coords=pos, vertex_positions=pos,
        cell_vertex_coords=lifts,
        oriented=True, product_order="sorted", gluing=None,
    )
    return mesh, MetricField(g, require_spd=False)


# ---------------------------------------------------------------------------
# staircase product engine
# ---------------------------------------------------------------------------


def _staircase_paths(p, q):
    """Monotone lattice paths (0,0) -> (p,q), the simplices of a prism split."""
    paths = []
    for b_positions in itertools.combinations(range(p + q), q):
        pt = [0, 0]
        path = [(0, 0)]
        for step in range(p + q):
            if step in b_positions:
                pt[1] += 1
            else:
                pt[0] += 1
            path.append((pt[0], pt[1]))
        paths.append(tuple(path))
    return paths


def _product_complex(a, b, *, glue=None):
    """Shared splitter for build_product / build_mapping_torus.

    ``glue = (wrap_cell_index, phi)`` reroutes the top copy of the wrapping
    b-cell through the fiber automorphism phi (mapping-torus gluing).
    """
    (ma, ga), (mb, gb) = a, b
    p, q = ma.dim, mb.dim
    n = p + q
    if n > 3:
        raise UnsupportedDimension(f"product dimension {n} exceeds 3")

    cells_a = ma.product_cells()
    cells_b = mb.product_cells()
    perm_a = _order_perm(ma)
    perm_b = _order_perm(mb)
    grams_a = _chord_gram(ga.cell_matrices, perm_a)
    grams_b = _chord_gram(gb.cell_matrices, perm_b)

    ca, cb = len(cells_a), len(cells_b)
    vb = mb.num_vertices
    paths = _staircase_paths(p, q)
    npaths = len(paths)

    have_lifts = ma.cell_vertex_coords is not None and mb.cell_vertex_coords is not None
    lifts_a = None
    if have_lifts:
        lifts_a = np.take_along_axis(ma.cell_vertex_coords, perm_a[:, :, None], axis=1)
        lifts_b = np.take_along_axis(mb.cell_vertex_coords, perm_b[:, :, None], axis=1)

    out_cells = np.empty((ca, cb, npaths, n + 1), dtype=np.int64)
    out_gram = np.empty((ca, cb, npaths, n, n))
    out_lift = None
    if have_lifts:
        da = lifts_a.shape[2]
        db = lifts_b.shape[2]
        out_lift = np.empty((ca, cb, npaths, n + 1, da + db))

    for pi, path in enumerate(paths):
        # chord Gram of the path simplex, then edge Gram from its first vertex
        full = np.empty((ca, cb, n + 1, n + 1))
        for k, (ik, jk) in enumerate(path):
            for m, (im, jm) in enumerate(path):
                full[:, :, k, m] = grams_a[:, None, ik, im] + grams_b[None, :, jk, jm]
        out_gram[:, :, pi] = (
            full[:, :, 1:, 1:] - full[:, :, 1:, :1] - full[:, :, :1, 1:] + full[:, :, :1, :1]
        )
        for k, (ik, jk) in enumerate(path):
            aid = cells_a[:, ik]
            ids = aid[:, None] * vb + cells_b[None, :, jk]
            if glue is not None and jk == 1:
                wrap_cell, phi = glue
                ids[:, wrap_cell] = phi[aid] * vb + cells_b[wrap_cell, 1]
            out_cells[:, :, pi, k] = ids
            if have_lifts:
                out_lift[:, :, pi, k, :da] = lifts_a[:, ik, :][:, None, :]
                out_lift[:, :, pi, k, da:] = lifts_b[:, jk, :][None, :, :]

    cells = out_cells.reshape(-1, n + 1)
    gram = out_gram.reshape(-1, n, n)
    lifts = out_lift.reshape(-1, n + 1, out_lift.shape[-1]) if have_lifts else None
    return cells, gram, lifts


def _order_perm(mesh):
    c = mesh.cells
    if mesh.product_order == "stored":
        return np.broadcast_to(np.arange(c.shape[1]), c.shape).copy()
    return np.argsort(c, axis=1)


def build_product(a, b):
    """Product of two discretized manifolds with the block product metric.

    The second factor is the convention for sphere targets: projection maps and
    fiber slicing read factor-b bookkeeping.
    """
    (ma, ga), (mb, gb) = a, b
    cells, gram, lifts = _product_complex(a, b)
    vb = mb.num_vertices
    nverts = ma.num_vertices * vb

    coords = None
    periods = None
    if ma.vertex_coords is not None and mb.vertex_coords is not None:
        ia, ib = np.divmod(np.arange(nverts), vb)
        coords = np.concatenate([ma.vertex_coords[ia], mb.vertex_coords[ib]], axis=1)
        if ma.coord_periods is not None and mb.coord_periods is not None:
            periods = ma.coord_periods + mb.coord_periods

    gens = []
    ia, ib = np.divmod(np.arange(nverts), vb)
    for g in ma.generators:
        gens.append(Generator(f"a.{g.name}", g.coords[ia], tuple(v * vb + 0 for v in g.loop)))
    for g in mb.generators:
        gens.append(Generator(f"b.{g.name}", g.coords[ib], tuple(0 * vb + v for v in g.loop)))

    order = "stored" if (ma.product_order == "stored" and mb.product_order == "stored") else "sorted"
    mesh = Mesh(
        ma.dim + mb.dim, nverts, cells,
        vertex_coords=coords, coord_periods=periods,
        cell_vertex_coords=lifts, generators=tuple(gens),
        product=ProductInfo(ma, ga, mb, gb),
        product_order=order, gluing="product",
    )
    return mesh, MetricField(gram, require_spd=False)


# ---------------------------------------------------------------------------
# mapping torus
# ---------------------------------------------------------------------------


def _cell_lookup(mesh):
    return {frozenset(c): i for i, c in enumerate(map(tuple, mesh.cells))}


def check_phi_invariance(fiber_mesh, fiber_metric, phi, tol=1e-12):
    """Verify phi maps cells to cells and preserves each cell's Gram matrix."""
    phi = np.asarray(phi, dtype=np.int64)
    nv = fiber_mesh.num_vertices
    if phi.shape != (nv,) or not np.array_equal(np.sort(phi), np.arange(nv)):
        raise InvalidGluing("phi is not a vertex permutation of the fiber")
    lookup = _cell_lookup(fiber_mesh)
    grams = _padded_gram(fiber_metric.cell_matrices)
    scale = max(1.0, float(np.abs(fiber_metric.cell_matrices).max()))
    cells = fiber_mesh.cells
    for ci, cell in enumerate(cells):
        image = phi[cell]
        ti = lookup.get(frozenset(image.tolist()))
        if ti is None:
            raise InvalidGluing(f"phi does not map cell {ci} to a cell of the fiber")
        target = cells[ti]
        pos = {v: k for k, v in enumerate(target)}
        piv = np.array([pos[v] for v in image])
        gt = grams[ti]
        chord = (
            gt[piv[:, None], piv[None, :]]
            - gt[piv[:, None], piv[0]]
            - gt[piv[0], piv[None, :]]
            + gt[piv[0], piv[0]]
        )
        gs = grams[ci]
        ref = gs - gs[:, :1] - gs[:1, :] + gs[:1, :1]
        if np.abs(chord - ref).max() > tol * scale:
            raise MetricNotPhiInvariant(
                f"phi changes the Gram matrix of cell {ci} by "
                f"{np.abs(chord - ref).max():.3e} (tolerance {tol:g} relative)"
            )
    return phi


def build_mapping_torus(fiber, phi, circle_segments):
    """Glue fiber x [0,1] through the metric-preserving automorphism phi.

    The per-cell metric is the fiber metric plus dt^2; the t = 1 layer is
    identified with the t = 0 layer through phi, so the volume equals the
    fiber volume regardless of the twist.
    """
    fiber_mesh, fiber_metric = fiber
    s = int(circle_segments)
    if s < 3:
        raise MeshTooCoarse(f"mapping torus needs >= 3 circle segments, got {s}")
    if fiber_mesh.dim + 1 > 3:
        raise UnsupportedDimension("mapping torus dimension exceeds 3")
    phi = check_phi_invariance(fiber_mesh, fiber_metric, phi)

    circle = build_flat_circle(1.0, s)
    cells, gram, lifts = _product_complex(fiber, circle, glue=(s - 1, phi))
    nverts = fiber_mesh.num_vertices * s

    coords = None
    periods = None
    if fiber_mesh.vertex_coords is not None:
        ia, ib = np.divmod(np.arange(nverts), s)
        coords = np.concatenate(
            [fiber_mesh.vertex_coords[ia], (ib / s)[:, None]], axis=1
        )
        if fiber_mesh.coord_periods is not None:
            periods = fiber_mesh.coord_periods + (1.0,)

    t_coords = (np.arange(nverts) % s) / s
    loop = [0 * s + k for k in range(s)]
    loop += [v * s + 0 for v in _fiber_path(fiber_mesh, int(phi[0]), 0)[1:]]
    gen = Generator("t", t_coords, tuple(loop))

    mesh = Mesh(
        fiber_mesh.dim + 1, nverts, cells,
        vertex_coords=coords, coord_periods=periods,
        cell_vertex_coords=lifts, generators=(gen,),
        product_order="stored",
        gluing="identity" if np.array_equal(phi, np.arange(len(phi))) else "twisted",
    )
    return mesh, MetricField(gram, require_spd=False)


def _fiber_path(fiber_mesh, start, goal):
    """Vertex path from start to goal along fiber edges (BFS, shortest)."""
    if start == goal:
        return [start]
    edges = fiber_mesh.edges()
    adj = {}
    for u, v in edges:
        adj.setdefault(int(u), []).append(int(v))
        adj.setdefault(int(v), []).append(int(u))
    prev = {start: None}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in prev:
                    prev[w] = u
                    if w == goal:
                        path = [w]
                        while path[-1] != start:
                            path.append(prev[path[-1]])
                        return path[::-1]
                    nxt.append(w)
        frontier = nxt
    raise InvalidGluing("fiber is not connected")


def quarter_turn_permutation(resolution):
    """Quarter-turn automorphism of the crossed square torus grid (m x m)."""
    m = int(resolution)
    ngrid = m * m
    perm = np.empty(2 * ngrid, dtype=np.int64)
    for i in range(m):
        for j in range(m):
            perm[i * m + j] = (j % m) * m + ((m - i) % m)
            perm[ngrid + i * m + j] = ngrid + (j % m) * m + ((m - 1 - i) % m)
    return perm


def transpose_permutation(resolution):
    """Coordinate swap (i, j) -> (j, i) on the crossed square torus grid."""
    m = int(resolution)
    ngrid = m * m
    perm = np.empty(2 * ngrid, dtype=np.int64)
    for i in range(m):
        for j in range(m):
            perm[i * m + j] = j * m + i
            perm[ngrid + i * m + j] = ngrid + j * m + i
    return perm


def shear_permutation(resolution):
    """Vertex shear (i, j) -> (i, i + j); not a simplicial automorphism of the
    crossed grid, useful as a negative test."""
    m = int(resolution)
    ngrid = m * m
    perm = np.empty(2 * ngrid, dtype=np.int64)
    for i in range(m):
        for j in range(m):
            perm[i * m + j] = i * m + ((i + j) % m)
            perm[ngrid + i * m + j] = ngrid + i * m + ((i + j) % m)
    return perm


# ---------------------------------------------------------------------------
# plain-text dump / load
# ---------------------------------------------------------------------------


def dump_mesh(mesh, metric, path):
    """Write ``dim n vertices V cells C`` header, one cell line per cell, then
    one line per cell with the n(n+1)/2 upper-triangular metric entries."""
    n = mesh.dim
    iu = np.triu_indices(n)
    with open(path, "w", encoding="ascii") as f:
        f.write(f"dim {n} vertices {mesh.num_vertices} cells {mesh.num_cells}\n")
        for cell in mesh.cells:
            f.write(" ".join(str(int(v)) for v in cell) + "\n")
        for g in metric.cell_matrices:
            f.write(" ".join(repr(float(x)) for x in g[iu]) + "\n")


def load_mesh(path):
    """Read the plain-text format written by :func:`dump_mesh`."""
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().split()
        if len(header) != 6 or header[0] != "dim" or header[2] != "vertices" or header[4] != "cells":
            raise InvalidGeometry(f"bad mesh header: {' '.join(header)}")
        n, nv, nc = int(header[1]), int(header[3]), int(header[5])
        cells = np.array(
            [[int(x) for x in f.readline().split()] for _ in range(nc)], dtype=np.int64
        )
        iu = np.triu_indices(n)
        mats = np.zeros((nc, n, n))
        for c in range(nc):
            vals = [float(x) for x in f.readline().split()]
            if len(vals) != len(iu[0]):
                raise InvalidGeometry(f"bad metric line for cell {c}")
            mats[c][iu] = vals
            mats[c] = mats[c] + np.triu(mats[c], 1).T
    mesh = Mesh(n, nv, cells)
    return mesh, MetricField(mats)
