"""Circle-valued maps as closed 1-cochains in a fixed winding class.

A map to the circle is represented by theta = theta0 + d(phi): theta0 is a
closed base cochain with periods 2*pi*w around the mesh generators, phi a
vertex potential. The regularized p-energy sums (|theta|^2 + eps^2)^(p/2)
over cells; at p = dim(M) and eps = 0 it is exactly conformally invariant.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ClassMismatch, NoConvergence, UnsupportedTopology
from .mesh import TWO_PI
from .operators import _scatter_gradient, assemble_operators

DEFAULT_EPS_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class CircleClass:
    """Winding vector plus the closed base cochain realizing its periods."""

    winding: tuple
    theta0: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta0, float)
        t.flags.writeable = False
        object.__setattr__(self, "theta0", t)
        object.__setattr__(self, "winding", tuple(int(w) for w in self.winding))


@dataclass(frozen=True)
class CircleMap:
    """Immutable snapshot: class plus potential; theta = theta0 + d(phi)."""

    circle_class: CircleClass
    phi: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.phi, float)
        p.flags.writeable = False
        object.__setattr__(self, "phi", p)

    @property
    def winding(self):
        return self.circle_class.winding

    def theta(self, ops):
        return self.circle_class.theta0 + ops.d0 @ self.phi

    def shifted(self, constant):
        return CircleMap(self.circle_class, self.phi + constant)


@dataclass(frozen=True)
class StageReport:
    eps: float
    energy: float
    grad_sup: float
    iterations: int


@dataclass(frozen=True)
class SolveReport:
    energy: float
    iterations: int
    grad_sup: float
    stages: tuple
    min_density: float
    max_density: float


def class_from_winding(mesh, winding):
    """Base cochain with period 2*pi*w_i around the i-th mesh generator.

    Only meshes exposing circle generators (torus axes, the mapping-torus
    circle) are supported.
    """
    winding = tuple(int(w) for w in winding)
    gens = mesh.generators
    if len(gens) == 0:
        raise UnsupportedTopology("mesh exposes no circle generators")
    if len(winding) != len(gens):
        raise UnsupportedTopology(
            f"winding length {len(winding)} != {len(gens)} mesh generators"
        )
    edges = mesh.edges()
    theta0 = np.zeros(len(edges))
    for w, gen in zip(winding, gens):
        if w == 0:
            continue
        inc = gen.coords[edges[:, 1]] - gen.coords[edges[:, 0]]
        inc -= np.round(inc)
        theta0 += (TWO_PI * w) * inc
    return CircleClass(winding, theta0)


def _energy_terms(ops, theta, p, eps):
    density = ops.density_of_cochain(theta)
    return density, (density + eps * eps) ** (p / 2.0) * ops.cell_volumes


def p_energy(mesh, metric, cmap, p, eps=0.0, *, ops=None):
    """Regularized p-energy sum((|theta|^2 + eps^2)^(p/2) * vol)."""
    ops = ops or assemble_operators(mesh, metric)
    _, terms = _energy_terms(ops, cmap.theta(ops), p, eps)
    return float(terms.sum())


def p_energy_gradient(mesh, metric, cmap, p, eps=0.0, *, ops=None):
    """Exact gradient of the regularized p-energy with respect to phi."""
    ops = ops or assemble_operators(mesh, metric)
    theta = cmap.theta(ops)
    _, grad = _value_and_gradient(ops, theta, p, eps)
    return grad


def _value_and_gradient(ops, theta, p, eps):
    d = ops.cell_deltas(theta)
    density = np.einsum("ci,cij,cj->c", d, ops.ginv, d)
    reg = density + eps * eps
    value = float(((reg) ** (p / 2.0) * ops.cell_volumes).sum())
    w = p * reg ** (p / 2.0 - 1.0) * ops.cell_volumes
    y = np.einsum("cij,cj->ci", ops.ginv, d) * w[:, None]
    grad = _scatter_gradient(ops.mesh.cells, y, ops.mesh.num_vertices)
    return value, grad


def density(mesh, metric, cmap, *, ops=None):
    """Per-cell squared gradient norm |theta|^2_g of the map."""
    ops = ops or assemble_operators(mesh, metric)
    return ops.density_of_cochain(cmap.theta(ops))


def min_density(mesh, metric, cmap, *, ops=None):
    """Minimum over cells of |theta|_g (the nowhere-vanishing gauge)."""
    return float(math.sqrt(max(0.0, density(mesh, metric, cmap, ops=ops).min())))


def mass_mean(ops, values):
    return float(np.dot(ops.mass, values) / ops.mass.sum())


def _hessian(ops, theta, p, eps):
    """Exact sparse Hessian of the regularized p-energy at the given cochain."""
    import scipy.sparse as sp

    d = ops.cell_deltas(theta)
    t = np.einsum("ci,cij,cj->c", d, ops.ginv, d)
    reg = t + eps * eps
    h1 = (p / 2.0) * reg ** (p / 2.0 - 1.0)
    h2 = (p / 2.0) * (p / 2.0 - 1.0) * reg ** (p / 2.0 - 2.0)
    vols = ops.cell_volumes
    y = np.einsum("cij,cj->ci", ops.ginv, d)
    n = ops.mesh.dim
    cells = ops.mesh.cells

    block = (2.0 * h1 * vols)[:, None, None] * ops.ginv
    u = np.empty((len(cells), n + 1))
    u[:, 1:] = y
    u[:, 0] = -y.sum(axis=1)
    local = np.empty((len(cells), n + 1, n + 1))
    local[:, 1:, 1:] = block
    col0 = -block.sum(axis=2)
    local[:, 1:, 0] = col0
    local[:, 0, 1:] = col0
    local[:, 0, 0] = -col0.sum(axis=1)
    local += (4.0 * h2 * vols)[:, None, None] * u[:, :, None] * u[:, None, :]

    ii = np.repeat(cells[:, :, None], n + 1, axis=2)
    jj = np.repeat(cells[:, None, :], n + 1, axis=1)
    num_v = ops.mesh.num_vertices
    h = sp.csr_matrix((local.ravel(), (ii.ravel(), jj.ravel())), shape=(num_v, num_v))
    return (h + h.T) * 0.5


def _newton_polish(ops, theta0, phi, p, eps, passes=3):
    """Few full Newton steps with the exact Hessian, gauge pinned by a mass
    border row. Pushes the gradient to rounding level, which a line-search
    method cannot do once energy decreases drop below float resolution.
    """
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    m = ops.mass
    f, g = _value_and_gradient(ops, theta0 + ops.d0 @ phi, p, eps)
    for _ in range(passes):
        gsup = float(np.abs(g).max())
        if gsup <= 1e-15 * (1.0 + abs(f)):
            break
        hess = _hessian(ops, theta0 + ops.d0 @ phi, p, eps)
        bordered = sp.bmat(
            [[hess, m[:, None]], [m[None, :], None]], format="csc"
        )
        rhs = np.concatenate([-g, [0.0]])
        try:
            delta = spla.splu(bordered).solve(rhs)[:-1]
        except RuntimeError:
            break
        phi_try = phi + delta
        f_try, g_try = _value_and_gradient(ops, theta0 + ops.d0 @ phi_try, p, eps)
        if float(np.abs(g_try).max()) >= gsup:
            break
        phi, f, g = phi_try, f_try, g_try
    return phi, float(np.abs(g).max())


def minimize(mesh, metric, circle_class, p=None, tol=1e-8, *,
             eps_schedule=DEFAULT_EPS_SCHEDULE, max_iter=5000,
             init_phi=None, ops=None):
    """Minimize the p-energy over potentials in the given winding class.

    Runs limited-memory quasi-Newton once per continuation stage, warm started,
    with eps decreasing through ``eps_schedule``, then polishes with a few
    exact-Hessian Newton steps to rounding level. Stops each stage when the
    gradient sup-norm falls below tol * (1 + |E|). The returned potential is
    gauge fixed to mass-weighted mean zero; the reported energy is the
    unregularized p-energy of the final iterate.

    Raises :class:`NoConvergence` (with the partial report attached) if any
    stage exhausts ``max_iter``.
    """
    from .optim import lbfgs_minimize

    ops = ops or assemble_operators(mesh, metric)
    if p is None:
        p = mesh.dim
    theta0 = circle_class.theta0
    phi = np.zeros(mesh.num_vertices) if init_phi is None else np.array(init_phi, float)

    stages = []
    total_iters = 0
    grad_sup = np.inf
    for eps in eps_schedule:

        def fun_grad(x, _eps=eps):
            return _value_and_gradient(ops, theta0 + ops.d0 @ x, p, _eps)

        def stop(f, g):
            return float(np.abs(g).max()) <= tol * (1.0 + abs(f))

        phi, f, g, iters, converged = lbfgs_minimize(
            fun_grad, phi, stop=stop, max_iter=max_iter, memory=10
        )
        grad_sup = float(np.abs(g).max())
        stages.append(StageReport(eps, f, grad_sup, iters))
        total_iters += iters
        if not converged:
            report = _final_report(ops, circle_class, phi, p, stages, total_iters, grad_sup)
            raise NoConvergence(
                f"stage eps={eps:g} hit the {max_iter}-iteration cap "
                f"(grad sup {grad_sup:.3e})",
                report=report,
            )

    phi, grad_sup = _newton_polish(ops, theta0, phi, p, eps_schedule[-1])
    phi = phi - mass_mean(ops, phi)
    report = _final_report(ops, circle_class, phi, p, stages, total_iters, grad_sup)
    return CircleMap(circle_class, phi), report


def _final_report(ops, circle_class, phi, p, stages, iters, grad_sup):
    theta = circle_class.theta0 + ops.d0 @ phi
    dens, terms = _energy_terms(ops, theta, p, 0.0)
    return SolveReport(
        energy=float(terms.sum()),
        iterations=iters,
        grad_sup=grad_sup,
        stages=tuple(stages),
        min_density=float(dens.min()),
        max_density=float(dens.max()),
    )


def align_rotation(mesh, metric, a, b, *, ops=None):
    """Optimal constant circle rotation between two maps of the same class.

    Returns ``(phase, distance)``: phase is the mass-weighted mean of
    phi_a - phi_b, distance the sup-norm of the phase-corrected difference.
    """
    if a.winding != b.winding:
        raise ClassMismatch(f"winding {a.winding} != {b.winding}")
    if a.phi.shape != b.phi.shape:
        raise ClassMismatch("maps live on different meshes")
    ops = ops or assemble_operators(mesh, metric)
    diff = a.phi - b.phi
    phase = mass_mean(ops, diff)
    return phase, float(np.abs(diff - phase).max())


def vertex_angles(mesh, metric, cmap, *, ops=None):
    """Single-valued vertex angles of the circle map, integrated over a
    spanning tree from vertex 0 (well defined modulo 2*pi)."""
    ops = ops or assemble_operators(mesh, metric)
    theta = cmap.theta(ops)
    n = mesh.num_vertices
    adj = [[] for _ in range(n)]
    for i, (u, v) in enumerate(ops.edges):
        adj[int(u)].append((int(v), i, 1.0))
        adj[int(v)].append((int(u), i, -1.0))
    alpha = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v, ei, s in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    alpha[v] = alpha[u] + s * theta[ei]
                    nxt.append(v)
        frontier = nxt
    return alpha


def dump_circle_map(cmap, path):
    """Text dump: winding header then one ``vertex_id phi`` line per vertex."""
    with open(path, "w", encoding="ascii") as f:
        f.write("winding " + " ".join(str(w) for w in cmap.winding) + "\n")
        for i, v in enumerate(cmap.phi):
            f.write(f"{i} {float(v)!r}\n")


def load_circle_map(mesh, path):
    """Rebuild a CircleMap from a dump, reconstructing the class on the mesh."""
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().split()
        if not header or header[0] != "winding":
            raise UnsupportedTopology("bad circle map header")
        winding = tuple(int(w) for w in header[1:])
        phi = np.zeros(mesh.num_vertices)
        for line in f:
            idx, val = line.split()
            phi[int(idx)] = float(val)
    return CircleMap(class_from_winding(mesh, winding), phi)
