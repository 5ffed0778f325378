"""Element matrices and the two all-at-once saddle-point block systems.

The distributed-control problem couples a state equation with its adjoint:
eliminating the control leaves a symmetric indefinite 2x2 (scalar elliptic
state equation, P1) or 4x4 (Stokes velocity tracking, Taylor-Hood) block
system per grid level.  Alongside the operator each level carries the SPD
block weight that makes the problem uniformly well conditioned in the
regularization parameter, and its diagonal, which drives the smoothers and
the stopping criterion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .mesh import MeshLevel, p1_dofs, p2_dofs
from .sparse import SparseMatrix, sparse_triple_diag

# degree-4 quadrature on the reference triangle (6 points, weights sum to 1)
_QW = np.array([0.1099517436553218676383263481167,
                0.1099517436553218676383263481167,
                0.1099517436553218676383263481167,
                0.2233815896780114656950070084332,
                0.2233815896780114656950070084332,
                0.2233815896780114656950070084332])
_a1 = 0.0915762135097707434595714634022
_a2 = 0.4459484909159648863183292538831
_QP = np.array([[1.0 - 2.0 * _a1, _a1, _a1],
                [_a1, 1.0 - 2.0 * _a1, _a1],
                [_a1, _a1, 1.0 - 2.0 * _a1],
                [1.0 - 2.0 * _a2, _a2, _a2],
                [_a2, 1.0 - 2.0 * _a2, _a2],
                [_a2, _a2, 1.0 - 2.0 * _a2]])  # barycentric


def p2_shape_values(lam):
    """Values of the 6 P2 shape functions at barycentric points (nq, 3).

    Dof order: 3 vertex functions, then midpoint functions of local edges
    (0,1), (1,2), (2,0).
    """
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])


def p2_shape_gradients(lam):
    """Reference-coordinate gradients of the P2 shapes, (nq, 6, 2)."""
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # grad lambda_i
    nq = lam.shape[0]
    g = np.zeros((nq, 6, 2))
    for i in range(3):
        g[:, i] = (4 * lam[:, i] - 1)[:, None] * dl[i]
    pairs = [(0, 1), (1, 2), (2, 0)]
    for m, (i, j) in enumerate(pairs):
        g[:, 3 + m] = 4 * (lam[:, j][:, None] * dl[i]
                           + lam[:, i][:, None] * dl[j])
    return g


def p1_local_matrices(coords):
    """Exact local P1 mass and pure-Laplace stiffness for one triangle."""
    coords = np.asarray(coords, dtype=np.float64)
    x, y = coords[:, 0], coords[:, 1]
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    area = 0.5 * ((x[1] - x[0]) * (y[2] - y[0])
                  - (x[2] - x[0]) * (y[1] - y[0]))
    mass = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    lap = (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)
    return mass, lap


def _triangle_geometry(mesh):
    p = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.empty_like(jac)                 # inverse transpose of jac
    inv_t[:, 0, 0] = jac[:, 1, 1]
    inv_t[:, 0, 1] = -jac[:, 1, 0]
    inv_t[:, 1, 0] = -jac[:, 0, 1]
    inv_t[:, 1, 1] = jac[:, 0, 0]
    inv_t /= det[:, None, None]
    return p, det, inv_t


def _scatter(rows, cols, vals, shape):
    return scipy.sparse.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def _assemble_p1_parts(mesh):
    """Global P1 mass and pure-Laplace stiffness (scipy CSR)."""
    p, det, _ = _triangle_geometry(mesh)
    nt = mesh.n_triangles
    x = p[..., 0]
    y = p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]],
                 axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]],
                 axis=1)
    area = 0.5 * det
    mass_loc = (np.ones((3, 3)) + np.eye(3))[None] * (area / 12.0)[:, None,
                                                                   None]
    lap_loc = (b[:, :, None] * b[:, None, :]
               + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]
    l2g = mesh.triangles
    rows = np.repeat(l2g, 3, axis=1)
    cols = np.tile(l2g, (1, 3))
    nv = mesh.n_vertices
    mass = _scatter(rows, cols, mass_loc.reshape(nt, 9), (nv, nv))
    lap = _scatter(rows, cols, lap_loc.reshape(nt, 9), (nv, nv))
    return mass, lap


def assemble_p1(mesh):
    """P1 mass matrix and the stiffness of the operator -Laplace + identity.

    The scalar model problem has a reaction term and natural boundary
    conditions, so the stiffness is the pure-Laplace part plus the mass
    matrix; both returned matrices are symmetric positive definite and no
    dofs are eliminated.
    """
    mass, lap = _assemble_p1_parts(mesh)
    return (SparseMatrix.from_scipy(mass),
            SparseMatrix.from_scipy(lap + mass))


def _p2_local_to_global(mesh):
    nv = mesh.n_vertices
    return np.hstack([mesh.triangles, nv + mesh.triangle_edges])  # (nt, 6)


def assemble_p2_scalar_full(mesh):
    """Scalar P2 mass and pure-Laplace stiffness, no dofs eliminated."""
    p, det, inv_t = _triangle_geometry(mesh)
    nt = mesh.n_triangles
    area = 0.5 * det
    vals = p2_shape_values(_QP)          # (nq, 6)
    grads = p2_shape_gradients(_QP)      # (nq, 6, 2)
    mass_loc = np.einsum("q,qa,qb->ab", _QW, vals, vals)[None] \
        * area[:, None, None]
    phys = np.einsum("tid,qad->tqai", inv_t, grads)   # (nt, nq, 6, 2)
    lap_loc = np.einsum("q,tqai,tqbi->tab", _QW, phys, phys) \
        * area[:, None, None]
    l2g = _p2_local_to_global(mesh)
    rows = np.repeat(l2g, 6, axis=1)
    cols = np.tile(l2g, (1, 6))
    n = mesh.n_vertices + mesh.n_edges
    mass = _scatter(rows, cols, mass_loc.reshape(nt, 36), (n, n))
    lap = _scatter(rows, cols, lap_loc.reshape(nt, 36), (n, n))
    return mass, lap


def assemble_divergence_full(mesh):
    """Negative-divergence coupling, P1 pressures x P2 velocities, full.

    Entry (q, j) of the x-part is -integral of psi_q * d/dx phi_j; the
    transpose of the stacked pair is the discrete gradient.
    """
    p, det, inv_t = _triangle_geometry(mesh)
    nt = mesh.n_triangles
    area = 0.5 * det
    grads = p2_shape_gradients(_QP)
    p1_vals = _QP                         # P1 shapes equal barycentrics
    phys = np.einsum("tid,qad->tqai", inv_t, grads)
    dx_loc = -np.einsum("q,qp,tqa->tpa", _QW, p1_vals, phys[..., 0]) \
        * area[:, None, None]
    dy_loc = -np.einsum("q,qp,tqa->tpa", _QW, p1_vals, phys[..., 1]) \
        * area[:, None, None]
    l2g_p1 = mesh.triangles
    l2g_p2 = _p2_local_to_global(mesh)
    rows = np.repeat(l2g_p1, 6, axis=1)
    cols = np.tile(l2g_p2, (1, 3))
    np_, n2 = mesh.n_vertices, mesh.n_vertices + mesh.n_edges
    dx = _scatter(rows, cols, dx_loc.reshape(nt, 18), (np_, n2))
    dy = _scatter(rows, cols, dy_loc.reshape(nt, 18), (np_, n2))
    return dx, dy


def assemble_taylor_hood(mesh):
    """Taylor-Hood blocks with velocity boundary dofs eliminated.

    Returns per-scalar-component P2 mass and stiffness on the interior
    dofs, and the divergence coupling from the full two-component interior
    velocity vector (x-component dofs then y-component dofs) to the P1
    pressures.
    """
    mass_f, lap_f = assemble_p2_scalar_full(mesh)
    dx_f, dy_f = assemble_divergence_full(mesh)
    interior = p2_dofs(mesh).interior_dofs()
    mass = mass_f[np.ix_(interior, interior)]
    lap = lap_f[np.ix_(interior, interior)]
    div = scipy.sparse.hstack([dx_f[:, interior], dy_f[:, interior]])
    return (SparseMatrix.from_scipy(mass), SparseMatrix.from_scipy(lap),
            SparseMatrix.from_scipy(div))


@dataclass(frozen=True)
class FieldLayout:
    """Ordered fields of a block system with their global offsets."""

    names: tuple
    counts: tuple
    kinds: tuple

    @property
    def n(self):
        return sum(self.counts)

    def offset(self, name):
        off = 0
        for nm, cnt in zip(self.names, self.counts):
            if nm == name:
                return off
            off += cnt
        raise KeyError(name)

    def slice_of(self, name):
        off = self.offset(name)
        return slice(off, off + self.counts[self.names.index(name)])


@dataclass
class BlockSystem:
    """One grid level of an all-at-once control system.

    ``matrix`` is the symmetric indefinite operator; ``norm_diag`` the
    strictly positive diagonal weight used by the least-squares smoothers
    and the convergence norm; ``weight_blocks`` the per-field SPD weight
    blocks (None for the pressure fields, whose weight involves an inverse
    and is only formed densely in the analysis routines).
    """

    matrix: SparseMatrix
    norm_diag: np.ndarray
    weight_blocks: list
    layout: FieldLayout
    alpha: float
    problem: str
    level: int
    mesh: MeshLevel
    mass_diag: np.ndarray | None = None
    stiff_diag: np.ndarray | None = None
    p2_interior: np.ndarray | None = None
    n_velocity_scalar: int | None = None
    divergence: SparseMatrix | None = None
    velocity_weight: SparseMatrix | None = None

    @property
    def n(self):
        return self.layout.n

    def residual(self, x, rhs=None):
        r = -self.matrix.matvec(x)
        if rhs is not None:
            r += rhs
        return r

    def norm(self, x):
        """Weighted norm induced by the diagonal weight."""
        return float(np.sqrt(np.dot(self.norm_diag * x, x)))


def build_poisson_system(mesh, alpha):
    """Assemble the 2x2 scalar-control block system on one level."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    mass, stiff = assemble_p1(mesh)
    m = mass.to_scipy()
    k = stiff.to_scipy()
    a = scipy.sparse.bmat([[m, k], [k, -m / alpha]], format="csr")
    w = m + np.sqrt(alpha) * k
    w_diag = w.diagonal()
    n = mesh.n_vertices
    layout = FieldLayout(names=("state", "adjoint"), counts=(n, n),
                         kinds=("p1", "p1"))
    return BlockSystem(
        matrix=SparseMatrix.from_scipy(a),
        norm_diag=np.concatenate([w_diag, w_diag / alpha]),
        weight_blocks=[SparseMatrix.from_scipy(w),
                       SparseMatrix.from_scipy(w / alpha)],
        layout=layout, alpha=float(alpha), problem="poisson",
        level=mesh.level, mesh=mesh,
        mass_diag=mass.diagonal(), stiff_diag=stiff.diagonal())


def build_stokes_system(mesh, alpha):
    """Assemble the 4x4 velocity-tracking block system on one level.

    The constant-pressure directions of the pressure and adjoint-pressure
    fields stay in the operator's nullspace; the solver removes them by
    mean projection.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if mesh.level < 1:
        raise ValueError("velocity tracking needs mesh level >= 1")
    mass_s, stiff_s, div = assemble_taylor_hood(mesh)
    ms = mass_s.to_scipy()
    ks = stiff_s.to_scipy()
    d = div.to_scipy()
    m_v = scipy.sparse.block_diag([ms, ms], format="csr")
    k_v = scipy.sparse.block_diag([ks, ks], format="csr")
    dt = d.T.tocsr()
    a = scipy.sparse.bmat([
        [m_v, None, k_v, dt],
        [None, None, d, None],
        [k_v, dt, -m_v / alpha, None],
        [d, None, None, None],
    ], format="csr")

    ws = ms + np.sqrt(alpha) * ks
    w_v = scipy.sparse.block_diag([ws, ws], format="csr")
    w_hat = np.concatenate([ws.diagonal(), ws.diagonal()])
    p_hat = alpha * sparse_triple_diag(div, 1.0 / w_hat)

    n_int = ms.shape[0]
    n_p = mesh.n_vertices
    layout = FieldLayout(
        names=("velocity", "pressure", "adjoint_velocity",
               "adjoint_pressure"),
        counts=(2 * n_int, n_p, 2 * n_int, n_p),
        kinds=("p2", "p1", "p2", "p1"))
    w_v_sm = SparseMatrix.from_scipy(w_v)
    return BlockSystem(
        matrix=SparseMatrix.from_scipy(a),
        norm_diag=np.concatenate([w_hat, p_hat, w_hat / alpha,
                                  p_hat / alpha]),
        weight_blocks=[w_v_sm, None, w_v_sm.scaled(1.0 / alpha), None],
        layout=layout, alpha=float(alpha), problem="stokes",
        level=mesh.level, mesh=mesh,
        p2_interior=p2_dofs(mesh).interior_index(),
        n_velocity_scalar=n_int,
        divergence=div,
        velocity_weight=SparseMatrix.from_scipy(ws))


def adjoint_field_name(system):
    return ("adjoint" if system.problem == "poisson"
            else "adjoint_velocity")


def recover_control(system, x):
    """Optimal control from the adjoint slice of a solution vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (system.n,):
        raise ValueError("solution vector has wrong length")
    return x[system.layout.slice_of(adjoint_field_name(system))] \
        / system.alpha


def tracking_rhs(system, target):
    """Right-hand side for a constant desired state.

    ``target`` is a scalar for the scalar problem or an (x, y) pair for
    velocity tracking; only the primary-state block rows are loaded.
    """
    rhs = np.zeros(system.n)
    a = system.matrix.to_scipy()
    if system.problem == "poisson":
        sl = system.layout.slice_of("state")
        mass = a[sl, sl]
        rhs[sl] = mass @ np.full(sl.stop - sl.start, float(target))
    else:
        sl = system.layout.slice_of("velocity")
        mass = a[sl, sl]
        tx, ty = target
        vec = np.concatenate([
            np.full(system.n_velocity_scalar, float(tx)),
            np.full(system.n_velocity_scalar, float(ty))])
        rhs[sl] = mass @ vec
    return rhs


def pressure_mean_projection(system, x):
    """Remove the constant modes of both pressure fields in place."""
    if system.problem != "stokes":
        return x
    for name in ("pressure", "adjoint_pressure"):
        sl = system.layout.slice_of(name)
        x[sl] -= x[sl].mean()
    return x
