"""The five smoothing iterations, each a single in-place sweep.

All sweeps keep iterate and residual consistent: on entry r must equal
rhs - A x, and it does again on exit (up to roundoff).  The least-squares
family (damped Richardson, forward/backward Gauss-Seidel and its
symmetrized variant) works on the weighted normal equations and applies to
both problems; the collective pair smoother is specific to the scalar
control problem and the patch smoother to velocity tracking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .assembly import BlockSystem
from .sparse import SingularMatrixError

SMOOTHER_NAMES = ("normal", "lsgs", "slsgs", "cgs", "vanka")

# damping defaults from the experiment protocol; the Gauss-Seidel type
# methods run undamped
DEFAULT_TAU = {
    ("normal", "poisson"): 0.4,
    ("normal", "stokes"): 0.35,
    ("vanka", "stokes"): 0.4,
}


@dataclass(frozen=True)
class SmootherKind:
    """Smoother selector plus damping parameter where one applies."""

    name: str
    tau: float | None = None

    def __post_init__(self):
        if self.name not in SMOOTHER_NAMES:
            raise ValueError(f"unknown smoother '{self.name}'; choose from "
                             f"{SMOOTHER_NAMES}")
        if self.tau is not None and not 0.0 < self.tau < 2.0:
            raise ValueError("damping parameter must lie in (0, 2)")

    def resolved_tau(self, problem):
        if self.tau is not None:
            return self.tau
        return DEFAULT_TAU.get((self.name, problem))


def check_applicability(kind, problem):
    if kind.name == "cgs" and problem != "poisson":
        raise ValueError("the collective pair smoother only applies to the "
                         "scalar control problem")
    if kind.name == "vanka" and problem != "stokes":
        raise ValueError("the patch smoother only applies to the velocity "
                         "tracking problem")
    if kind.name in ("normal", "vanka") and kind.resolved_tau(problem) is None:
        raise ValueError(f"smoother '{kind.name}' needs a damping parameter")


@dataclass
class VankaPatches:
    """Vertex patches with prefactorized local inverses.

    ``offsets``/``dofs`` concatenate the global dof indices of each patch;
    ``inverses`` is padded to the largest patch size.  Vertices whose patch
    would contain no velocity dofs (their local matrix is identically
    zero) are skipped.
    """

    offsets: np.ndarray
    dofs: np.ndarray
    sizes: np.ndarray
    inverses: np.ndarray
    vertex_ids: np.ndarray

    @property
    def n_patches(self):
        return self.sizes.shape[0]

    def dofs_of(self, p):
        return self.dofs[self.offsets[p]:self.offsets[p + 1]]


def build_vanka_patches(system: BlockSystem):
    """One patch per vertex: velocity/adjoint dofs at the vertex and on
    its incident edges plus the two pressure dofs at the vertex.

    Boundary dofs never enter a patch.  A patch without velocity dofs is
    dropped; a singular local factorization raises with the patch id.
    """
    if system.problem != "stokes":
        raise ValueError("patches are built for velocity tracking systems")
    mesh = system.mesh
    layout = system.layout
    p2i = system.p2_interior
    n_s = system.n_velocity_scalar
    off_v = layout.offset("velocity")
    off_p = layout.offset("pressure")
    off_av = layout.offset("adjoint_velocity")
    off_ap = layout.offset("adjoint_pressure")
    nv = mesh.n_vertices
    adj_off, adj_edges = mesh.vertex_edge_adjacency()

    offsets = [0]
    dofs = []
    vertex_ids = []
    for v in range(nv):
        scalar = []
        if p2i[v] >= 0:
            scalar.append(p2i[v])
        for e in adj_edges[adj_off[v]:adj_off[v + 1]]:
            idx = p2i[nv + e]
            if idx >= 0:
                scalar.append(idx)
        if not scalar:
            # corner vertices whose incident edges all lie on the boundary:
            # take the interior edge midpoints of the triangles containing
            # the vertex, so the vertex's divergence rows stay covered
            tris = np.where((mesh.triangles == v).any(axis=1))[0]
            for e in np.unique(mesh.triangle_edges[tris]):
                idx = p2i[nv + e]
                if idx >= 0:
                    scalar.append(idx)
        if not scalar:
            continue  # nothing couples: local matrix would be all zero
        patch = []
        for base in (off_v, off_av):
            patch.extend(base + i for i in scalar)
            patch.extend(base + n_s + i for i in scalar)
        patch.append(off_p + v)
        patch.append(off_ap + v)
        dofs.extend(patch)
        offsets.append(len(dofs))
        vertex_ids.append(v)

    offsets = np.asarray(offsets, dtype=np.int64)
    dofs = np.asarray(dofs, dtype=np.int64)
    sizes = np.diff(offsets)
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)

    n_patches = sizes.shape[0]
    mmax = int(sizes.max())
    mats = np.zeros((n_patches, mmax, mmax))
    csr = system.matrix
    scratch = np.full(system.n, -1, dtype=np.int64)
    kernels.gather_patch_matrices(offsets, dofs, sizes, csr.row_offsets,
                                  csr.col_indices, csr.values, scratch, mats)

    # symmetric diagonal scaling before inversion keeps the factorization
    # accurate for extreme regularization parameters; pad with identity
    for p in range(n_patches):
        mats[p, sizes[p]:, sizes[p]:] = np.eye(mmax - sizes[p])
    diag = np.abs(np.einsum("pii->pi", mats))
    scale = 1.0 / np.sqrt(np.where(diag > 0.0, diag, 1.0))
    scaled = mats * scale[:, :, None] * scale[:, None, :]
    try:
        inv = np.linalg.inv(scaled)
    except np.linalg.LinAlgError:
        for p in range(n_patches):
            try:
                np.linalg.inv(scaled[p])
            except np.linalg.LinAlgError:
                raise SingularMatrixError(
                    f"singular local matrix for patch {p} "
                    f"(vertex {vertex_ids[p]})") from None
        raise
    inverses = inv * scale[:, :, None] * scale[:, None, :]
    if not np.all(np.isfinite(inverses)):
        bad = np.where(~np.isfinite(inverses).all(axis=(1, 2)))[0][0]
        raise SingularMatrixError(f"non-finite local inverse for patch "
                                  f"{bad} (vertex {vertex_ids[bad]})")
    return VankaPatches(offsets=offsets, dofs=dofs, sizes=sizes,
                        inverses=inverses, vertex_ids=vertex_ids)


class SmootherState:
    """Per-level smoother data bound to one block system.

    Precomputes the column view of the operator, the weighted row entries,
    and whatever the chosen sweep needs (normal-equation diagonal, local
    pair solves, patch factorizations).  Sweeps mutate iterate and
    residual in place and accumulate touched-entry counts in
    ``op_count``.
    """

    def __init__(self, system: BlockSystem, kind: SmootherKind):
        check_applicability(kind, system.problem)
        self.system = system
        self.kind = kind
        self.tau = kind.resolved_tau(system.problem)
        csr = system.matrix
        self.row_off = csr.row_offsets
        self.row_col = csr.col_indices
        self.row_val = csr.values
        cv = csr.column_view()
        self.col_off = cv.col_offsets
        self.col_row = cv.row_indices
        self.col_val = cv.values
        weight = system.norm_diag
        self.weight = weight
        self.row_scaled = csr.values / weight[csr.col_indices]
        self.op_count = 0
        self._update = np.empty(system.n)

        if kind.name in ("normal", "lsgs", "slsgs"):
            rows = np.repeat(np.arange(system.n),
                             np.diff(self.row_off))
            n_diag = np.zeros(system.n)
            np.add.at(n_diag, rows, self.row_val * self.row_scaled)
            if np.any(n_diag <= 0.0):
                raise ValueError("operator has an empty row; the "
                                 "normal-equation diagonal degenerates")
            self.n_diag = n_diag
        if kind.name == "cgs":
            self.mass_diag = system.mass_diag
            self.stiff_diag = system.stiff_diag
        if kind.name == "vanka":
            self.patches = build_vanka_patches(system)
            mmax = int(self.patches.sizes.max())
            self._local_r = np.empty(mmax)
            self._local_s = np.empty(mmax)

    def sweep(self, x, r, post=False):
        """One smoothing step of the bound kind.

        ``post`` marks post-smoothing position in a cycle; the patch
        smoother then runs its patch loop in reverse, which symmetrizes
        the cycle and keeps its convergence rate level-independent.  The
        other smoothers ignore the flag.
        """
        name = self.kind.name
        if name == "normal":
            return normal_equation_sweep(self, x, r)
        if name == "lsgs":
            return lsgs_sweep(self, x, r)
        if name == "slsgs":
            return slsgs_sweep(self, x, r)
        if name == "cgs":
            return cgs_sweep(self, x, r)
        return vanka_sweep(self, x, r,
                           order="backward" if post else "forward")


def make_smoother(system, kind, tau=None):
    """Bind a smoother to a system; ``kind`` may be a name or a kind."""
    if isinstance(kind, str):
        kind = SmootherKind(name=kind, tau=tau)
    elif tau is not None:
        kind = SmootherKind(name=kind.name, tau=tau)
    return SmootherState(system, kind)


def normal_equation_sweep(state, x, r):
    """Damped Richardson step on the weighted normal equations.

    The whole correction is computed from the entering residual, then
    applied; equivalent to one step with the dense operator
    tau * W^-1 A^T W^-1 acting on the residual.
    """
    state.op_count += kernels.normal_sweep(
        state.row_off, state.row_col, state.row_scaled, state.col_off,
        state.col_row, state.col_val, state.weight, state.tau, x, r,
        state._update)
    return x, r


def lsgs_sweep(state, x, r, order="forward"):
    """Least-squares Gauss-Seidel sweep in the given direction."""
    if order not in ("forward", "backward"):
        raise ValueError("order must be 'forward' or 'backward'")
    state.op_count += kernels.lsgs_sweep(
        state.row_off, state.row_col, state.row_scaled, state.col_off,
        state.col_row, state.col_val, state.n_diag, x, r,
        order == "forward")
    return x, r


def slsgs_sweep(state, x, r):
    """Symmetrized sweep: forward pass then backward pass."""
    lsgs_sweep(state, x, r, order="forward")
    lsgs_sweep(state, x, r, order="backward")
    return x, r


def cgs_sweep(state, x, r):
    """Collective Gauss-Seidel over state/adjoint pairs (scalar problem)."""
    if state.system.problem != "poisson":
        raise ValueError("collective sweep needs a scalar control system")
    state.op_count += kernels.collective_sweep(
        state.col_off, state.col_row, state.col_val, state.mass_diag,
        state.stiff_diag, state.system.alpha, x, r)
    return x, r


def vanka_sweep(state, x, r, tau=None, order="forward"):
    """Multiplicative patch sweep with damping (velocity tracking)."""
    if order not in ("forward", "backward"):
        raise ValueError("order must be 'forward' or 'backward'")
    t = state.tau if tau is None else tau
    p = state.patches
    state.op_count += kernels.vanka_sweep(
        p.offsets, p.dofs, p.inverses, p.sizes, state.col_off,
        state.col_row, state.col_val, t, x, r, state._local_r,
        state._local_s, order == "forward")
    return x, r
