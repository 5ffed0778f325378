"""Canonical grid transfers between consecutive nested levels.

Prolongation interpolates a coarse finite element function at the fine
dof locations; because the spaces are nested this is the exact embedding.
Restriction is the plain transpose (scale 1), which makes the coarse
Galerkin operator equal the assembled coarse matrix exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .mesh import (MeshLevel, locate_triangle, p2_dof_points, p2_dofs,
                   vertex_parents)
from .assembly import FieldLayout, p2_shape_values
from .sparse import SparseMatrix


@dataclass(frozen=True)
class TransferPair:
    """Prolongation (fine x coarse) and its exact transpose."""

    prolongation: SparseMatrix
    restriction: SparseMatrix

    @classmethod
    def from_prolongation(cls, p):
        return cls(prolongation=p, restriction=p.transpose())


def p1_prolongation(coarse, fine):
    """Linear interpolation from a coarse vertex grid to its refinement.

    A fine vertex that is a coarse vertex copies its value; an edge
    midpoint averages the edge endpoints.
    """
    pv, pe = vertex_parents(coarse, fine)
    nf = fine.n_vertices
    rows, cols, vals = [], [], []
    own = pv >= 0
    rows.append(np.where(own)[0])
    cols.append(pv[own])
    vals.append(np.ones(own.sum()))
    mid = ~own
    ends = coarse.edges[pe[mid]]
    rows.append(np.repeat(np.where(mid)[0], 2))
    cols.append(ends.ravel())
    vals.append(np.full(2 * mid.sum(), 0.5))
    p = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nf, coarse.n_vertices)).tocsr()
    return SparseMatrix.from_scipy(p)


def p2_prolongation(coarse, fine):
    """Quadratic interpolation between nested P2 spaces, boundary removed.

    Each fine dof row holds the values of the coarse basis functions of
    the containing coarse triangle at the fine node (at most 6 nonzeros);
    rows and columns of boundary-eliminated dofs are dropped on both
    levels consistently.
    """
    if fine.level != coarse.level + 1:
        raise ValueError("meshes are not consecutive refinement levels")
    fine_map = p2_dofs(fine)
    coarse_map = p2_dofs(coarse)
    fine_int = fine_map.interior_dofs()
    coarse_idx = coarse_map.interior_index()

    points = p2_dof_points(fine)[fine_int]
    tri = locate_triangle(coarse, points)
    tri_verts = coarse.triangles[tri]          # (n, 3)
    p0 = coarse.vertices[tri_verts[:, 0]]
    jac = np.stack([coarse.vertices[tri_verts[:, 1]] - p0,
                    coarse.vertices[tri_verts[:, 2]] - p0], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    rel = points - p0
    xi = (jac[:, 1, 1] * rel[:, 0] - jac[:, 0, 1] * rel[:, 1]) / det
    eta = (-jac[:, 1, 0] * rel[:, 0] + jac[:, 0, 0] * rel[:, 1]) / det
    lam = np.column_stack([1.0 - xi - eta, xi, eta])
    weights = p2_shape_values(lam)             # (n, 6)

    nvc = coarse.n_vertices
    coarse_dofs = np.hstack([tri_verts,
                             nvc + coarse.triangle_edges[tri]])  # (n, 6)
    local_cols = coarse_idx[coarse_dofs]
    keep = (weights != 0.0) & (local_cols >= 0)
    rows = np.repeat(np.arange(points.shape[0]), 6)[keep.ravel()]
    cols = local_cols.ravel()[keep.ravel()]
    vals = weights.ravel()[keep.ravel()]
    p = scipy.sparse.coo_matrix(
        (vals, (rows, cols)),
        shape=(fine_int.size, coarse_map.interior_dofs().size)).tocsr()
    return SparseMatrix.from_scipy(p)


def block_transfer(layout, field_prolongations):
    """Block-diagonal transfer assembled from per-field prolongations.

    ``field_prolongations`` lists one prolongation per layout field (a
    two-component velocity field passes the same scalar prolongation,
    applied per component).
    """
    blocks = []
    for name, count, kind, p in zip(layout.names, layout.counts,
                                    layout.kinds, field_prolongations):
        if kind == "p2":
            if count != 2 * p.nrows:
                raise ValueError(f"field {name}: fine dof count {count} "
                                 f"does not match 2x prolongation rows")
            blocks.extend([p.to_scipy(), p.to_scipy()])
        else:
            if count != p.nrows:
                raise ValueError(f"field {name}: fine dof count {count} "
                                 f"does not match prolongation rows")
            blocks.append(p.to_scipy())
    full = scipy.sparse.block_diag(blocks, format="csr")
    return TransferPair.from_prolongation(SparseMatrix.from_scipy(full))


def poisson_transfer(coarse, fine, fine_layout):
    p = p1_prolongation(coarse, fine)
    return block_transfer(fine_layout, [p, p])


def stokes_transfer(coarse, fine, fine_layout):
    p2 = p2_prolongation(coarse, fine)
    p1 = p1_prolongation(coarse, fine)
    return block_transfer(fine_layout, [p2, p1, p2, p1])


def system_transfer(coarse_system, fine_system):
    """Transfer pair matching two consecutive assembled systems."""
    if coarse_system.problem != fine_system.problem:
        raise ValueError("systems solve different problems")
    if fine_system.problem == "poisson":
        return poisson_transfer(coarse_system.mesh, fine_system.mesh,
                                fine_system.layout)
    return stokes_transfer(coarse_system.mesh, fine_system.mesh,
                           fine_system.layout)
