"""JIT-compiled sweep kernels.

Each kernel updates the iterate and the maintained residual in place and
returns the number of multiply-add operations that touched matrix entries,
so sweep costs of the different methods can be compared directly.  The
``row_*`` arrays are the compressed-row storage of the operator, the
``col_*`` arrays its column-compressed mirror (needed because a change of
x_i updates the residual through column i).  ``row_scaled`` holds the row
entries pre-divided by the diagonal weight of their column.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def normal_sweep(row_off, row_col, row_scaled, col_off, col_row, col_val,
                 weight, tau, x, r, update):
    """One damped least-squares Richardson step, two-phase.

    Phase one computes every component of the scaled correction from the
    entering residual; phase two applies the corrections and downdates the
    residual column by column.
    """
    n = x.shape[0]
    ops = 0
    for i in range(n):
        q = 0.0
        for t in range(row_off[i], row_off[i + 1]):
            q += row_scaled[t] * r[row_col[t]]
        update[i] = tau * q / weight[i]
        ops += row_off[i + 1] - row_off[i]
    for i in range(n):
        p = update[i]
        x[i] += p
        for t in range(col_off[i], col_off[i + 1]):
            r[col_row[t]] -= col_val[t] * p
        ops += col_off[i + 1] - col_off[i]
    return ops


@njit(cache=True)
def lsgs_sweep(row_off, row_col, row_scaled, col_off, col_row, col_val,
               n_diag, x, r, forward):
    """One Gauss-Seidel sweep on the weighted normal equations.

    Visits the unknowns in index order (or reversed), computing each
    correction from the current residual and downdating the residual
    immediately, so later unknowns see the earlier updates.
    """
    n = x.shape[0]
    ops = 0
    if forward:
        start, stop, step = 0, n, 1
    else:
        start, stop, step = n - 1, -1, -1
    for i in range(start, stop, step):
        q = 0.0
        for t in range(row_off[i], row_off[i + 1]):
            q += row_scaled[t] * r[row_col[t]]
        p = q / n_diag[i]
        x[i] += p
        for t in range(col_off[i], col_off[i + 1]):
            r[col_row[t]] -= col_val[t] * p
        ops += (row_off[i + 1] - row_off[i]) + (col_off[i + 1] - col_off[i])
    return ops


@njit(cache=True)
def collective_sweep(col_off, col_row, col_val, mass_diag, stiff_diag,
                     alpha, x, r):
    """Collective Gauss-Seidel over state/adjoint pairs, undamped.

    Node i owns unknowns (i, i+n_nodes); the local 2x2 system is solved in
    closed form.  The determinant -m^2/alpha - k^2 adds two negative terms,
    so it never cancels.
    """
    n_nodes = mass_diag.shape[0]
    ops = 0
    for i in range(n_nodes):
        j = i + n_nodes
        m = mass_diag[i]
        k = stiff_diag[i]
        det = -m * m / alpha - k * k
        ra = r[i]
        rb = r[j]
        s = (-m / alpha * ra - k * rb) / det
        t = (-k * ra + m * rb) / det
        x[i] += s
        x[j] += t
        for tt in range(col_off[i], col_off[i + 1]):
            r[col_row[tt]] -= col_val[tt] * s
        for tt in range(col_off[j], col_off[j + 1]):
            r[col_row[tt]] -= col_val[tt] * t
        ops += (col_off[i + 1] - col_off[i]) + (col_off[j + 1] - col_off[j])
    return ops


@njit(cache=True)
def vanka_sweep(patch_off, patch_dofs, patch_inv, patch_size, col_off,
                col_row, col_val, tau, x, r, local_r, local_s, forward):
    """Multiplicative patch smoother sweep with damping.

    For each patch in the given direction: gather the current residual on
    the patch dofs, apply the prefactorized local inverse, add the damped
    update, and downdate the residual through the touched columns.
    """
    n_patches = patch_off.shape[0] - 1
    ops = 0
    if forward:
        start, stop, step = 0, n_patches, 1
    else:
        start, stop, step = n_patches - 1, -1, -1
    for p in range(start, stop, step):
        lo = patch_off[p]
        m = patch_size[p]
        for a in range(m):
            local_r[a] = r[patch_dofs[lo + a]]
        for a in range(m):
            acc = 0.0
            for b in range(m):
                acc += patch_inv[p, a, b] * local_r[b]
            local_s[a] = tau * acc
        for a in range(m):
            c = patch_dofs[lo + a]
            s = local_s[a]
            x[c] += s
            for t in range(col_off[c], col_off[c + 1]):
                r[col_row[t]] -= col_val[t] * s
            ops += col_off[c + 1] - col_off[c]
    return ops


@njit(cache=True)
def gather_patch_matrices(patch_off, patch_dofs, patch_size, row_off,
                          row_col, row_val, scratch_map, out):
    """Extract the dense local matrix of every patch from the operator."""
    n_patches = patch_off.shape[0] - 1
    for p in range(n_patches):
        lo = patch_off[p]
        m = patch_size[p]
        for a in range(m):
            scratch_map[patch_dofs[lo + a]] = a
        for a in range(m):
            i = patch_dofs[lo + a]
            for t in range(row_off[i], row_off[i + 1]):
                b = scratch_map[row_col[t]]
                if b >= 0:
                    out[p, a, b] = row_val[t]
        for a in range(m):
            scratch_map[patch_dofs[lo + a]] = -1
