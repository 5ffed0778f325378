"""Dense small-scale verification of the solver's convergence ingredients.

Three quantities are measured exactly on small levels: the extreme singular
values of the weight-scaled operator (uniform boundedness in the mesh size
and the regularization parameter), the factor by which the diagonal weight
dominates the block weight, and the smoothing-property curve
``eta(nu) = || L^-1/2 A S^nu L^-1/2 ||`` of each smoother's error
propagation operator S.  For the symmetrized least-squares Gauss-Seidel
smoother the curve is compared against its proven decay bound
``2^-1/2 * C * m^5/2 / sqrt(nu)`` with m the maximum row occupation and C
the measured norm of the weight-scaled operator.

The velocity-tracking systems are singular (constant pressures); all dense
paths pin the first pressure and first adjoint-pressure dof before
factorizing, which removes the nullspace.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assembly import BlockSystem
from .smoothers import SmootherKind, make_smoother

DENSE_LIMIT = 3000


def _pinned_indices(system):
    """Indices kept by the dense path (drops one p and one mu dof)."""
    keep = np.ones(system.n, dtype=bool)
    if system.problem == "stokes":
        keep[system.layout.offset("pressure")] = False
        keep[system.layout.offset("adjoint_pressure")] = False
    return np.where(keep)[0]


def pinned_dense_operator(system):
    """Dense operator and diagonal weight with the nullspace pinned away."""
    if system.n > DENSE_LIMIT:
        raise ValueError(f"system dimension {system.n} exceeds the dense "
                         f"analysis limit {DENSE_LIMIT}")
    keep = _pinned_indices(system)
    a = system.matrix.to_dense()[np.ix_(keep, keep)]
    weight = system.norm_diag[keep]
    return a, weight, keep


def _sym_inv_sqrt(block, label):
    vals, vecs = np.linalg.eigh(block)
    if vals.min() <= 0.0:
        raise ValueError(f"{label} weight block is not positive definite "
                         f"(min eigenvalue {vals.min():.3e})")
    return (vecs * (1.0 / np.sqrt(vals))) @ vecs.T


def dense_weight_blocks(system):
    """Dense per-field SPD weight blocks, nullspace pinned for stokes.

    The pressure-field blocks involve the inverse of the velocity weight
    and are only ever formed here, via dense solves.
    """
    if system.problem == "poisson":
        return [b.to_dense() for b in system.weight_blocks]
    ws = system.velocity_weight.to_dense()
    w_v = scipy.linalg.block_diag(ws, ws)
    d = system.divergence.to_dense()[1:, :]      # pin first pressure dof
    s_p = d @ np.linalg.solve(w_v, d.T)
    alpha = system.alpha
    return [w_v, alpha * s_p, w_v / alpha, s_p]


def _block_diag_inv_sqrt(system):
    blocks = dense_weight_blocks(system)
    parts = [_sym_inv_sqrt(b, name)
             for b, name in zip(blocks, system.layout.names)]
    return scipy.linalg.block_diag(*parts)


def stability_constants(system):
    """Extreme singular values of the weight-scaled operator.

    Returns (c_lower, c_upper): the smallest and largest singular value of
    ``Q^-1/2 A Q^-1/2``; boundedness of both, uniformly in level and
    regularization parameter, is the two-sided stability of the pairing.
    """
    a, _, keep = pinned_dense_operator(system)
    q_inv_sqrt = _block_diag_inv_sqrt(system)
    scaled = q_inv_sqrt @ a @ q_inv_sqrt
    svals = np.linalg.svd(scaled, compute_uv=False)
    return float(svals.min()), float(svals.max())


def inverse_inequality_factor(system):
    """Largest eigenvalue of ``L^-1/2 Q L^-1/2``.

    Equals the smallest constant c with Q <= c L in the quadratic-form
    sense; the smoothing bound uses the measured operator norm directly,
    so this factor is recorded rather than compensated.
    """
    _, weight, keep = pinned_dense_operator(system)
    q = scipy.linalg.block_diag(*dense_weight_blocks(system))
    scale = 1.0 / np.sqrt(weight)
    scaled = q * scale[:, None] * scale[None, :]
    return float(np.linalg.eigvalsh(scaled).max())


def weighted_operator_norm(system):
    """Spectral norm of ``L^-1/2 A L^-1/2`` (the measured C-bar)."""
    a, weight, _ = pinned_dense_operator(system)
    scale = 1.0 / np.sqrt(weight)
    return float(np.linalg.norm(a * scale[:, None] * scale[None, :], 2))


def dense_error_propagation(system, kind):
    """Error-propagation operator of one sweep, built from compact forms.

    Returns (S, A, weight) on the pinned dense system: one smoothing step
    maps the error e to S e.
    """
    if isinstance(kind, str):
        kind = SmootherKind(kind)
    a, weight, keep = pinned_dense_operator(system)
    n = a.shape[0]
    w_inv = 1.0 / weight
    name = kind.name
    tau = kind.resolved_tau(system.problem)
    if name in ("normal", "lsgs", "slsgs"):
        normal = a.T @ (w_inv[:, None] * a)
        if name == "normal":
            update = tau * (w_inv[:, None] * (a.T * w_inv[None, :]))
        elif name == "lsgs":
            update = np.linalg.solve(np.tril(normal),
                                     a.T * w_inv[None, :])
        else:
            n_hat = np.tril(normal) @ (np.tril(normal)
                                       / np.diag(normal)[None, :]).T
            update = np.linalg.solve(n_hat, a.T * w_inv[None, :])
        return np.eye(n) - update @ a, a, weight
    if name == "cgs":
        if system.problem != "poisson":
            raise ValueError("collective smoother needs the scalar problem")
        half = n // 2
        order = np.empty(n, dtype=np.int64)
        order[0::2] = np.arange(half)
        order[1::2] = np.arange(half) + half
        perm = np.zeros((n, n))
        perm[np.arange(n), order] = 1.0
        ap = perm @ a @ perm.T
        lower = np.tril(ap, -1)
        for i in range(half):
            lower[2 * i:2 * i + 2, 2 * i:2 * i + 2] = \
                ap[2 * i:2 * i + 2, 2 * i:2 * i + 2]
        update = perm.T @ np.linalg.inv(lower) @ perm
        return np.eye(n) - update @ a, a, weight
    # patch smoother: compose the damped local solves sequentially; the
    # local matrices are re-extracted from the pinned operator so patches
    # containing a pinned pressure dof simply shrink by it
    state = make_smoother(system, kind)
    keep_pos = np.full(system.n, -1, dtype=np.int64)
    keep_pos[keep] = np.arange(keep.size)
    update = np.zeros((n, n))
    residual_map = np.eye(n)
    for p in range(state.patches.n_patches):
        dofs = keep_pos[state.patches.dofs_of(p)]
        dofs = dofs[dofs >= 0]
        if dofs.size == 0:
            continue
        local = a[np.ix_(dofs, dofs)]
        step = tau * np.linalg.solve(local, residual_map[dofs, :])
        update[dofs, :] += step
        residual_map -= a[:, dofs] @ step
    return np.eye(n) - update @ a, a, weight


@dataclass
class SmoothingCurve:
    """Measured smoothing-property curve of one smoother.

    ``eta_measured[i]`` is ``||L^-1/2 A S^nu L^-1/2||`` at ``nus[i]``;
    ``eta_bound`` carries the proven decay bound where one exists (the
    symmetrized sweep), None elsewhere.  ``nus[0] == 0`` gives the
    weight-scaled operator norm itself.
    """

    smoother: str
    problem: str
    level: int
    alpha: float
    nus: list
    eta_measured: list
    eta_bound: list
    c_bar: float
    max_row_nnz: int


def slsgs_bound(c_bar, max_row_nnz, nu):
    """Proven decay bound of the symmetrized least-squares sweep."""
    return 2.0 ** (-0.5) * c_bar * max_row_nnz ** 2.5 / np.sqrt(nu)


def smoothing_norm(system, kind, nu_max):
    """Measure the smoothing curve for nu = 0..nu_max."""
    if isinstance(kind, str):
        kind = SmootherKind(kind)
    s, a, weight = dense_error_propagation(system, kind)
    scale = 1.0 / np.sqrt(weight)
    nnz = system.matrix.max_row_nnz()
    power = np.eye(a.shape[0])
    nus, etas, bounds = [], [], []
    c_bar = None
    for nu in range(nu_max + 1):
        t = (a @ power) * scale[:, None] * scale[None, :]
        eta = float(np.linalg.norm(t, 2))
        if nu == 0:
            c_bar = eta
        nus.append(nu)
        etas.append(eta)
        if kind.name == "slsgs" and nu >= 1:
            bounds.append(float(slsgs_bound(c_bar, nnz, nu)))
        else:
            bounds.append(None)
        power = power @ s
    return SmoothingCurve(smoother=kind.name, problem=system.problem,
                          level=system.level, alpha=system.alpha, nus=nus,
                          eta_measured=etas, eta_bound=bounds, c_bar=c_bar,
                          max_row_nnz=nnz)


@dataclass
class SmoothingBoundReport:
    """Outcome of checking the symmetrized sweep against its bound."""

    problem: str
    level: int
    alpha: float
    passed: bool
    curve: SmoothingCurve
    margins: list = field(default_factory=list)
    inverse_factor: float = 0.0
    violations: list = field(default_factory=list)

    def summary(self):
        state = "pass" if self.passed else "FAIL"
        worst = min(self.margins) if self.margins else float("nan")
        return (f"{self.problem} level {self.level} alpha {self.alpha:g}: "
                f"{state}, worst margin {worst:.3g}, "
                f"diagonal-dominance factor {self.inverse_factor:.3g}")


def check_smoothing_bound(system, nu_max=30):
    """Verify the symmetrized sweep satisfies its proven smoothing decay.

    The bound uses the measured weight-scaled operator norm, so it holds
    independently of the size of the diagonal-dominance factor, which is
    recorded in the report.
    """
    curve = smoothing_norm(system, SmootherKind("slsgs"), nu_max)
    margins, violations = [], []
    for nu, eta, bound in zip(curve.nus, curve.eta_measured,
                              curve.eta_bound):
        if bound is None:
            continue
        margins.append(bound / eta if eta > 0 else np.inf)
        if eta > bound:
            violations.append((nu, eta, bound))
    return SmoothingBoundReport(
        problem=system.problem, level=system.level, alpha=system.alpha,
        passed=not violations, curve=curve, margins=margins,
        inverse_factor=inverse_inequality_factor(system),
        violations=violations)


@dataclass
class StabilityRow:
    problem: str
    level: int
    alpha: float
    c_lower: float
    c_upper: float
    inverse_factor: float


def stability_row(system):
    lo, hi = stability_constants(system)
    return StabilityRow(problem=system.problem, level=system.level,
                        alpha=system.alpha, c_lower=lo, c_upper=hi,
                        inverse_factor=inverse_inequality_factor(system))


def write_smoothing_csv(path, curves):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem", "level", "alpha", "smoother", "nu",
                         "eta_measured", "eta_bound"])
        for c in curves:
            for nu, eta, bound in zip(c.nus, c.eta_measured, c.eta_bound):
                writer.writerow([c.problem, c.level, f"{c.alpha:g}",
                                 c.smoother, nu, f"{eta:.12g}",
                                 "" if bound is None else f"{bound:.12g}"])


def write_stability_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem", "level", "alpha", "c_lower", "c_upper",
                         "inverse_factor"])
        for r in rows:
            writer.writerow([r.problem, r.level, f"{r.alpha:g}",
                             f"{r.c_lower:.12g}", f"{r.c_upper:.12g}",
                             f"{r.inverse_factor:.12g}"])
