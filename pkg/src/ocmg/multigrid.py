"""V/W-cycle driver, exact coarse solve, and the solve-to-tolerance loop.

The coarse problem is solved exactly by a pivoted dense factorization; the
velocity-tracking systems keep their constant-pressure nullspace, which the
driver removes by pinning on the coarsest level and by mean projection
after every correction.  The outer loop implements the measurement
protocol: zero right-hand side, seeded random start, iterate until the
weighted norm of the iterate drops by the prescribed factor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (BlockSystem, build_poisson_system,
                       build_stokes_system, pressure_mean_projection)
from .mesh import build_hierarchy
from .smoothers import SmootherKind, SmootherState
from .sparse import DenseLU
from .transfer import system_transfer

MAX_COARSE_DIM = 5000
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class CycleConfig:
    """Multigrid cycle parameters.

    ``nu_pre``/``nu_post`` count smoothing steps before and after the
    coarse-grid correction; the W-cycle recurses twice per level.
    """

    smoother: SmootherKind
    cycle: str = "w"
    nu_pre: int = 2
    nu_post: int = 2
    coarsest_level: int = 1
    max_iterations: int = 200
    tolerance: float = 1e-6
    rng_seed: int = 1234

    def __post_init__(self):
        if self.cycle not in ("v", "w"):
            raise ValueError("cycle must be 'v' or 'w'")
        if self.nu_pre + self.nu_post < 1:
            raise ValueError("need at least one smoothing step per cycle")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class SolveReport:
    """Outcome of one solve: counts, norm history, convergence flags."""

    iterations: int
    norm_history: list
    converged: bool
    wall_time: float
    seed: int | None = None
    diverged: bool = False


class CoarseSolver:
    """Exact solve on the coarsest level via pivoted dense LU.

    For velocity tracking one pressure and one adjoint-pressure dof are
    pinned to zero, the right-hand side is projected consistent, and the
    solution is re-centered to zero mean in both pressure fields.
    """

    def __init__(self, system: BlockSystem):
        if system.n > MAX_COARSE_DIM:
            raise ValueError(
                f"coarsest system has dimension {system.n} > "
                f"{MAX_COARSE_DIM}; raise coarsest_level")
        self.system = system
        dense = system.matrix.to_dense()
        self.pinned = []
        if system.problem == "stokes":
            for name in ("pressure", "adjoint_pressure"):
                idx = system.layout.offset(name)
                dense[idx, :] = 0.0
                dense[:, idx] = 0.0
                dense[idx, idx] = 1.0
                self.pinned.append(idx)
        self.lu = DenseLU(dense)

    def solve(self, rhs):
        b = np.array(rhs, dtype=np.float64)
        if self.system.problem == "stokes":
            for name in ("pressure", "adjoint_pressure"):
                sl = self.system.layout.slice_of(name)
                b[sl] -= b[sl].mean()
            for idx in self.pinned:
                b[idx] = 0.0
        x = self.lu.solve(b)
        pressure_mean_projection(self.system, x)
        return x


class Multigrid:
    """Multigrid solver over a hierarchy of assembled systems.

    ``systems`` runs coarse to fine; ``transfers[i]`` connects
    ``systems[i]`` (coarse) with ``systems[i+1]`` (fine).
    """

    def __init__(self, systems, transfers, config: CycleConfig):
        if len(transfers) != len(systems) - 1:
            raise ValueError("need one transfer pair per consecutive "
                             "level pair")
        if systems[0].level != config.coarsest_level:
            raise ValueError("coarsest assembled level does not match the "
                             "configured coarsest_level")
        self.systems = systems
        self.transfers = transfers
        self.config = config
        self.coarse = CoarseSolver(systems[0])
        self.states = [None] + [SmootherState(s, config.smoother)
                                for s in systems[1:]]

    @property
    def finest(self):
        return self.systems[-1]

    def cycle(self, level_index, x, rhs):
        """One multigrid cycle on the given hierarchy index (0 = coarsest).

        Smooths, restricts the defect, recurses (once for a V-cycle,
        twice for a W-cycle) or solves the coarsest level exactly, adds
        the prolongated correction, refreshes the residual and smooths
        again.
        """
        if level_index == 0:
            return self.coarse.solve(rhs)
        system = self.systems[level_index]
        state = self.states[level_index]
        transfer = self.transfers[level_index - 1]

        r = system.residual(x, rhs)
        for _ in range(self.config.nu_pre):
            state.sweep(x, r)

        coarse_rhs = transfer.restriction.matvec(r)
        correction = np.zeros(self.systems[level_index - 1].n)
        recursions = 1 if self.config.cycle == "v" else 2
        for _ in range(recursions):
            correction = self.cycle(level_index - 1, correction, coarse_rhs)
        x += transfer.prolongation.matvec(correction)
        pressure_mean_projection(system, x)

        r = system.residual(x, rhs)
        for _ in range(self.config.nu_post):
            state.sweep(x, r, post=True)
        return x

    def solve(self, x0=None):
        """Drive cycles until the weighted norm of the iterate drops by the
        configured factor.

        The right-hand side is zero, so the exact solution is zero and
        the iterate is the error; its history is recorded in the weighted
        norm.  Divergence (growth beyond 1e6x) aborts with flags set.
        """
        system = self.finest
        seed = self.config.rng_seed
        t0 = time.perf_counter()
        if x0 is None:
            rng = np.random.default_rng(seed)
            x = rng.uniform(-1.0, 1.0, system.n)
        else:
            x = np.array(x0, dtype=np.float64)
        pressure_mean_projection(system, x)
        rhs = np.zeros(system.n)

        norm0 = system.norm(x)
        history = [norm0]
        if norm0 == 0.0:
            return SolveReport(iterations=0, norm_history=history,
                               converged=True,
                               wall_time=time.perf_counter() - t0, seed=seed)
        converged = False
        diverged = False
        iterations = 0
        for _ in range(self.config.max_iterations):
            x = self.cycle(len(self.systems) - 1, x, rhs)
            pressure_mean_projection(system, x)
            iterations += 1
            norm = system.norm(x)
            history.append(norm)
            if norm <= self.config.tolerance * norm0:
                converged = True
                break
            if norm > DIVERGENCE_FACTOR * norm0 or not np.isfinite(norm):
                diverged = True
                break
        return SolveReport(iterations=iterations, norm_history=history,
                           converged=converged,
                           wall_time=time.perf_counter() - t0, seed=seed,
                           diverged=diverged)


def assemble_hierarchy(problem, k_min, k_max, alpha):
    """Assembled systems (coarse to fine) and matching transfer pairs."""
    builders = {"poisson": build_poisson_system,
                "stokes": build_stokes_system}
    if problem not in builders:
        raise ValueError(f"unknown problem '{problem}'")
    hierarchy = build_hierarchy(k_min, k_max)
    systems = [builders[problem](lv, alpha) for lv in hierarchy.levels]
    transfers = [system_transfer(c, f)
                 for c, f in zip(systems[:-1], systems[1:])]
    return systems, transfers


def build_solver(problem, k_max, alpha, config: CycleConfig):
    """Assemble everything from the configured coarsest level up to
    ``k_max`` and wire up the solver."""
    systems, transfers = assemble_hierarchy(problem, config.coarsest_level,
                                            k_max, alpha)
    return Multigrid(systems, transfers, config)
