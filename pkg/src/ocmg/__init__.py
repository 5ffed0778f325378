"""All-at-once geometric multigrid for two PDE-constrained control problems.

The package assembles the coupled state/adjoint saddle-point systems of a
scalar elliptic control problem (linear elements) and a velocity-tracking
flow control problem (Taylor-Hood elements) on nested uniform grids, and
solves them with V/W-cycles built on five interchangeable smoothers: a
damped normal-equation Richardson iteration, its forward and symmetrized
Gauss-Seidel variants, a collective state/adjoint pair smoother, and a
vertex-patch smoother.  A dense analysis toolbox verifies the stability
and smoothing estimates behind the solver on small levels.
"""

from .sparse import (ColumnView, DenseLU, SingularMatrixError, SparseMatrix,
                     dense_lu_solve, matvec, sparse_triple_diag, transpose)
from .mesh import (DofMap, MeshHierarchy, MeshLevel, build_hierarchy,
                   build_mesh_level, p1_dofs, p2_dofs)
from .assembly import (BlockSystem, FieldLayout, assemble_p1,
                       assemble_taylor_hood, build_poisson_system,
                       build_stokes_system, pressure_mean_projection,
                       recover_control, tracking_rhs)
from .transfer import (TransferPair, block_transfer, p1_prolongation,
                       p2_prolongation, system_transfer)
from .smoothers import (SmootherKind, SmootherState, build_vanka_patches,
                        cgs_sweep, lsgs_sweep, make_smoother,
                        normal_equation_sweep, slsgs_sweep, vanka_sweep)
from .multigrid import (CoarseSolver, CycleConfig, Multigrid, SolveReport,
                        assemble_hierarchy, build_solver)
from .analysis import (SmoothingCurve, check_smoothing_bound,
                       dense_error_propagation, inverse_inequality_factor,
                       smoothing_norm, stability_constants, stability_row)

__version__ = "0.1.0"

__all__ = [
    "BlockSystem", "CoarseSolver", "ColumnView", "CycleConfig", "DenseLU",
    "DofMap", "FieldLayout", "MeshHierarchy", "MeshLevel", "Multigrid",
    "SingularMatrixError", "SmootherKind", "SmootherState", "SmoothingCurve",
    "SolveReport", "SparseMatrix", "TransferPair", "assemble_hierarchy",
    "assemble_p1", "assemble_taylor_hood", "block_transfer",
    "build_hierarchy", "build_mesh_level", "build_poisson_system",
    "build_solver", "build_stokes_system", "build_vanka_patches",
    "cgs_sweep", "check_smoothing_bound", "dense_error_propagation",
    "dense_lu_solve", "inverse_inequality_factor", "lsgs_sweep",
    "make_smoother", "matvec", "normal_equation_sweep", "p1_dofs",
    "p1_prolongation", "p2_dofs", "p2_prolongation",
    "pressure_mean_projection", "recover_control", "slsgs_sweep",
    "smoothing_norm", "sparse_triple_diag", "stability_constants",
    "stability_row", "system_transfer", "tracking_rhs", "transpose",
    "vanka_sweep",
]
