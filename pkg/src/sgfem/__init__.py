"""Adaptive stochastic Galerkin FEM for affine-parametric elliptic PDEs.

Tensor-product Galerkin discretizations (P1 finite elements times Legendre
chaos), two-level spatial and hierarchical parametric error estimation, four
marking strategies, and the adaptive refinement loop, with a CLI front end.
"""

from .driver import (
    AdaptiveTrace,
    IterationRecord,
    StepChecks,
    contraction_series,
    cumulative_cost,
    effectivity,
    fit_rate,
    reference_solution,
    run_adaptive,
)
from .estimators import (
    ErrorIndicators,
    K_OVERLAP,
    overall,
    parametric_indicators,
    spatial_indicators,
)
from .galerkin import (
    EnhancedSolution,
    GalerkinSolution,
    SolverError,
    TensorSystem,
    assemble_coupling,
    assemble_load,
    assemble_stiffness,
    b0_energy,
    b_energy,
    prolong,
    prolongation_matrix,
    solve,
    solve_enhanced,
)
from .indices import (
    IndexSet,
    MultiIndex,
    ZERO,
    active_dimension,
    detail_index_set,
    unit_index,
)
from .legendre import coupling_coefficient, gauss_quadrature, legendre_eval
from .marking import MarkingDecision, MarkingParams, decide, doerfler, maximum_mark
from .mesh import (
    Mesh,
    MeshAudit,
    TwoLevelOverlay,
    initial_lshape,
    mesh_audit,
    read_mesh,
    refine,
    uniform_refine,
    unit_square,
    write_mesh,
)
from .problem import (
    ContrastBounds,
    ProblemSpec,
    amplitude_from_tau,
    contrast_bounds,
    fourier_mode,
    lshape_benchmark,
    mode_frequencies,
    parse_config,
    spec_from_config,
)

__version__ = "0.1.0"
