"""Two-level spatial and hierarchical parametric a posteriori estimators.

Spatial indicators test the residual of the current solution against hat
functions of the uniformly refined mesh at the new interior vertices; the
scaling is the corresponding diagonal entry of the mean-field stiffness on
the fine mesh.  Parametric indicators solve one mean-field problem per detail
index for the residual component in that direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .galerkin import (
    GalerkinSolution,
    assemble_coupling,
    assemble_load,
    assemble_stiffness,
    prolongation_matrix,
)
from .indices import IndexSet
from .mesh import TwoLevelOverlay
from .problem import ProblemSpec

__all__ = [
    "ErrorIndicators",
    "spatial_indicators",
    "parametric_indicators",
    "overall",
    "K_OVERLAP",
]

# hat supports of new interior vertices overlap each coarse triangle at most
# three times in 2D (one per interior edge)
K_OVERLAP = 3


def spatial_indicators(
    u: GalerkinSolution,
    overlay: TwoLevelOverlay,
    spec: ProblemSpec,
    quad_order: int = 5,
) -> np.ndarray:
    """Two-level indicators eta(z) for all z in N+, in overlay order.

    Prolongs the solution to the uniformly refined mesh, forms the full
    residual there, and restricts to the rows of the new interior vertices.
    """
    if overlay.coarse is not u.mesh:
        raise ValueError("overlay was not built from the solution's mesh")
    fine = overlay.fine
    n_modes = u.indices.max_dimension()

    A_fine = [
        assemble_stiffness(fine, spec.coefficient(m), quad_order)
        for m in range(n_modes + 1)
    ]
    P = prolongation_matrix(u.mesh, fine)
    U1 = P @ u.coeffs
    R = assemble_load(fine, spec.rhs, u.indices, quad_order)
    R -= A_fine[0] @ U1
    for m in range(1, n_modes + 1):
        G = assemble_coupling(u.indices, u.indices, m)
        if G.nnz:
            R -= A_fine[m] @ (G @ U1.T).T

    rows = fine.free_index[overlay.nplus]
    if np.any(rows < 0):
        raise ValueError("new interior vertex flagged as boundary")
    denom = A_fine[0].diagonal()[rows]
    return np.sqrt((R[rows] ** 2).sum(axis=1) / denom)


def parametric_indicators(
    u: GalerkinSolution,
    detail: IndexSet,
    spec: ProblemSpec,
    quad_order: int = 5,
) -> np.ndarray:
    """Hierarchical indicators eta(nu) for all nu in `detail`, in set order.

    For each detail index, the mean-field Galerkin problem
    A_0 e = r_nu is solved on the current mesh and eta(nu)^2 = e . r_nu.
    """
    if len(detail) == 0:
        return np.zeros(0)
    n_modes = max(u.indices.max_dimension(), detail.max_dimension())
    system = u.system
    if system is not None and system.n_modes >= n_modes:
        A = system.A
        a0_solver = system.a0_solver
    else:
        A = [
            assemble_stiffness(u.mesh, spec.coefficient(m), quad_order)
            for m in range(n_modes + 1)
        ]
        from scipy.sparse.linalg import splu

        a0_solver = splu(A[0].tocsc())

    # residual r[z, nu] = -B(u, phi_z P_nu); the load vanishes off the zero index
    R = np.zeros((u.coeffs.shape[0], len(detail)))
    for m in range(1, n_modes + 1):
        G = assemble_coupling(u.indices, detail, m)
        if G.nnz:
            R -= A[m] @ (G.T @ u.coeffs.T).T
    E = a0_solver.solve(R)
    return np.sqrt(np.maximum((E * R).sum(axis=0), 0.0))


@dataclass(frozen=True)
class ErrorIndicators:
    """Per-vertex spatial and per-index parametric indicators with totals.

    ``spatial[i]`` belongs to the i-th member of ``overlay.nplus``;
    ``parametric[j]`` to the j-th member of ``detail``.
    """

    spatial: np.ndarray
    parametric: np.ndarray
    overlay: TwoLevelOverlay | None = None
    detail: IndexSet | None = None

    @cached_property
    def eta_spatial(self) -> float:
        return math.sqrt(float((self.spatial**2).sum()))

    @cached_property
    def eta_parametric(self) -> float:
        return math.sqrt(float((self.parametric**2).sum()))

    @cached_property
    def eta(self) -> float:
        return math.sqrt(self.eta_spatial**2 + self.eta_parametric**2)

    def spatial_subset_sq(self, positions) -> float:
        """Squared aggregate over a subset of N+ positions."""
        positions = np.asarray(list(positions), dtype=np.int64)
        if positions.size == 0:
            return 0.0
        return float((self.spatial[positions] ** 2).sum())

    def parametric_subset_sq(self, positions) -> float:
        positions = np.asarray(list(positions), dtype=np.int64)
        if positions.size == 0:
            return 0.0
        return float((self.parametric[positions] ** 2).sum())


def overall(indicators: ErrorIndicators) -> tuple[float, float, float]:
    """Overall, spatial, and parametric estimate totals."""
    return indicators.eta, indicators.eta_spatial, indicators.eta_parametric
