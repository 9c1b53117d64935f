"""The adaptive solve-estimate-mark-refine loop and its diagnostics.

Each iteration solves the Galerkin system on the current (mesh, index set)
pair, computes the two-level spatial and hierarchical parametric indicators,
marks, and performs exactly one of mesh refinement or parametric enrichment.
Energy identities and the per-step error-reduction lower bound are checked
online on every run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    ErrorIndicators,
    K_OVERLAP,
    parametric_indicators,
    spatial_indicators,
)
from .galerkin import (
    GalerkinSolution,
    TensorSystem,
    b_energy,
    prolong,
    solve,
)
from .indices import IndexSet, detail_index_set
from .marking import MarkingDecision, MarkingParams, decide
from .mesh import Mesh, initial_lshape, refine, uniform_refine
from .problem import ProblemSpec, contrast_bounds

__all__ = [
    "IterationRecord",
    "StepChecks",
    "AdaptiveTrace",
    "run_adaptive",
    "cumulative_cost",
    "reference_solution",
    "effectivity",
    "fit_rate",
]


@dataclass(frozen=True)
class IterationRecord:
    level: int
    refine_type: str  # enrichment performed after this iterate
    dim_x: int
    card_p: int
    n_dof: int
    eta: float
    eta_spatial: float
    eta_parametric: float
    energy_sq: float
    n_marked: int
    max_active_dim: int
    solver_iterations: int
    solver_residual: float
    wall_time: float


@dataclass(frozen=True)
class StepChecks:
    """Online diagnostics for the step from level l to l+1."""

    level: int
    energy_increment: float
    diff_energy_sq: float
    pythagoras_deviation: float
    reduction_lower_bound: float  # (lambda/K) * eta(marked and realized)^2
    reduction_ratio: float  # lower bound / diff energy


@dataclass
class AdaptiveTrace:
    criterion: str
    params: MarkingParams
    tol: float
    solver_tol: float
    records: list[IterationRecord] = field(default_factory=list)
    checks: list[StepChecks] = field(default_factory=list)
    stop_reason: str = "running"
    final_mesh: Mesh | None = None
    final_indices: IndexSet | None = None
    final_detail: IndexSet | None = None
    final_solution: GalerkinSolution | None = None
    contraction_ratios: list[float] = field(default_factory=list)

    @property
    def reached_tol(self) -> bool:
        return self.stop_reason == "tol"

    @property
    def num_levels(self) -> int:
        return len(self.records)

    def dof_series(self) -> np.ndarray:
        return np.asarray([r.n_dof for r in self.records], dtype=np.float64)

    def eta_series(self) -> np.ndarray:
        return np.asarray([r.eta for r in self.records], dtype=np.float64)

    def energy_series(self) -> np.ndarray:
        return np.asarray([r.energy_sq for r in self.records], dtype=np.float64)


def cumulative_cost(trace: AdaptiveTrace) -> int:
    """Total degrees of freedom summed over all iterations."""
    return int(sum(r.n_dof for r in trace.records))


_CHECK_SLACK = 1e-6


def run_adaptive(
    spec: ProblemSpec,
    criterion: str = "A",
    params: MarkingParams | None = None,
    tol: float = 1e-2,
    max_iter: int = 200,
    max_dof: int = 200_000,
    solver_tol: float = 1e-10,
    mesh: Mesh | None = None,
    check: bool = True,
) -> AdaptiveTrace:
    """Run the adaptive loop until the estimate drops below `tol` or a cap
    trips.  With ``check`` the energy identities and the per-step reduction
    lower bound are asserted online (raises AssertionError on violation)."""
    params = params or MarkingParams()
    params.validate(criterion)
    mesh = mesh if mesh is not None else initial_lshape()
    indices = IndexSet()
    lam = contrast_bounds(spec).lam

    trace = AdaptiveTrace(
        criterion=criterion, params=params, tol=tol, solver_tol=solver_tol
    )
    prev_solution: GalerkinSolution | None = None
    prev_energy: float | None = None
    pending_marked_sq: float | None = None
    level = 0

    while True:
        t0 = time.perf_counter()
        detail = detail_index_set(indices)
        n_modes = max(indices.max_dimension(), detail.max_dimension())
        system = TensorSystem(mesh, indices, spec, n_modes=n_modes)

        guess = None
        if prev_solution is not None:
            guess = prolong(prev_solution, mesh, indices, system)
        solution = solve(system, tol=solver_tol, initial=guess)
        energy = b_energy(solution, solution)

        if prev_solution is not None and guess is not None:
            diff = GalerkinSolution(
                mesh=mesh,
                indices=indices,
                coeffs=solution.coeffs - guess.coeffs,
                system=system,
            )
            diff_energy = b_energy(diff, diff)
            increment = energy - prev_energy
            pyth_dev = abs(increment - diff_energy) / max(energy, 1e-300)
            lower = lam / K_OVERLAP * pending_marked_sq
            ratio = lower / diff_energy if diff_energy > 0 else math.inf
            trace.checks.append(
                StepChecks(
                    level=level - 1,
                    energy_increment=increment,
                    diff_energy_sq=diff_energy,
                    pythagoras_deviation=pyth_dev,
                    reduction_lower_bound=lower,
                    reduction_ratio=ratio,
                )
            )
            if check:
                if increment < -1e-8 * max(energy, 1.0):
                    raise AssertionError(
                        f"energy decreased at level {level}: {increment}"
                    )
                if pyth_dev > _CHECK_SLACK:
                    raise AssertionError(
                        f"energy orthogonality violated at level {level}: {pyth_dev}"
                    )
                if lower > (1.0 + _CHECK_SLACK) * diff_energy:
                    raise AssertionError(
                        f"error-reduction lower bound violated at level {level}: "
                        f"{lower} > {diff_energy}"
                    )

        overlay = uniform_refine(mesh)
        indicators = ErrorIndicators(
            spatial=spatial_indicators(solution, overlay, spec),
            parametric=parametric_indicators(solution, detail, spec),
            overlay=overlay,
            detail=detail,
        )

        decision: MarkingDecision | None = None
        refine_type = "final"
        n_marked = 0
        stop: str | None = None
        next_mesh = mesh
        next_indices = indices

        if indicators.eta <= tol:
            stop = "tol"
        elif level >= max_iter:
            stop = "max_iter"
        else:
            decision = decide(criterion, indicators, params, mesh, overlay)
            if decision.kind == "terminate":
                stop = "estimator_zero"
            elif decision.kind == "spatial":
                next_mesh = refine(mesh, decision.spatial_marked, overlay)
                realized = [
                    overlay.edge_position[e]
                    for e in next_mesh.new_vertex_edge.values()
                    if e in overlay.edge_position
                ]
                pending_marked_sq = indicators.spatial_subset_sq(realized)
                refine_type = "spatial"
                n_marked = len(decision.spatial_marked)
            else:
                next_indices = indices.union(
                    detail[i] for i in decision.parametric_marked
                )
                pending_marked_sq = indicators.parametric_subset_sq(
                    decision.parametric_marked
                )
                refine_type = "parametric"
                n_marked = len(decision.parametric_marked)

            if stop is None:
                next_dof = next_mesh.free_nodes.size * len(next_indices)
                if next_dof > max_dof:
                    stop = "max_dof"
                    refine_type = "final"

        trace.records.append(
            IterationRecord(
                level=level,
                refine_type=refine_type,
                dim_x=mesh.free_nodes.size,
                card_p=len(indices),
                n_dof=solution.num_dof,
                eta=indicators.eta,
                eta_spatial=indicators.eta_spatial,
                eta_parametric=indicators.eta_parametric,
                energy_sq=energy,
                n_marked=n_marked,
                max_active_dim=indices.max_dimension(),
                solver_iterations=solution.iterations,
                solver_residual=solution.residual,
                wall_time=time.perf_counter() - t0,
            )
        )

        if stop is not None:
            trace.stop_reason = stop
            trace.final_mesh = mesh
            trace.final_indices = indices
            trace.final_detail = detail
            trace.final_solution = solution
            return trace

        prev_solution = solution
        prev_energy = energy
        mesh = next_mesh
        indices = next_indices
        level += 1


def reference_solution(
    trace: AdaptiveTrace, spec: ProblemSpec, solver_tol: float = 1e-10
) -> GalerkinSolution:
    """Reference Galerkin solution on the uniform refinement of the final
    mesh with the final index set enlarged twice by detail sets; the
    reference space contains every space visited by the run.

    The double index enrichment keeps the reference gap meaningful at the
    last few levels, where a single enrichment is barely richer than the
    space the estimator already resolves and would inflate the effectivity
    indices there.
    """
    if trace.final_mesh is None:
        raise ValueError("trace has no final state (run did not finish)")
    fine = uniform_refine(trace.final_mesh).fine
    once = trace.final_indices.union(trace.final_detail)
    indices = once.union(detail_index_set(once))
    n_modes = indices.max_dimension()
    system = TensorSystem(fine, indices, spec, n_modes=n_modes)
    guess = prolong(trace.final_solution, fine, indices, system)
    return solve(system, tol=solver_tol, initial=guess)


def effectivity(
    trace: AdaptiveTrace, u_ref: GalerkinSolution, solver_tol: float = 1e-10
) -> list[float | None]:
    """Effectivity series: estimate over reference energy error per level.

    Entries are None where the reference gap is within solver noise
    (denominator below 10 * solver_tol * reference energy).
    """
    ref_energy = b_energy(u_ref, u_ref)
    out: list[float | None] = []
    for rec in trace.records:
        gap = ref_energy - rec.energy_sq
        if gap <= 10.0 * solver_tol * ref_energy:
            out.append(None)
        else:
            out.append(rec.eta / math.sqrt(gap))
    return out


def contraction_series(trace: AdaptiveTrace, u_ref: GalerkinSolution) -> list[float]:
    """Ratios e_{l+1}/e_l of reference energy errors; logged, not asserted."""
    ref_energy = b_energy(u_ref, u_ref)
    errs = [math.sqrt(max(ref_energy - r.energy_sq, 0.0)) for r in trace.records]
    return [b / a for a, b in zip(errs, errs[1:]) if a > 0.0]


def fit_rate(trace: AdaptiveTrace) -> float:
    """Least-squares slope of log(eta) against log(dof) over the trace."""
    dofs = trace.dof_series()
    etas = trace.eta_series()
    keep = (etas > 0.0) & (dofs > 0.0)
    if keep.sum() < 3:
        raise ValueError("need at least three records with positive estimates")
    x = np.log(dofs[keep])
    y = np.log(etas[keep])
    if np.ptp(x) == 0.0:
        raise ValueError("degenerate abscissae (constant dof count)")
    return float(np.polyfit(x, y, 1)[0])
