"""Marking kernels and the four composite refinement criteria.

Two kernels ship: minimal-cardinality bulk marking (greedy on descending
indicator values) and threshold marking relative to the maximum.  The four
criteria combine them and decide, per iteration, between mesh refinement and
parametric enrichment:

  A: dominant contributing estimate; bulk marking in both components.
  B: dominant error reduction (trial spatial refinement); bulk in both.
  C: like A, with threshold marking in the parameter domain.
  D: like B, with threshold marking in the parameter domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import ErrorIndicators
from .mesh import Mesh, TwoLevelOverlay, refine

__all__ = [
    "MarkingParams",
    "MarkingDecision",
    "doerfler",
    "maximum_mark",
    "decide",
    "CRITERIA",
]

CRITERIA = ("A", "B", "C", "D")


@dataclass(frozen=True)
class MarkingParams:
    """Marking parameters: bulk fractions for both components and the weight
    steering the choice between refinement types (values above one favor
    parametric enrichment)."""

    theta_x: float = 0.5
    theta_p: float = 0.5
    vartheta: float = 1.0

    def validate(self, criterion: str) -> None:
        if criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {criterion!r}, expected one of {CRITERIA}")
        if not 0.0 < self.theta_x <= 1.0:
            raise ValueError("theta_x must lie in (0, 1]")
        if criterion in ("A", "B"):
            if not 0.0 < self.theta_p <= 1.0:
                raise ValueError(f"theta_p must lie in (0, 1] for criterion {criterion}")
        else:
            if not 0.0 <= self.theta_p <= 1.0:
                raise ValueError(f"theta_p must lie in [0, 1] for criterion {criterion}")
        if self.vartheta <= 0.0:
            raise ValueError("vartheta must be positive")


@dataclass(frozen=True)
class MarkingDecision:
    """Outcome of a marking step: exactly one nonempty marked set, or
    termination when the estimate vanishes."""

    kind: str  # "spatial" | "parametric" | "terminate"
    spatial_marked: tuple[int, ...] = ()
    parametric_marked: tuple[int, ...] = ()
    case: str | None = None
    diagnostics: dict = field(default_factory=dict)


def doerfler(values: np.ndarray, theta: float) -> list[int]:
    """Minimal-cardinality position set capturing a theta^2 fraction of the
    squared total; greedy on descending values, ties broken by smaller id."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    values = np.asarray(values, dtype=np.float64)
    total = float((values**2).sum())
    goal = theta * theta * total
    if total == 0.0:
        return []
    order = np.lexsort((np.arange(values.size), -values))
    acc = 0.0
    marked: list[int] = []
    for i in order:
        if acc >= goal:
            break
        marked.append(int(i))
        acc += float(values[i]) ** 2
    _check_weak_marking_bulk(values, marked, theta)
    return marked


def maximum_mark(values: np.ndarray, theta_p: float) -> list[int]:
    """Positions with value within (1 - theta_p) of the largest one."""
    if not 0.0 <= theta_p <= 1.0:
        raise ValueError("theta_p must lie in [0, 1]")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return []
    threshold = (1.0 - theta_p) * float(values.max())
    marked = [int(i) for i in np.flatnonzero(values >= threshold)]
    _check_weak_marking_max(values, marked, theta_p)
    return marked


def _aggregate(values: np.ndarray, marked) -> float:
    if not marked:
        return 0.0
    # l2 norm of the marked entries; scale to guard against underflow of
    # the squares for subnormal indicator values
    sub = values[np.asarray(marked)]
    peak = float(np.abs(sub).max())
    if peak == 0.0:
        return 0.0
    return peak * math.sqrt(float(((sub / peak) ** 2).sum()))


def _check_weak_marking_bulk(values, marked, theta) -> None:
    # unmarked values are controlled by the marked aggregate
    if values.size == 0 or len(marked) == values.size:
        return
    unmarked_max = float(np.delete(values, marked).max()) if marked else float(values.max())
    bound = math.sqrt(max(1.0 - theta * theta, 0.0)) / theta * _aggregate(values, marked)
    if unmarked_max > bound * (1.0 + 1e-12) + 1e-300:
        raise AssertionError(
            f"bulk weak-marking property violated: {unmarked_max} > {bound}"
        )


def _check_weak_marking_max(values, marked, theta_p) -> None:
    if values.size == 0 or len(marked) == values.size:
        return
    unmarked_max = float(np.delete(values, marked).max())
    bound = (1.0 - theta_p) * _aggregate(values, marked)
    if unmarked_max > bound * (1.0 + 1e-12):
        raise AssertionError(
            f"maximum weak-marking property violated: {unmarked_max} > {bound}"
        )


def _trial_refinement_positions(
    mesh: Mesh, overlay: TwoLevelOverlay, trial_marked: list[int]
) -> list[int]:
    """Positions of N+ realized by the trial refinement (marked plus closure)."""
    if not trial_marked:
        return []
    trial = refine(mesh, trial_marked, overlay)
    pos = [
        overlay.edge_position[e]
        for e in trial.new_vertex_edge.values()
        if e in overlay.edge_position
    ]
    return sorted(pos)


def decide(
    criterion: str,
    indicators: ErrorIndicators,
    params: MarkingParams,
    mesh: Mesh,
    overlay: TwoLevelOverlay,
) -> MarkingDecision:
    """Run one of the four marking criteria on the current indicators."""
    params.validate(criterion)
    eta_x = indicators.eta_spatial
    eta_q = indicators.eta_parametric
    if eta_x == 0.0 and eta_q == 0.0:
        return MarkingDecision(kind="terminate")

    diag: dict = {"eta_spatial": eta_x, "eta_parametric": eta_q}

    if criterion in ("A", "C"):
        if params.vartheta * eta_q <= eta_x:
            marked = doerfler(indicators.spatial, params.theta_x)
            return MarkingDecision(
                kind="spatial", spatial_marked=tuple(marked), case="a", diagnostics=diag
            )
        if criterion == "A":
            marked = doerfler(indicators.parametric, params.theta_p)
        else:
            marked = maximum_mark(indicators.parametric, params.theta_p)
        return MarkingDecision(
            kind="parametric", parametric_marked=tuple(marked), case="b", diagnostics=diag
        )

    # criteria B and D: compare the estimated error reduction of a trial
    # spatial refinement against the marked parametric aggregate
    if criterion == "B":
        trial_param = doerfler(indicators.parametric, params.theta_p)
    else:
        trial_param = maximum_mark(indicators.parametric, params.theta_p)
    trial_spatial = doerfler(indicators.spatial, params.theta_x)
    realized = _trial_refinement_positions(mesh, overlay, trial_spatial)
    eta_trial_param = _aggregate(indicators.parametric, trial_param)
    eta_realized = math.sqrt(indicators.spatial_subset_sq(realized))
    diag |= {
        "trial_parametric": tuple(trial_param),
        "trial_spatial": tuple(trial_spatial),
        "realized_spatial": tuple(realized),
        "eta_trial_parametric": eta_trial_param,
        "eta_realized_spatial": eta_realized,
    }
    if params.vartheta * eta_trial_param <= eta_realized:
        return MarkingDecision(
            kind="spatial", spatial_marked=tuple(trial_spatial), case="a", diagnostics=diag
        )
    return MarkingDecision(
        kind="parametric", parametric_marked=tuple(trial_param), case="b", diagnostics=diag
    )
