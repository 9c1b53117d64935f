import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgfem import (
    ErrorIndicators,
    IndexSet,
    MarkingParams,
    TensorSystem,
    ZERO,
    decide,
    detail_index_set,
    doerfler,
    initial_lshape,
    lshape_benchmark,
    maximum_mark,
    parametric_indicators,
    refine,
    solve,
    spatial_indicators,
    uniform_refine,
    unit_index,
)

import oracles


class TestDoerfler:
    def test_total_zero_marks_nothing(self):
        assert doerfler(np.zeros(4), 0.5) == []

    def test_theta_one_marks_all_positive(self):
        marked = doerfler(np.array([3.0, 1.0, 2.0]), 1.0)
        assert sorted(marked) == [0, 1, 2]

    def test_greedy_descending_with_id_ties(self):
        marked = doerfler(np.array([2.0, 5.0, 5.0, 1.0]), 0.7)
        # 0.49 * 55 = 26.95; the two fives (ids 1 then 2) reach 50
        assert marked == [1, 2]

    def test_invalid_theta(self):
        for theta in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                doerfler(np.array([1.0]), theta)

    def test_matches_exhaustive_oracle_random(self):
        rng = np.random.default_rng(123)
        thetas = [round(0.1 * k, 1) for k in range(1, 11)]
        for _ in range(30):
            n = int(rng.integers(1, 13))
            values = rng.uniform(0.0, 1.0, n)
            sums = oracles.subset_sums(values**2)
            for theta in thetas:
                marked = doerfler(values, theta)
                k, best_sum = oracles.exhaustive_bulk(values, theta, sums)
                assert len(marked) == k
                got_sum = float((values[marked] ** 2).sum())
                assert got_sum == pytest.approx(best_sum, rel=1e-12)


class TestMaximumMark:
    def test_threshold_inclusive(self):
        marked = maximum_mark(np.array([1.0, 0.5, 0.49]), 0.5)
        assert marked == [0, 1]

    def test_theta_zero_marks_maxima_only(self):
        marked = maximum_mark(np.array([2.0, 3.0, 3.0]), 0.0)
        assert marked == [1, 2]

    def test_theta_one_marks_all(self):
        assert maximum_mark(np.array([5.0, 0.0, 1.0]), 1.0) == [0, 1, 2]

    def test_empty_input(self):
        assert maximum_mark(np.zeros(0), 0.5) == []

    def test_invalid_theta(self):
        with pytest.raises(ValueError):
            maximum_mark(np.array([1.0]), 1.2)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.0, 1e3), min_size=1, max_size=30),
    st.floats(0.05, 1.0),
)
def test_bulk_weak_marking_property(values, theta):
    values = np.asarray(values)
    marked = doerfler(values, theta)  # raises internally if violated
    if marked and len(marked) < values.size:
        unmarked = np.delete(values, marked)
        bound = math.sqrt(1.0 - theta**2) / theta * math.sqrt(
            float((values[marked] ** 2).sum())
        )
        assert unmarked.max() <= bound * (1 + 1e-9) + 1e-290


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.0, 1e3), min_size=1, max_size=30),
    st.floats(0.0, 1.0),
)
def test_maximum_weak_marking_property(values, theta_p):
    values = np.asarray(values)
    marked = maximum_mark(values, theta_p)
    if marked and len(marked) < values.size:
        unmarked = np.delete(values, marked)
        # max(marked) <= l2-aggregate(marked), and unlike the naive
        # sqrt-of-sum-of-squares it cannot underflow for subnormal values
        bound = (1.0 - theta_p) * float(values[marked].max())
        assert unmarked.max() <= bound * (1 + 1e-9)


class TestParams:
    def test_unknown_criterion(self):
        with pytest.raises(ValueError):
            MarkingParams().validate("E")

    def test_theta_p_ranges_by_criterion(self):
        MarkingParams(theta_p=0.0).validate("C")
        MarkingParams(theta_p=0.0).validate("D")
        for crit in ("A", "B"):
            with pytest.raises(ValueError):
                MarkingParams(theta_p=0.0).validate(crit)

    def test_theta_x_and_vartheta(self):
        with pytest.raises(ValueError):
            MarkingParams(theta_x=0.0).validate("A")
        with pytest.raises(ValueError):
            MarkingParams(vartheta=0.0).validate("A")


@pytest.fixture(scope="module")
def context():
    """Solved coarse instance with real indicators for decide()."""
    spec = lshape_benchmark()
    mesh = uniform_refine(initial_lshape()).fine
    P = IndexSet([ZERO, unit_index(1)])
    Q = detail_index_set(P)
    n_modes = max(P.max_dimension(), Q.max_dimension())
    u = solve(TensorSystem(mesh, P, spec, n_modes=n_modes))
    overlay = uniform_refine(mesh)
    ind = ErrorIndicators(
        spatial=spatial_indicators(u, overlay, spec),
        parametric=parametric_indicators(u, Q, spec),
        overlay=overlay,
        detail=Q,
    )
    return mesh, overlay, ind


class TestDecide:
    def test_terminate_on_zero_estimate(self, context):
        mesh, overlay, ind = context
        zero = ErrorIndicators(
            spatial=np.zeros_like(ind.spatial),
            parametric=np.zeros_like(ind.parametric),
            overlay=overlay,
            detail=ind.detail,
        )
        out = decide("A", zero, MarkingParams(), mesh, overlay)
        assert out.kind == "terminate"

    def test_case_a_spatial_when_dominant(self, context):
        mesh, overlay, ind = context
        # huge vartheta forces the parametric branch, tiny one the spatial
        big = decide("A", ind, MarkingParams(vartheta=1e6), mesh, overlay)
        small = decide("A", ind, MarkingParams(vartheta=1e-6), mesh, overlay)
        assert big.kind == "parametric" and big.parametric_marked
        assert small.kind == "spatial" and small.spatial_marked

    def test_boundary_is_inclusive(self, context):
        mesh, overlay, ind = context
        # vartheta * eta_q == eta_x exactly -> spatial case (a)
        vt = ind.eta_spatial / ind.eta_parametric
        out = decide("A", ind, MarkingParams(vartheta=vt), mesh, overlay)
        assert out.kind == "spatial"
        assert out.case == "a"

    def test_criterion_c_uses_maximum_marking(self, context):
        mesh, overlay, ind = context
        params = MarkingParams(theta_p=0.3, vartheta=1e6)
        a = decide("A", ind, params, mesh, overlay)
        c = decide("C", ind, params, mesh, overlay)
        assert set(a.parametric_marked) == set(doerfler(ind.parametric, 0.3))
        assert set(c.parametric_marked) == set(maximum_mark(ind.parametric, 0.3))

    def test_b_compares_realized_reduction(self, context):
        mesh, overlay, ind = context
        out = decide("B", ind, MarkingParams(), mesh, overlay)
        assert out.kind in ("spatial", "parametric")
        realized = out.diagnostics["realized_spatial"]
        trial = out.diagnostics["trial_spatial"]
        assert set(realized) >= set(trial)
        # the comparison uses the realized aggregate, not the marked one
        eta_re = math.sqrt(ind.spatial_subset_sq(realized))
        eta_tp = out.diagnostics["eta_trial_parametric"]
        if out.kind == "spatial":
            assert eta_tp <= eta_re
        else:
            assert eta_tp > eta_re

    def test_realized_set_matches_actual_refinement(self, context):
        mesh, overlay, ind = context
        out = decide("B", ind, MarkingParams(), mesh, overlay)
        if out.kind == "spatial":
            nxt = refine(mesh, out.spatial_marked, overlay)
            realized = sorted(
                overlay.edge_position[e]
                for e in nxt.new_vertex_edge.values()
                if e in overlay.edge_position
            )
            assert realized == sorted(out.diagnostics["realized_spatial"])

    def test_invalid_params_propagate(self, context):
        mesh, overlay, ind = context
        with pytest.raises(ValueError):
            decide("A", ind, MarkingParams(theta_x=2.0), mesh, overlay)
