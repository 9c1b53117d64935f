import math

import numpy as np
import pytest

from sgfem import (
    AdaptiveTrace,
    IterationRecord,
    MarkingParams,
    b_energy,
    contraction_series,
    cumulative_cost,
    effectivity,
    fit_rate,
    lshape_benchmark,
    prolong,
    reference_solution,
    run_adaptive,
)


@pytest.fixture(scope="module")
def short_trace():
    return run_adaptive(
        lshape_benchmark(), "A", MarkingParams(0.5, 0.5, 1.0), tol=5e-2
    )


@pytest.fixture(scope="module")
def short_ref(short_trace):
    return reference_solution(short_trace, lshape_benchmark())


def make_record(level, n_dof, eta, energy=1.0):
    return IterationRecord(
        level=level, refine_type="spatial", dim_x=n_dof, card_p=1, n_dof=n_dof,
        eta=eta, eta_spatial=eta, eta_parametric=0.0, energy_sq=energy,
        n_marked=1, max_active_dim=0, solver_iterations=1,
        solver_residual=0.0, wall_time=0.0,
    )


class TestRunStructure:
    def test_reaches_tolerance(self, short_trace):
        assert short_trace.stop_reason == "tol"
        assert short_trace.reached_tol
        assert short_trace.records[-1].eta <= 5e-2

    def test_eta_levels_recorded(self, short_trace):
        for rec in short_trace.records:
            assert rec.eta == pytest.approx(
                math.hypot(rec.eta_spatial, rec.eta_parametric), rel=1e-12
            )

    def test_energy_monotone(self, short_trace):
        energies = short_trace.energy_series()
        assert np.all(np.diff(energies) >= -1e-12)

    def test_dofs_grow(self, short_trace):
        dofs = short_trace.dof_series()
        assert np.all(np.diff(dofs) > 0)

    def test_online_checks_within_slack(self, short_trace):
        assert short_trace.checks  # populated from level 1 onward
        for chk in short_trace.checks:
            assert chk.energy_increment >= -1e-10
            assert chk.pythagoras_deviation <= 1e-6
            assert chk.reduction_lower_bound <= (1 + 1e-6) * chk.diff_energy_sq

    def test_both_refinement_types_occur(self, short_trace):
        kinds = {rec.refine_type for rec in short_trace.records}
        assert "spatial" in kinds and "parametric" in kinds

    def test_final_state_consistent(self, short_trace):
        assert short_trace.final_solution.mesh is short_trace.final_mesh
        assert short_trace.final_solution.indices is short_trace.final_indices
        assert len(short_trace.final_detail) > 0
        assert short_trace.records[-1].refine_type == "final"

    def test_deterministic_rerun_identical(self, short_trace):
        again = run_adaptive(
            lshape_benchmark(), "A", MarkingParams(0.5, 0.5, 1.0), tol=5e-2
        )
        assert [r.eta for r in again.records] == [r.eta for r in short_trace.records]
        assert [r.n_dof for r in again.records] == [
            r.n_dof for r in short_trace.records
        ]


class TestStops:
    def test_max_iter(self):
        tr = run_adaptive(lshape_benchmark(), "A", tol=1e-10, max_iter=2)
        assert tr.stop_reason == "max_iter"
        assert tr.num_levels == 3

    def test_max_dof(self):
        tr = run_adaptive(lshape_benchmark(), "A", tol=1e-10, max_dof=100)
        assert tr.stop_reason == "max_dof"
        assert not tr.reached_tol

    def test_deterministic_problem_spatial_only(self):
        spec0 = lshape_benchmark(tau=0.0)
        tr = run_adaptive(spec0, "A", tol=8e-2)
        assert tr.reached_tol
        assert all(r.refine_type in ("spatial", "final") for r in tr.records)
        assert all(r.card_p == 1 for r in tr.records)


class TestReference:
    def test_reference_energy_dominates(self, short_trace, short_ref):
        ref_energy = b_energy(short_ref, short_ref)
        for rec in short_trace.records:
            assert ref_energy >= rec.energy_sq - 1e-12

    def test_difference_energy_identity(self, short_trace, short_ref):
        u = short_trace.final_solution
        up = prolong(u, short_ref.mesh, short_ref.indices, short_ref.system)
        from sgfem import GalerkinSolution

        diff = GalerkinSolution(
            mesh=short_ref.mesh,
            indices=short_ref.indices,
            coeffs=short_ref.coeffs - up.coeffs,
            system=short_ref.system,
        )
        gap = b_energy(short_ref, short_ref) - b_energy(up, up)
        assert b_energy(diff, diff) == pytest.approx(gap, rel=1e-6)

    def test_effectivity_series(self, short_trace, short_ref):
        zetas = effectivity(short_trace, short_ref)
        assert len(zetas) == short_trace.num_levels
        ref_energy = b_energy(short_ref, short_ref)
        for rec, z in zip(short_trace.records, zetas):
            if z is not None:
                gap = ref_energy - rec.energy_sq
                assert z == pytest.approx(rec.eta / math.sqrt(gap), rel=1e-12)
                assert z > 0

    def test_effectivity_clamps_small_gaps(self, short_trace, short_ref):
        # with an absurd solver tolerance every gap counts as noise
        zetas = effectivity(short_trace, short_ref, solver_tol=1e3)
        assert all(z is None for z in zetas)

    def test_contraction_series_positive(self, short_trace, short_ref):
        ratios = contraction_series(short_trace, short_ref)
        assert len(ratios) == short_trace.num_levels - 1
        assert all(0.0 < r < 1.0 + 1e-9 for r in ratios)

    def test_incomplete_trace_rejected(self):
        empty = AdaptiveTrace(criterion="A", params=MarkingParams(), tol=1e-2,
                              solver_tol=1e-10)
        with pytest.raises(ValueError):
            reference_solution(empty, lshape_benchmark())


class TestDiagnostics:
    def test_cumulative_cost(self):
        tr = AdaptiveTrace(criterion="A", params=MarkingParams(), tol=0.1,
                           solver_tol=1e-10)
        tr.records = [make_record(0, 10, 1.0), make_record(1, 30, 0.5)]
        assert cumulative_cost(tr) == 40

    def test_fit_rate_recovers_synthetic_slope(self):
        tr = AdaptiveTrace(criterion="A", params=MarkingParams(), tol=0.1,
                           solver_tol=1e-10)
        dofs = [10, 40, 160, 640]
        tr.records = [
            make_record(i, n, 3.0 * n**-0.5) for i, n in enumerate(dofs)
        ]
        assert fit_rate(tr) == pytest.approx(-0.5, abs=1e-12)

    def test_fit_rate_skips_degenerate_records(self):
        tr = AdaptiveTrace(criterion="A", params=MarkingParams(), tol=0.1,
                           solver_tol=1e-10)
        tr.records = [make_record(0, 0, 0.9)] + [
            make_record(i + 1, n, 3.0 * n**-0.3) for i, n in enumerate([10, 100, 1000])
        ]
        assert fit_rate(tr) == pytest.approx(-0.3, abs=1e-12)

    def test_fit_rate_needs_three_points(self):
        tr = AdaptiveTrace(criterion="A", params=MarkingParams(), tol=0.1,
                           solver_tol=1e-10)
        tr.records = [make_record(0, 10, 1.0), make_record(1, 20, 0.5)]
        with pytest.raises(ValueError):
            fit_rate(tr)
