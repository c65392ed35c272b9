import numpy as np
import pytest

from ncpflow.config import default_config
from ncpflow.constitutive import capillary_pressure
from ncpflow.discretization import SECONDS_PER_YEAR, BoundarySpec, assemble_residual, unflatten_state
from ncpflow.errors import StepFailure
from ncpflow.simulation import (
    Schedule,
    advance_step,
    initial_state,
    injection_flux_at,
    injection_flux_average,
    run,
)

YEAR = SECONDS_PER_YEAR


@pytest.fixture(scope="module")
def schedule():
    return Schedule.from_config(default_config())


class TestSchedule:
    def test_injection_examples(self, schedule):
        assert injection_flux_at(1e5 * YEAR, schedule) == pytest.approx(5.57e-6 / YEAR, rel=1e-15)
        assert injection_flux_at(6e5 * YEAR, schedule) == 0.0
        assert injection_flux_at(5e5 * YEAR, schedule) == 0.0
        assert injection_flux_at(0.0, schedule) > 0

    def test_average_over_a_step(self, schedule):
        q = schedule.q_h_in
        assert injection_flux_average(0.0, 5000 * YEAR, schedule) == q
        assert injection_flux_average(4.975e5 * YEAR, 5.025e5 * YEAR, schedule) == pytest.approx(q / 2)
        assert injection_flux_average(5e5 * YEAR, 5.05e5 * YEAR, schedule) == 0.0

    def test_invariants(self):
        with pytest.raises(ValueError):
            Schedule(1.0, 1.0, 2.0, 0.0)
        with pytest.raises(ValueError):
            Schedule(1.0, 3.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            Schedule(1.0, 1.0, 2.0, 1.0, (2.0, 1.0))

    def test_snapshot_times_in_seconds(self, schedule):
        assert schedule.snapshot_times[0] == 1e4 * YEAR
        assert len(schedule.snapshot_times) == 10


class TestInitialState:
    def test_uniform(self):
        cfg = default_config()
        s, p, c = unflatten_state(initial_state(cfg.grid, cfg))
        assert np.all(s == 1.0) and np.all(p == 1e6) and np.all(c == 0.0)
        assert np.all(capillary_pressure(s, cfg.medium)[0] == 0.0)

    def test_residual_without_injection(self):
        cfg = default_config()
        x = initial_state(cfg.grid, cfg)
        H, F, G = assemble_residual(x, x, 5000 * YEAR, cfg.grid, cfg.medium, cfg.fluid, BoundarySpec())
        assert np.all(H == 0) and np.all(F == 0)
        np.testing.assert_allclose(G, cfg.fluid.H * 1e6)


class TestAdvanceStep:
    def test_equilibrium_without_injection(self):
        cfg = default_config(boundary__q_h_in=0.0)
        sch = Schedule.from_config(cfg)
        x = initial_state(cfg.grid, cfg)
        x1, rep, dt, _ = advance_step(x, 0.0, sch.dt, cfg, sch)
        assert rep.iterations <= 2
        assert dt == sch.dt
        np.testing.assert_array_equal(x1, x)

    def test_first_injection_step_is_all_liquid(self, schedule):
        cfg = default_config()
        x = initial_state(cfg.grid, cfg)
        x1, rep, dt, _ = advance_step(x, 0.0, schedule.dt, cfg, schedule)
        assert rep.converged and dt == schedule.dt
        assert rep.active_set_history[-1] == 0
        s, _, c = unflatten_state(x1)
        assert np.all(s == 1.0) and c[0] > 0

    def test_mid_gas_phase_step_has_active_cells(self, benchmark_run):
        mid = [st for st in benchmark_run.steps if 5e4 <= st.t_end <= 1e5]
        assert mid and all(st.report.active_set_history[-1] > 0 for st in mid)
        assert all(st.report.active_set_history[-1] == st.n_gas_cells for st in mid)


class TestRun:
    def test_zero_injection_is_stationary_at_once(self):
        cfg = default_config(boundary__q_h_in=0.0, grid__N=20, grid__L=20.0)
        res = run(cfg)
        assert res.events["stationarity"] == 5000.0
        assert res.events["first_gas_appearance"] is None
        assert len(res.steps) == 1
        assert len(res.snapshots) == len(cfg.schedule.snapshot_years)
        assert all(np.all(sn.s_g == 0) for sn in res.snapshots)

    def test_one_report_per_step(self, benchmark_run):
        assert len(benchmark_run.reports) == len(benchmark_run.steps) == 200
        assert benchmark_run.completed

    def test_scheduled_step_always_used(self, benchmark_run):
        dts = {round(st.t_end - st.t_start, 9) for st in benchmark_run.steps}
        assert dts == {5000.0}

    def test_snapshots(self, benchmark_run, benchmark_config):
        times = [sn.time for sn in benchmark_run.snapshots]
        assert times == list(benchmark_config.schedule.snapshot_years)
        for sn in benchmark_run.snapshots:
            n = benchmark_config.grid.n_cells
            assert all(len(a) == n for a in (sn.x, sn.s_l, sn.s_g, sn.p_l, sn.p_g, sn.chi_h_l, sn.rho_h_total))
            np.testing.assert_array_equal(sn.s_l + sn.s_g, 1.0)

    def test_bounds_every_step(self, benchmark_run):
        for st in benchmark_run.steps:
            assert st.min_s_g >= -1e-8
            assert st.min_chi >= -1e-8
            assert st.max_s_l <= 1 + 1e-8

    def test_complementarity_every_step(self, benchmark_run, benchmark_config):
        eps = benchmark_config.solver.eps
        for st in benchmark_run.steps:
            assert -eps <= st.min_comp and st.max_comp <= eps
            assert st.min_F >= -eps and st.min_G >= -eps

    def test_period_one_hydrogen_balance(self, benchmark_run, benchmark_config):
        q = benchmark_config.boundary.q_h_in
        for st in benchmark_run.steps:
            if st.n_gas_cells:
                break
            assert st.hydrogen_mass == pytest.approx(q * st.t_end, rel=1e-8)

    def test_event_ordering(self, extended_run):
        ev = extended_run.events
        assert ev["first_gas_appearance"] < ev["injection_end"] < ev["last_gas_disappearance"] < ev["stationarity"]

    def test_no_halving_on_benchmark(self, benchmark_run):
        assert all(st.t_end - st.t_start == 5000.0 for st in benchmark_run.steps)


class TestFailurePolicy:
    def test_halving_then_failure_keeps_partial_result(self):
        cfg = default_config(grid__N=20, grid__L=20.0, solver__max_iter=2, schedule__total_years=1e5,
                             schedule__injection_end_years=1e5, schedule__snapshot_years=())
        with pytest.raises(StepFailure) as exc:
            run(cfg)
        partial = exc.value.partial
        assert partial is not None and not partial.completed
        assert partial.error and "halvings" in partial.error
        widths = [st.t_end - st.t_start for st in partial.steps]
        assert widths[0] == 5000.0
        assert any(w < 5000.0 for w in widths)  # accepted only after halving

    def test_no_halvings_allowed(self):
        cfg = default_config(grid__N=20, grid__L=20.0, solver__max_iter=1, solver__max_halvings=0)
        with pytest.raises(StepFailure) as exc:
            run(cfg)
        assert exc.value.partial.steps == []
