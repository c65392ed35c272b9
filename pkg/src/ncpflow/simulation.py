"""Implicit Euler time loop for the hydrogen injection experiment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .constitutive import capillary_pressure
from .discretization import (
    SECONDS_PER_YEAR,
    BoundarySpec,
    StepProblem,
    face_fluxes,
    flatten_state,
    stored_mass,
    total_hydrogen_density,
    unflatten_state,
)
from .errors import EvaluationFailure, NonConvergence, SingularLinearSystem, StepFailure
from .ncp import NewtonReport, newton_min_solve

log = logging.getLogger(__name__)

GAS_TOL = 1e-10


@dataclass(frozen=True)
class Schedule:
    """Injection schedule in SI units (seconds, kg/(m^2 s))."""

    q_h_in: float
    injection_end_time: float
    total_time: float
    dt: float
    snapshot_times: tuple = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.injection_end_time <= self.total_time:
            raise ValueError("injection must end before total_time")
        snaps = list(self.snapshot_times)
        if snaps != sorted(snaps) or any(t < 0 or t > self.total_time for t in snaps):
            raise ValueError("snapshot times must be sorted and within [0, total_time]")

    @classmethod
    def from_config(cls, cfg: Config):
        sc = cfg.schedule
        return cls(
            q_h_in=cfg.boundary.q_h_in / SECONDS_PER_YEAR,
            injection_end_time=sc.injection_end_years * SECONDS_PER_YEAR,
            total_time=sc.total_years * SECONDS_PER_YEAR,
            dt=sc.dt_years * SECONDS_PER_YEAR,
            snapshot_times=tuple(t * SECONDS_PER_YEAR for t in sc.snapshot_years),
        )


def injection_flux_at(t, schedule: Schedule):
    """Hydrogen injection rate at time ``t`` (s); the interval is right-open."""
    return schedule.q_h_in if t < schedule.injection_end_time else 0.0


def injection_flux_average(t0, t1, schedule: Schedule):
    """Mean injection rate over ``[t0, t1]``, exact for the step schedule."""
    on = max(0.0, min(t1, schedule.injection_end_time) - t0)
    return schedule.q_h_in * on / (t1 - t0)


@dataclass
class Snapshot:
    time: float  # years
    x: np.ndarray
    s_l: np.ndarray
    s_g: np.ndarray
    p_l: np.ndarray
    p_g: np.ndarray
    chi_h_l: np.ndarray
    rho_h_total: np.ndarray

    @classmethod
    def from_state(cls, time_years, state, cfg: Config):
        s, p, c = unflatten_state(state)
        pc, _ = capillary_pressure(s, cfg.medium, extrapolate=True)
        return cls(
            time=time_years,
            x=cfg.grid.cell_centers,
            s_l=s,
            s_g=1.0 - s,
            p_l=p,
            p_g=p + pc,
            chi_h_l=c,
            rho_h_total=total_hydrogen_density(state, cfg.medium, cfg.fluid),
        )


@dataclass
class StepRecord:
    """Diagnostics of one accepted time step (times in years)."""

    step: int
    t_start: float
    t_end: float
    report: NewtonReport
    max_s_g: float
    n_gas_cells: int
    gas_right_index: int  # -1 when no gas
    gas_volume: float  # integral of s_g dx (m)
    max_p_l: float
    max_grad_p: float  # Pa/m
    max_change: float
    water_mass: float  # kg/m^2
    hydrogen_mass: float
    dissolved_hydrogen_mass: float
    flux_in: tuple  # (water, hydrogen) through the left face, kg/(m^2 s)
    flux_out: tuple  # (water, hydrogen) through the right face
    min_comp: float  # min over cells of min(F, G) / scale
    max_comp: float
    min_F: float
    min_G: float
    min_s_g: float
    min_chi: float
    max_s_l: float

    @property
    def dt_seconds(self):
        return (self.t_end - self.t_start) * SECONDS_PER_YEAR


@dataclass
class RunResult:
    config: Config
    initial_state: np.ndarray
    final_state: np.ndarray
    snapshots: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    events: dict = field(default_factory=dict)
    completed: bool = False
    error: str | None = None

    @property
    def reports(self):
        return [st.report for st in self.steps]


def initial_state(grid, cfg: Config):
    ini = cfg.initial
    n = grid.n_cells
    return flatten_state(np.full(n, ini.s_l), np.full(n, ini.p_l), np.full(n, ini.chi_h_l))


def _p_ref(cfg):
    return cfg.initial.p_l


def make_step_problem(state, t0, t1, cfg: Config, schedule: Schedule):
    bc = BoundarySpec(
        q_h_in=injection_flux_average(t0, t1, schedule),
        p_right=cfg.boundary.p_right,
    )
    return StepProblem(state, t1 - t0, cfg.grid, cfg.medium, cfg.fluid, bc, _p_ref(cfg))


def advance_step(state, t, dt, cfg: Config, schedule: Schedule):
    """Advance ``state`` from ``t`` by ``dt`` seconds.

    On a solver failure the step is halved and retried, at most
    ``cfg.solver.max_halvings`` times.

    Returns
    -------
    new_state, report, dt_used, problem
    """
    so = cfg.solver
    last = None
    for attempt in range(so.max_halvings + 1):
        problem = make_step_problem(state, t, t + dt, cfg, schedule)
        try:
            x, report = newton_min_solve(
                problem, state, eps=so.eps, max_iter=so.max_iter,
                linear_solver=problem.solve_newton, c_function=so.c_function,
            )
            return x, report, dt, problem
        except (NonConvergence, SingularLinearSystem, EvaluationFailure) as exc:
            last = exc
            log.warning("step at t=%.6g y failed (%s); halving dt", t / SECONDS_PER_YEAR, exc)
            dt = 0.5 * dt
    raise StepFailure(f"time step at t={t / SECONDS_PER_YEAR:.6g} years failed after "
                      f"{so.max_halvings} halvings: {last}", last.report if last else None)


def _record(step, t0, t1, x_old, x, report, problem, cfg):
    grid, medium, fluid = cfg.grid, cfg.medium, cfg.fluid
    s, p, c = unflatten_state(x)
    so, po, co = unflatten_state(x_old)
    s_g = 1.0 - s
    gas = np.flatnonzero(s_g > GAS_TOL)
    grad = np.abs(np.diff(p)) / grid.dx
    grad_b = abs(cfg.boundary.p_right - p[-1]) / (0.5 * grid.dx)
    p_ref = _p_ref(cfg)
    chi_ref = fluid.H * p_ref / fluid.rho_l
    change = max(np.abs(s - so).max(), np.abs(p - po).max() / p_ref, np.abs(c - co).max() / chi_ref)
    water, hydrogen = stored_mass(x, grid, medium, fluid)
    fw, fh = face_fluxes(x, grid, medium, fluid, problem.bc)
    _, F_val, G_val = problem.residuals(x)
    comp = np.minimum(F_val, G_val) / problem.phi_scale
    return StepRecord(
        step=step,
        t_start=t0 / SECONDS_PER_YEAR,
        t_end=t1 / SECONDS_PER_YEAR,
        report=report,
        max_s_g=float(s_g.max()),
        n_gas_cells=int(gas.size),
        gas_right_index=int(gas[-1]) if gas.size else -1,
        gas_volume=float(np.sum(np.clip(s_g, 0.0, None)) * grid.dx),
        max_p_l=float(p.max()),
        max_grad_p=float(max(grad.max(initial=0.0), grad_b)),
        max_change=float(change),
        water_mass=water,
        hydrogen_mass=hydrogen,
        dissolved_hydrogen_mass=float(medium.phi * fluid.rho_l * np.sum(s * c) * grid.dx),
        flux_in=(float(fw[0]), float(fh[0])),
        flux_out=(float(fw[-1]), float(fh[-1])),
        min_comp=float(comp.min()),
        max_comp=float(comp.max()),
        min_F=float((F_val / problem.phi_scale).min()),
        min_G=float((G_val / problem.phi_scale).min()),
        min_s_g=float(s_g.min()),
        min_chi=float(c.min()),
        max_s_l=float(s.max()),
    )


def run(cfg: Config, stop_at_stationarity=True, progress=None):
    """Run the configured experiment.

    A :class:`StepFailure` aborts the loop; the partial :class:`RunResult`
    is attached to the exception as ``partial``.
    """
    schedule = Schedule.from_config(cfg)
    x = initial_state(cfg.grid, cfg)
    result = RunResult(config=cfg, initial_state=x.copy(), final_state=x.copy())
    result.events = {
        "first_gas_appearance": None,
        "injection_end": cfg.schedule.injection_end_years,
        "last_gas_disappearance": None,
        "stationarity": None,
    }
    log.info("run: profile=%s N=%d dt=%g y total=%g y (1 year = %.8g s)",
             cfg.profile, cfg.grid.n_cells, cfg.schedule.dt_years,
             cfg.schedule.total_years, SECONDS_PER_YEAR)

    pending = list(schedule.snapshot_times)
    breaks = sorted({schedule.injection_end_time, schedule.total_time, *schedule.snapshot_times})
    t = 0.0
    step = 0
    gas_present = False
    tiny = 1e-9 * schedule.dt
    while t < schedule.total_time - tiny:
        next_break = next(b for b in breaks if b > t + tiny)
        dt = min(schedule.dt, next_break - t)
        try:
            x_new, report, dt_used, problem = advance_step(x, t, dt, cfg, schedule)
        except StepFailure as exc:
            result.error = str(exc)
            result.final_state = x.copy()
            exc.partial = result
            raise
        step += 1
        rec = _record(step, t, t + dt_used, x, x_new, report, problem, cfg)
        result.steps.append(rec)
        t_prev, x_prev = t, x
        t, x = t + dt_used, x_new
        result.final_state = x.copy()

        if rec.n_gas_cells and not gas_present:
            gas_present = True
            if result.events["first_gas_appearance"] is None:
                result.events["first_gas_appearance"] = rec.t_end
            result.events["last_gas_disappearance"] = None
        elif gas_present and not rec.n_gas_cells:
            gas_present = False
            result.events["last_gas_disappearance"] = rec.t_end

        while pending and pending[0] <= t + tiny:
            target = pending.pop(0)
            use_prev = abs(target - t_prev) < abs(t - target) and step > 1
            st, sx = (t_prev, x_prev) if use_prev else (t, x)
            result.snapshots.append(Snapshot.from_state(st / SECONDS_PER_YEAR, sx, cfg))

        stationary = (rec.max_grad_p < cfg.schedule.grad_tol
                      and rec.max_change < cfg.schedule.stat_tol
                      and injection_flux_at(t, schedule) == 0.0
                      and not gas_present)
        if stationary and result.events["stationarity"] is None:
            result.events["stationarity"] = rec.t_end
            log.info("stationary state reached at %.6g years", rec.t_end)
            if stop_at_stationarity:
                break
        if progress is not None:
            progress(rec)
    # requested snapshots past an early stop take the final state
    for target in pending:
        result.snapshots.append(Snapshot.from_state(t / SECONDS_PER_YEAR, x, cfg))
    result.completed = True
    return result


__all__ = [
    "GAS_TOL",
    "RunResult",
    "Schedule",
    "Snapshot",
    "StepRecord",
    "advance_step",
    "initial_state",
    "injection_flux_at",
    "injection_flux_average",
    "run",
]
