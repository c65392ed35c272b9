"""Independent oracles: finite-difference Jacobians, brute-force active-set
enumeration for small complementarity problems, and a mass-balance audit."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .discretization import (
    SECONDS_PER_YEAR,
    BoundarySpec,
    StepProblem,
    assemble_jacobian,
    assemble_residual,
    dense_jacobian,
    flatten_state,
    stored_mass,
    unflatten_state,
)
from .constitutive import capillary_pressure
from .errors import DomainError
from .ncp import AffineNcp, SmoothNcp, newton_min_solve

SWITCH_MARGIN = 1e-9


# --- finite-difference Jacobians ---------------------------------------------


@dataclass
class JacobianDiff:
    max_abs_error: float
    max_rel_error: float
    location: tuple  # (row, col) of the worst relative error
    analytic: float
    fd: float

    def __post_init__(self):
        if self.max_abs_error < 0 or self.max_rel_error < 0:
            raise ValueError("errors must be >= 0")


def fd_jacobian(residual_fn, x, h):
    """Central-difference Jacobian of ``residual_fn`` at ``x``.

    ``h`` is a positive scalar or one step per variable. Evaluation errors
    raised by ``residual_fn`` propagate.
    """
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(steps <= 0):
        raise ValueError("finite-difference steps must be > 0")
    cols = []
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += steps[j]
        xm[j] -= steps[j]
        fp = np.atleast_1d(np.asarray(residual_fn(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(residual_fn(xm), dtype=float))
        cols.append((fp - fm) / (2.0 * steps[j]))
    return np.column_stack(cols)


def compare_jacobians(analytic, fd):
    """Row-wise relative comparison.

    The error of entry ``(i, j)`` is ``|a_ij - f_ij|`` divided by the largest
    analytic magnitude in row ``i``. An entry-wise ratio would be meaningless
    for entries many orders below the rest of their row, where central
    differences only resolve the roundoff of the larger terms.
    """
    A = np.asarray(analytic, dtype=float)
    D = np.asarray(fd, dtype=float)
    if A.shape != D.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {D.shape}")
    err = np.abs(A - D)
    row_mag = np.abs(A).max(axis=1, keepdims=True)
    rel = np.divide(err, row_mag, out=np.where(err > 0, np.inf, 0.0), where=row_mag > 0)
    i, j = np.unravel_index(int(np.argmax(rel)), rel.shape)
    return JacobianDiff(float(err.max()), float(rel[i, j]), (int(i), int(j)), float(A[i, j]), float(D[i, j]))


# (s_l, p_l, chi): 1e-6 times the scales 1e-3, 1e6 Pa, 1e-3
FD_STEPS = (1e-9, 1.0, 1e-9)


def fd_steps(n_cells, steps=FD_STEPS):
    """Per-variable steps tiled over the interleaved cell layout."""
    return np.tile(np.asarray(steps, dtype=float), n_cells)


def random_admissible_state(rng, n_cells):
    s = rng.uniform(0.55, 0.999, n_cells)
    p = rng.uniform(5e5, 5e6, n_cells)
    c = rng.uniform(0.0, 3e-5, n_cells)
    return flatten_state(s, p, c)


def switch_margin(state, medium, fluid, bc):
    """Smallest phase-pressure gap (Pa) across any face, right boundary included.

    Upwind choices and the outflow test flip where a gap vanishes.
    """
    s, p, c = unflatten_state(state)
    pc, _ = capillary_pressure(s, medium, extrapolate=True)
    pg = p + pc
    pc_r, _ = capillary_pressure(np.array([1.0]), medium, extrapolate=True)
    pl_all = np.append(p, bc.p_right)
    pg_all = np.append(pg, bc.p_right + pc_r[0])
    gaps = np.concatenate([np.abs(np.diff(pl_all)), np.abs(np.diff(pg_all))])
    return float(gaps.min())


@dataclass
class JacobianCheck:
    samples: int
    max_rel_error: float
    worst: JacobianDiff
    per_sample: list = field(default_factory=list)
    skipped: int = 0


def check_jacobian(cfg, samples=20, seed=0, n_cells=None, steps=FD_STEPS):
    """Compare the analytic step Jacobian with central differences.

    States are drawn with ``s_l`` in [0.55, 0.999], ``p_l`` in [5e5, 5e6] Pa
    and ``chi`` in [0, 3e-5]. Draws whose smallest phase-pressure gap is
    below ``SWITCH_MARGIN`` relative, or below 100 FD pressure steps, are
    redrawn since a perturbation could cross an upwind switch. Both matrices are compared after applying the
    row and column scales of :class:`StepProblem`.
    """
    rng = np.random.default_rng(seed)
    grid = cfg.grid if n_cells is None else type(cfg.grid)(n_cells, cfg.grid.length)
    n = grid.n_cells
    medium, fluid = cfg.medium, cfg.fluid
    bc = BoundarySpec(q_h_in=cfg.boundary.q_h_in / SECONDS_PER_YEAR, p_right=cfg.boundary.p_right)
    dt = cfg.schedule.dt_years * SECONDS_PER_YEAR
    h = fd_steps(n, steps)
    min_gap = max(100.0 * steps[1], SWITCH_MARGIN * 5e6)
    worst = None
    diffs = []
    skipped = 0
    while len(diffs) < samples:
        x = random_admissible_state(rng, n)
        x_old = random_admissible_state(rng, n)
        if switch_margin(x, medium, fluid, bc) < min_gap:
            skipped += 1
            continue
        prob = StepProblem(x_old, dt, grid, medium, fluid, bc, cfg.initial.p_l)

        def fun(z):
            H, F, G = assemble_residual(z, x_old, dt, grid, medium, fluid, bc)
            return np.concatenate([H, F, G])

        A = dense_jacobian(*assemble_jacobian(x, x_old, dt, grid, medium, fluid, bc))
        D = fd_jacobian(fun, x, h)
        rows = np.concatenate([prob.h_scale, prob.phi_scale, prob.phi_scale])
        cols = np.tile(prob.var_scale, n)
        A = A / rows[:, None] * cols[None, :]
        D = D / rows[:, None] * cols[None, :]
        d = compare_jacobians(A, D)
        diffs.append(d)
        if worst is None or d.max_rel_error > worst.max_rel_error:
            worst = d
    return JacobianCheck(samples, worst.max_rel_error if worst else 0.0, worst, diffs, skipped)


# --- brute-force active-set enumeration --------------------------------------


@dataclass
class BruteForceResult:
    solutions: list  # feasible points, sorted by pattern index, de-duplicated
    patterns: list  # pattern (tuple of F-active indices) of each solution
    failures: dict  # pattern -> reason for subproblems that did not converge
    infeasible: int = 0

    @property
    def unique(self):
        return len(self.solutions) == 1


def _pattern_solve(problem, x0, subset, tol, max_iter):
    """Damped Newton on ``H = 0, F_S = 0, G_notS = 0``."""
    in_s = np.zeros(problem.n_comp, dtype=bool)
    in_s[list(subset)] = True

    def system(x):
        H, F, G = problem.residuals(x)
        return np.concatenate([np.asarray(H, float), np.where(in_s, F, G)])

    def jac(x):
        Hp, Fp, Gp = problem.jacobians(x)
        Hp = np.asarray(Hp, float).reshape(-1, x.size)
        return np.vstack([Hp, np.where(in_s[:, None], Fp, Gp)])

    x = np.array(x0, dtype=float)
    r = system(x)
    norm = np.abs(r).max(initial=0.0)
    for _ in range(max_iter):
        if norm <= tol:
            return x
        J = jac(x)
        try:
            if np.linalg.cond(J) > 1e14:
                raise np.linalg.LinAlgError("singular pattern system")
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(str(exc)) from exc
        step = 1.0
        while step > 1e-8:
            xt = x + step * dx
            try:
                rt = system(xt)
            except (DomainError, FloatingPointError, ValueError):
                rt = None
            if rt is not None and np.all(np.isfinite(rt)):
                nt = np.abs(rt).max(initial=0.0)
                if nt < (1.0 - 1e-4 * step) * norm or nt <= tol:
                    break
            step *= 0.5
        else:
            raise RuntimeError("line search failed")
        x, r, norm = xt, rt, nt
    if norm <= tol:
        return x
    raise RuntimeError(f"no convergence (residual {norm:.3e})")


def brute_force_ncp(problem, x0=None, tol=1e-10, feas_tol=1e-9, max_iter=100, dedup_tol=1e-8):
    """Enumerate all ``2**n_comp`` active-set patterns of a small problem.

    A pattern ``S`` fixes ``F_i = 0`` for ``i`` in ``S`` and ``G_i = 0``
    otherwise. Each smooth subsystem is solved by damped Newton from ``x0``;
    solutions with ``F, G >= -feas_tol`` are kept. Subproblem failures are
    recorded in ``failures``.
    """
    m = problem.n_comp
    if m > 12:
        raise ValueError("brute force limited to n_comp <= 12")
    x0 = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float)
    sols, pats, failures = [], [], {}
    infeasible = 0
    for mask in range(2**m):
        subset = tuple(i for i in range(m) if mask >> i & 1)
        try:
            x = _pattern_solve(problem, x0, subset, tol, max_iter)
        except RuntimeError as exc:
            failures[subset] = str(exc)
            continue
        _, F, G = problem.residuals(x)
        if np.any(np.asarray(F) < -feas_tol) or np.any(np.asarray(G) < -feas_tol):
            infeasible += 1
            continue
        if any(np.abs(x - y).max() <= dedup_tol * (1.0 + np.abs(y).max()) for y in sols):
            continue
        sols.append(x)
        pats.append(subset)
    return BruteForceResult(sols, pats, failures, infeasible)


# --- fixed comparison corpus ---------------------------------------------------


@dataclass
class CorpusEntry:
    name: str
    problem: object
    x0: np.ndarray


def _m_matrix(rng, n):
    off = -rng.uniform(0.0, 1.0, (n, n))
    np.fill_diagonal(off, 0.0)
    d = np.abs(off).sum(axis=1) + rng.uniform(0.5, 2.0, n)
    return off + np.diag(d)


def _spd(rng, n):
    B = rng.normal(size=(n, n))
    return B @ B.T + n * np.eye(n)


def ncp_corpus(seed=20240101):
    """Fixed list of small LCP/NCP instances used to cross-check the solver."""
    rng = np.random.default_rng(seed)
    out = [
        CorpusEntry("scalar-x-perp-x-minus-2", AffineNcp.lcp([[1.0]], [-2.0]), np.zeros(1)),
        CorpusEntry("lcp-2x2-symmetric", AffineNcp.lcp([[2.0, 1.0], [1.0, 2.0]], [-3.0, -3.0]), np.zeros(2)),
        CorpusEntry("lcp-2x2-mixed-signs", AffineNcp.lcp([[2.0, -1.0], [-1.0, 2.0]], [1.0, -2.0]), np.zeros(2)),
    ]
    for n in range(2, 9):
        out.append(CorpusEntry(f"m-matrix-lcp-{n}", AffineNcp.lcp(_m_matrix(rng, n), rng.uniform(-2, 2, n)), np.zeros(n)))
    for n in (3, 5, 7):
        out.append(CorpusEntry(f"spd-lcp-{n}", AffineNcp.lcp(_spd(rng, n), rng.uniform(-3, 3, n)), np.zeros(n)))

    # mixed problems: one equation per complementarity pair, coupled through x
    for n_comp in (2, 4, 6):
        n = 2 * n_comp
        M = _m_matrix(rng, n)
        A, B = M[:n_comp], M[n_comp:]
        a = rng.uniform(-1, 1, n_comp)
        F_mat = np.zeros((n_comp, n))
        F_mat[:, n_comp:] = np.eye(n_comp)
        out.append(CorpusEntry(
            f"mixed-affine-{n_comp}",
            AffineNcp(F_mat, np.zeros(n_comp), B, rng.uniform(-2, 2, n_comp), A, a),
            np.zeros(n),
        ))

    # nonlinear: x perp (x^3 + M x + q) with M an M-matrix
    for n in (2, 3, 5, 8):
        M = _m_matrix(rng, n)
        q = rng.uniform(-2, 2, n)
        out.append(CorpusEntry(
            f"cubic-ncp-{n}",
            SmoothNcp(n, n, lambda x: (x, np.eye(x.size)),
                      lambda x, M=M, q=q: (x**3 + M @ x + q, np.diag(3 * x**2) + M)),
            np.zeros(n),
        ))

    # nonlinear: (1 - s) perp (exp-type Henry law), toy dissolution model
    for n in (2, 4):
        K = rng.uniform(0.5, 1.5, n)
        c_tot = rng.uniform(0.5, 2.0, n)

        def H(x, K=K, c_tot=c_tot, n=n):
            s, c = x[:n], x[n:]
            val = c + (1 - s) * np.exp(c) - c_tot
            J = np.hstack([np.diag(-np.exp(c)), np.diag(1 + (1 - s) * np.exp(c))])
            return val, J

        def F(x, n=n):
            J = np.zeros((n, 2 * n))
            J[:, :n] = -np.eye(n)
            return 1.0 - x[:n], J

        def G(x, K=K, n=n):
            J = np.zeros((n, 2 * n))
            J[:, n:] = -np.eye(n)
            return K - x[n:], J

        out.append(CorpusEntry(f"dissolution-ncp-{n}", SmoothNcp(2 * n, n, F, G, H),
                               np.concatenate([np.ones(n), np.zeros(n)])))
    return out


@dataclass
class CorpusComparison:
    name: str
    unique: bool
    n_solutions: int
    error: float  # max-norm distance to the brute-force solution, nan if not unique
    converged: bool
    iterations: int


def compare_on_corpus(corpus=None, eps=1e-12, tol=1e-8):
    """Run both solvers on each corpus entry; returns comparisons and wall time."""
    corpus = ncp_corpus() if corpus is None else corpus
    t0 = time.perf_counter()
    rows = []
    for entry in corpus:
        bf = brute_force_ncp(entry.problem, entry.x0)
        try:
            x, rep = newton_min_solve(entry.problem, entry.x0, eps=eps, max_iter=100)
            ok, iters = True, rep.iterations
        except Exception:  # noqa: BLE001 - recorded as non-convergence
            x, ok, iters = None, False, -1
        if bf.unique and x is not None:
            err = float(np.abs(x - bf.solutions[0]).max())
        else:
            err = float("nan")
        rows.append(CorpusComparison(entry.name, bf.unique, len(bf.solutions), err, ok, iters))
    return rows, time.perf_counter() - t0


# --- mass balance ------------------------------------------------------------


@dataclass
class MassAudit:
    water_error: float  # kg/m^2
    hydrogen_error: float
    injected_hydrogen: float
    water_change: float
    hydrogen_change: float
    hydrogen_outflow: float

    @property
    def relative_errors(self):
        ref = self.injected_hydrogen if self.injected_hydrogen > 0 else 1.0
        return self.water_error / ref, self.hydrogen_error / ref


def mass_audit(run_result, config=None):
    """Compare stored-mass change with the time-integrated boundary fluxes.

    Per component, ``|M(T) - M(0) - sum_k (q_in - q_out) dt_k|``; the fluxes
    are those of the converged state of each step.
    """
    cfg = config or run_result.config
    w0, h0 = stored_mass(run_result.initial_state, cfg.grid, cfg.medium, cfg.fluid)
    if run_result.steps:
        w1, h1 = run_result.steps[-1].water_mass, run_result.steps[-1].hydrogen_mass
    else:
        w1, h1 = w0, h0
    net_w = net_h = inj = out_h = 0.0
    for st in run_result.steps:
        dt = st.dt_seconds
        net_w += (st.flux_in[0] - st.flux_out[0]) * dt
        net_h += (st.flux_in[1] - st.flux_out[1]) * dt
        inj += st.flux_in[1] * dt
        out_h += st.flux_out[1] * dt
    return MassAudit(
        water_error=abs((w1 - w0) - net_w),
        hydrogen_error=abs((h1 - h0) - net_h),
        injected_hydrogen=inj,
        water_change=w1 - w0,
        hydrogen_change=h1 - h0,
        hydrogen_outflow=out_h,
    )


# --- phenomenology ------------------------------------------------------------


@dataclass
class Periods:
    """Detected period boundaries (years) and the checks that failed."""

    first_gas: float | None
    pressure_peak: float | None
    injection_end: float
    gas_gone: float | None
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures


def detect_periods(run_result, rel_tol=1e-12):
    """Locate the four periods of the injection run from step records and snapshots.

    P1 runs up to the first step with gas and must show no gas and rising
    dissolved hydrogen. P2 runs from there to the peak of ``max p_l`` with
    both gas volume and pressure rising. P3 runs from the peak to the end of
    injection with gas still growing and pressure falling. P4 follows: the
    gas region stays a left-anchored interval whose right end moves left
    until no gas is left.
    """
    steps = run_result.steps
    fail = []
    inj_end = run_result.config.schedule.injection_end_years
    t = np.array([st.t_end for st in steps])
    n_gas = np.array([st.n_gas_cells for st in steps])
    right = np.array([st.gas_right_index for st in steps])
    vol = np.array([st.gas_volume for st in steps])
    p_max = np.array([st.max_p_l for st in steps])
    dis = np.array([0.0] + [st.dissolved_hydrogen_mass for st in steps])

    def rising(a, name):
        if a.size > 1 and np.any(np.diff(a) <= -rel_tol * np.abs(a).max()):
            fail.append(f"{name} not increasing")

    def falling(a, name):
        if a.size > 1 and np.any(np.diff(a) >= rel_tol * np.abs(a).max()):
            fail.append(f"{name} not decreasing")

    gas_steps = np.flatnonzero(n_gas > 0)
    if gas_steps.size == 0:
        return Periods(None, None, inj_end, None, ["gas never appears"])
    k1 = int(gas_steps[0])
    first = float(t[k1])
    if first >= inj_end:
        fail.append("gas appears only after injection ends")
    if np.any(dis[1:k1 + 1] <= 0) or np.any(np.diff(dis[:k1 + 2]) <= 0):
        fail.append("P1: dissolved hydrogen not rising")
    for sn in run_result.snapshots:
        if sn.time < first and np.any(sn.s_g > 0):
            fail.append(f"P1: gas in snapshot at {sn.time:g} y")

    during = np.flatnonzero(t <= inj_end)
    k_end = int(during[-1])
    kp = k1 + int(np.argmax(p_max[k1:k_end + 1]))
    peak = float(t[kp])
    if not k1 < kp < k_end:
        fail.append("pressure peak is not strictly inside the gas injection phase")
    rising(vol[k1:kp + 1], "P2: gas volume")
    rising(p_max[k1:kp + 1], "P2: max p_l")
    rising(vol[kp:k_end + 1], "P3: gas volume")
    falling(p_max[kp:k_end + 1], "P3: max p_l")

    post = slice(k_end + 1, None)
    gone = np.flatnonzero((n_gas == 0) & (t > inj_end))
    gas_gone = float(t[gone[0]]) if gone.size else None
    if gas_gone is None:
        fail.append("P4: gas never disappears")
    else:
        if np.any(n_gas[gone[0]:] > 0):
            fail.append("P4: gas reappears")
        if not right[k_end] > right[k_end + 1]:
            fail.append("P4: gas front does not recede after injection ends")
    tail = slice(k_end, None)
    if np.any(np.diff(right[tail]) > 0):
        fail.append("P4: gas front moves right")
    if np.any((n_gas[post] > 0) & (n_gas[post] != right[post] + 1)):
        fail.append("P4: gas region is not anchored at the left boundary")
    falling(vol[tail][vol[tail] > 0], "P4: gas volume")
    return Periods(first, peak, inj_end, gas_gone, fail)


__all__ = [
    "BruteForceResult",
    "CorpusComparison",
    "CorpusEntry",
    "JacobianCheck",
    "JacobianDiff",
    "MassAudit",
    "Periods",
    "brute_force_ncp",
    "check_jacobian",
    "compare_jacobians",
    "compare_on_corpus",
    "detect_periods",
    "fd_jacobian",
    "mass_audit",
    "ncp_corpus",
]
