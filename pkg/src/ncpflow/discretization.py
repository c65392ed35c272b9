"""Cell-centred finite volumes on a uniform 1-D grid.

Unknowns are interleaved per cell as ``(s_l, p_l, chi_h_l)``. For each cell
the discrete system has a water balance row, a hydrogen balance row (the
``H`` block, ordered ``W_0, Y_0, W_1, Y_1, ...``) and one complementarity
pair ``F_i = 1 - s_l``, ``G_i = H (p_l + p_c) - rho_l chi_h_l``.

Face fluxes use two-point pressure differences with the mobility and the
transported density taken from the upwind cell of each phase. Upwind
directions are frozen when differentiating. The left face carries the
prescribed component fluxes; the right face sees a ghost state
``(s_l = 1, p_l = p_right)`` located on the boundary, half a cell away.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constitutive import FluidParams, MediumParams, capillary_pressure, mobility
from .errors import DomainError
from .linalg import BlockTridiagMatrix, block_thomas_solve

SECONDS_PER_YEAR = 3.15576e7


@dataclass(frozen=True)
class Grid:
    n_cells: int = 200
    length: float = 200.0

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError("grid needs at least 1 cell")
        if not self.length > 0:
            raise ValueError("grid length must be > 0")

    @property
    def dx(self):
        return self.length / self.n_cells

    @property
    def cell_centers(self):
        return (np.arange(self.n_cells) + 0.5) * self.dx


class CellState(NamedTuple):
    """Per-cell unknowns; fields are scalars or arrays of length N."""

    s_l: np.ndarray
    p_l: np.ndarray
    chi_h_l: np.ndarray


def flatten_state(s_l, p_l, chi_h_l):
    return np.column_stack([s_l, p_l, chi_h_l]).ravel()


def unflatten_state(x):
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    return CellState(x[:, 0].copy(), x[:, 1].copy(), x[:, 2].copy())


@dataclass(frozen=True)
class BoundarySpec:
    """Left: prescribed mass fluxes into the domain (kg/(m^2 s)).
    Right: Dirichlet liquid pressure with a fully liquid-saturated ghost."""

    q_h_in: float = 0.0
    q_w_in: float = 0.0
    p_right: float = 1e6

    def __post_init__(self):
        if not self.p_right > 0:
            raise ValueError("p_right must be > 0")


@dataclass
class HJacobian:
    """Block tridiagonal derivative of the balance rows, blocks ``(2, 3)``."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def to_dense(self):
        n = self.diag.shape[0]
        A = np.zeros((2 * n, 3 * n))
        for i in range(n):
            A[2 * i:2 * i + 2, 3 * i:3 * i + 3] = self.diag[i]
            if i + 1 < n:
                A[2 * i + 2:2 * i + 4, 3 * i:3 * i + 3] = self.lower[i]
                A[2 * i:2 * i + 2, 3 * i + 3:3 * i + 6] = self.upper[i]
        return A


class _Props(NamedTuple):
    s: np.ndarray
    p: np.ndarray
    c: np.ndarray
    pc: np.ndarray
    dpc: np.ndarray
    pg: np.ndarray
    kl: np.ndarray
    dkl: np.ndarray
    kg: np.ndarray
    dkg: np.ndarray
    rho_g: np.ndarray


def _props(s, p, c, medium, fluid):
    bad = ~(np.isfinite(s) & np.isfinite(p) & np.isfinite(c)) | (s < medium.S_lr)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"inadmissible state s_l={s[i]!r}, p_l={p[i]!r}, chi={c[i]!r}", cell=i)
    pc, dpc = capillary_pressure(s, medium, extrapolate=True)
    kl, dkl = mobility("liquid", s, medium, fluid, extrapolate=True)
    kg, dkg = mobility("gas", s, medium, fluid, extrapolate=True)
    pg = p + pc
    return _Props(s, p, c, pc, dpc, pg, kl, dkl, kg, dkg, fluid.C_g * pg)


def _cat(a, b):
    return _Props(*(np.concatenate([x, y]) for x, y in zip(a, b)))


def _face_fluxes(L, R, h, diff_on, medium, fluid):
    """Water and hydrogen mass fluxes (positive toward ``R``) across faces.

    Returns ``(Fw, Fh, dF)`` with ``dF[f, eq, :]`` the derivative of face
    ``f``'s water (eq 0) / hydrogen (eq 1) flux with respect to
    ``(s_L, p_L, c_L, s_R, p_R, c_R)``.
    """
    nf = h.shape[0]
    T = medium.K / h
    rho_w = fluid.rho_l
    C_g = fluid.C_g

    # liquid phase
    dp = R.p - L.p
    upL = dp <= 0.0
    k_up = np.where(upL, L.kl, R.kl)
    q_l = -T * k_up * dp
    dq_l = np.zeros((nf, 6))
    dq_l[:, 0] = np.where(upL, -T * L.dkl * dp, 0.0)
    dq_l[:, 3] = np.where(upL, 0.0, -T * R.dkl * dp)
    dq_l[:, 1] = T * k_up
    dq_l[:, 4] = -T * k_up
    rho_hl_up = fluid.rho_l * np.where(upL, L.c, R.c)
    d_rho_hl_up = np.zeros((nf, 6))
    d_rho_hl_up[:, 2] = np.where(upL, fluid.rho_l, 0.0)
    d_rho_hl_up[:, 5] = np.where(upL, 0.0, fluid.rho_l)

    # gas phase
    dpg = R.pg - L.pg
    upgL = dpg <= 0.0
    kg_up = np.where(upgL, L.kg, R.kg)
    q_g = -T * kg_up * dpg
    dq_g = np.zeros((nf, 6))
    dq_g[:, 0] = np.where(upgL, -T * L.dkg * dpg, 0.0) + T * kg_up * L.dpc
    dq_g[:, 1] = T * kg_up
    dq_g[:, 3] = np.where(upgL, 0.0, -T * R.dkg * dpg) - T * kg_up * R.dpc
    dq_g[:, 4] = -T * kg_up
    rho_g_up = np.where(upgL, L.rho_g, R.rho_g)
    d_rho_g_up = np.zeros((nf, 6))
    d_rho_g_up[:, 0] = np.where(upgL, C_g * L.dpc, 0.0)
    d_rho_g_up[:, 1] = np.where(upgL, C_g, 0.0)
    d_rho_g_up[:, 3] = np.where(upgL, 0.0, C_g * R.dpc)
    d_rho_g_up[:, 4] = np.where(upgL, 0.0, C_g)

    # dissolved hydrogen diffusion
    coef = diff_on * medium.phi * fluid.M_h * fluid.liquid_molar_density * fluid.D_h_l / h
    sbar = 0.5 * (L.s + R.s)
    dc = R.c - L.c
    j = -coef * sbar * dc
    dj = np.zeros((nf, 6))
    dj[:, 0] = dj[:, 3] = -coef * 0.5 * dc
    dj[:, 2] = coef * sbar
    dj[:, 5] = -coef * sbar

    Fw = rho_w * q_l - j
    Fh = rho_hl_up * q_l + rho_g_up * q_g + j
    dF = np.empty((nf, 2, 6))
    dF[:, 0, :] = rho_w * dq_l - dj
    dF[:, 1, :] = (rho_hl_up[:, None] * dq_l + q_l[:, None] * d_rho_hl_up
                   + rho_g_up[:, None] * dq_g + q_g[:, None] * d_rho_g_up + dj)
    return Fw, Fh, dF


def _hydrogen_content(P, fluid):
    """Hydrogen mass per pore volume ``s rho_h^l + (1 - s) rho_g`` and derivatives."""
    m = P.s * fluid.rho_l * P.c + (1.0 - P.s) * P.rho_g
    dm = np.column_stack([
        fluid.rho_l * P.c - P.rho_g + (1.0 - P.s) * fluid.C_g * P.dpc,
        (1.0 - P.s) * fluid.C_g,
        P.s * fluid.rho_l,
    ])
    return m, dm


def _all_faces(P, grid, medium, fluid, bc):
    """Fluxes on the N-1 interior faces followed by the right boundary face."""
    n = grid.n_cells
    outflow = P.p[-1] >= bc.p_right
    ghost_c = P.c[-1] if outflow else 0.0
    gs = np.array([1.0])
    ghost = _props(gs, np.array([bc.p_right]), np.array([ghost_c]), medium, fluid)
    L = _Props(*(a for a in P))
    R = _cat(_Props(*(a[1:] for a in P)), ghost)
    h = np.full(n, grid.dx)
    h[-1] = 0.5 * grid.dx
    diff_on = np.ones(n)
    if outflow:
        # ghost concentration tracks cell N on outflow: no diffusive exchange
        diff_on[-1] = 0.0
    return _face_fluxes(L, R, h, diff_on, medium, fluid)


def _assemble(x, x_old, dt, grid, medium, fluid, bc, sources, jacobian):
    n = grid.n_cells
    s, p, c = unflatten_state(x)
    so, po, co = unflatten_state(x_old)
    if s.shape[0] != n:
        raise ValueError(f"state has {s.shape[0]} cells, grid has {n}")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    P = _props(s, p, c, medium, fluid)
    Po = _props(so, po, co, medium, fluid)
    Fw, Fh, dF = _all_faces(P, grid, medium, fluid, bc)
    dx = grid.dx
    phi = medium.phi

    Fw_in = np.concatenate([[bc.q_w_in], Fw[:-1]])
    Fh_in = np.concatenate([[bc.q_h_in], Fh[:-1]])
    mh, dmh = _hydrogen_content(P, fluid)
    mh_old, _ = _hydrogen_content(Po, fluid)
    Q_w, Q_h = sources if sources is not None else (0.0, 0.0)

    W = phi * fluid.rho_l * (s - so) / dt + (Fw - Fw_in) / dx - Q_w
    Y = phi * (mh - mh_old) / dt + (Fh - Fh_in) / dx - Q_h
    H_val = np.column_stack([W, Y]).ravel()
    F_val = 1.0 - s
    G_val = fluid.H * (p + P.pc) - fluid.rho_l * c
    if not jacobian:
        return H_val, F_val, G_val, None

    diag = np.zeros((n, 2, 3))
    lower = np.zeros((n - 1, 2, 3))
    upper = np.zeros((n - 1, 2, 3))
    diag += dF[:, :, 0:3] / dx
    upper += dF[:-1, :, 3:6] / dx
    lower -= dF[:-1, :, 0:3] / dx
    diag[1:] -= dF[:-1, :, 3:6] / dx
    diag[:, 0, 0] += phi * fluid.rho_l / dt
    diag[:, 1, :] += phi * dmh / dt
    Fp = np.zeros((n, 3))
    Fp[:, 0] = -1.0
    Gp = np.column_stack([fluid.H * P.dpc, np.full(n, fluid.H), np.full(n, -fluid.rho_l)])
    return H_val, F_val, G_val, (HJacobian(lower, diag, upper), Fp, Gp)


def assemble_residual(state_new, state_old, dt, grid, medium, fluid, bc, sources=None):
    """Discrete ``(H, F, G)`` for one implicit Euler step of length ``dt`` (s).

    ``sources`` is an optional pair ``(Q_w, Q_h)`` in kg/(m^3 s).
    """
    H_val, F_val, G_val, _ = _assemble(state_new, state_old, dt, grid, medium, fluid, bc, sources, False)
    return H_val, F_val, G_val


def assemble_jacobian(state_new, state_old, dt, grid, medium, fluid, bc, sources=None):
    """Analytic ``(H', F', G')``: ``H'`` block tridiagonal, ``F'`` and ``G'``
    as per-cell rows of shape ``(N, 3)`` (they only touch their own cell)."""
    return _assemble(state_new, state_old, dt, grid, medium, fluid, bc, sources, True)[3]


def dense_jacobian(Hp, Fp, Gp):
    """Stack ``(H'; F'; G')`` into a dense ``4N x 3N`` matrix."""
    n = Fp.shape[0]
    Fd = np.zeros((n, 3 * n))
    Gd = np.zeros((n, 3 * n))
    idx = np.arange(n)
    for k in range(3):
        Fd[idx, 3 * idx + k] = Fp[:, k]
        Gd[idx, 3 * idx + k] = Gp[:, k]
    return np.vstack([Hp.to_dense(), Fd, Gd])


def face_fluxes(state, grid, medium, fluid, bc):
    """Component mass fluxes on all N+1 faces, left boundary first.

    Returns ``(water, hydrogen)`` arrays in kg/(m^2 s), positive toward +x.
    """
    s, p, c = unflatten_state(state)
    P = _props(s, p, c, medium, fluid)
    Fw, Fh, _ = _all_faces(P, grid, medium, fluid, bc)
    return np.concatenate([[bc.q_w_in], Fw]), np.concatenate([[bc.q_h_in], Fh])


def stored_mass(state, grid, medium, fluid):
    """Water and hydrogen mass per unit cross-section (kg/m^2)."""
    s, p, c = unflatten_state(state)
    P = _props(s, p, c, medium, fluid)
    mh, _ = _hydrogen_content(P, fluid)
    water = medium.phi * fluid.rho_l * np.sum(s) * grid.dx
    hydrogen = medium.phi * np.sum(mh) * grid.dx
    return float(water), float(hydrogen)


def total_hydrogen_density(state, medium, fluid):
    """Per-cell hydrogen mass per bulk volume ``phi (s rho_h^l + s_g rho_g)``."""
    s, p, c = unflatten_state(state)
    P = _props(s, p, c, medium, fluid)
    return medium.phi * _hydrogen_content(P, fluid)[0]


class StepProblem:
    """One implicit Euler step exposed to :func:`ncpflow.ncp.newton_min_solve`.

    Residual rows are scaled by characteristic magnitudes: water rows by
    ``phi rho_l / dt`` (pores filled with liquid), hydrogen rows by
    ``phi C_g p_ref / dt`` (pores filled with gas at ``p_ref``) and the
    complementarity rows by ``H p_ref``. The Newton system is solved with
    these row scales and the column scales ``(1, p_ref, H p_ref / rho_l)``.
    """

    def __init__(self, x_old, dt, grid, medium, fluid, bc, p_ref, sources=None):
        self.x_old = np.asarray(x_old, dtype=float)
        self.dt = dt
        self.grid = grid
        self.medium = medium
        self.fluid = fluid
        self.bc = bc
        self.sources = sources
        n = grid.n_cells
        w_scale = medium.phi * fluid.rho_l / dt
        h_scale = medium.phi * fluid.C_g * p_ref / dt
        self.h_scale = np.tile([w_scale, h_scale], n)
        self.phi_scale = np.full(n, fluid.H * p_ref)
        self.var_scale = np.array([1.0, p_ref, fluid.H * p_ref / fluid.rho_l])
        self._row_scale = np.array([w_scale, h_scale, fluid.H * p_ref])
        self._cache_key = None
        self._cache = None
        self.n_linear_solves = 0

    def _eval(self, x):
        key = x.tobytes()
        if key != self._cache_key:
            self._cache = _assemble(x, self.x_old, self.dt, self.grid, self.medium,
                                    self.fluid, self.bc, self.sources, True)
            self._cache_key = key
        return self._cache

    def residuals(self, x):
        return self._eval(x)[:3]

    def jacobians(self, x):
        return self._eval(x)[3]

    def solve_newton(self, Hp, J_phi, rhs_h, rhs_phi):
        """Block tridiagonal solve of ``[H'; J_phi] dx = [rhs_h; rhs_phi]``."""
        n = self.grid.n_cells
        diag = np.empty((n, 3, 3))
        diag[:, 0:2, :] = Hp.diag
        diag[:, 2, :] = J_phi
        lower = np.zeros((n - 1, 3, 3))
        upper = np.zeros((n - 1, 3, 3))
        lower[:, 0:2, :] = Hp.lower
        upper[:, 0:2, :] = Hp.upper
        rhs = np.column_stack([rhs_h.reshape(n, 2), rhs_phi])
        r = 1.0 / self._row_scale
        c = self.var_scale
        A = BlockTridiagMatrix(
            lower * r[None, :, None] * c[None, None, :],
            diag * r[None, :, None] * c[None, None, :],
            upper * r[None, :, None] * c[None, None, :],
        )
        y = block_thomas_solve(A, (rhs * r).ravel())
        self.n_linear_solves += 1
        return (y.reshape(n, 3) * c).ravel()
