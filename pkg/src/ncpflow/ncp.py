"""Complementarity functions and the semi-smooth Newton-min solver.

A problem couples equations ``H(x) = 0`` with complementarity constraints
``F(x) >= 0, G(x) >= 0, F(x)^T G(x) = 0`` and is solved through the
non-smooth system ``H(x) = 0, phi(F(x), G(x)) = 0``.

Problems implement two methods::

    residuals(x)  -> (H, F, G)
    jacobians(x)  -> (Hp, Fp, Gp)

``Fp`` and ``Gp`` must have the complementarity index as leading axis so
that rows can be selected with a boolean mask. ``Hp`` is opaque to the
solver and is only handed to the linear solver, which receives
``(Hp, J_phi, rhs_h, rhs_phi)`` and returns the Newton increment. Optional
attributes ``h_scale`` and ``phi_scale`` scale the residual norm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import DomainError, EvaluationFailure, NonConvergence, SingularLinearSystem

log = logging.getLogger(__name__)

COND_LIMIT = 1e14


class NcpProblem(Protocol):
    def residuals(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...

    def jacobians(self, x: np.ndarray) -> tuple[object, np.ndarray, np.ndarray]: ...


@dataclass
class NewtonReport:
    """Iteration history of one Newton-min solve.

    ``residual_history[k]`` is the scaled residual at iterate ``x^{k+1}``
    (entry 0 is the starting point), so ``iterations`` (the number of
    linear solves) is ``len(residual_history) - 1``.
    """

    converged: bool = False
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    active_set_history: list[int] = field(default_factory=list)
    final_active_set: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    c_function: str = "min"


def _check_lengths(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def cfun_min(a, b):
    """Component-wise minimum C-function."""
    a, b = _check_lengths(a, b)
    return np.minimum(a, b)


def cfun_fischer_burmeister(a, b):
    """Fischer-Burmeister C-function ``sqrt(a^2 + b^2) - a - b``."""
    a, b = _check_lengths(a, b)
    return np.hypot(a, b) - a - b


C_FUNCTIONS = {"min": cfun_min, "fischer_burmeister": cfun_fischer_burmeister}


def active_sets(F_val, G_val):
    """Index sets ``A = {i : G_i < F_i}`` and ``I = {i : G_i >= F_i}``."""
    F_val, G_val = _check_lengths(F_val, G_val)
    mask = G_val < F_val
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def select_jacobian_rows(Fp, Gp, F_val, G_val):
    """Row ``i`` is ``Fp[i]`` when ``F_i <= G_i`` and ``Gp[i]`` otherwise."""
    F_val, G_val = _check_lengths(F_val, G_val)
    Fp = np.asarray(Fp, dtype=float)
    Gp = np.asarray(Gp, dtype=float)
    if Fp.shape != Gp.shape or Fp.shape[0] != F_val.shape[0]:
        raise ValueError(f"dimension mismatch: Fp {Fp.shape}, Gp {Gp.shape}, F {F_val.shape}")
    use_f = (F_val <= G_val).reshape((-1,) + (1,) * (Fp.ndim - 1))
    return np.where(use_f, Fp, Gp)


def fischer_burmeister_rows(Fp, Gp, F_val, G_val):
    """Generalized-gradient rows of the Fischer-Burmeister function.

    At the kink ``a = b = 0`` the element with coefficients ``(-1, 0)`` is
    used, i.e. the negated F row.
    """
    F_val, G_val = _check_lengths(F_val, G_val)
    Fp = np.asarray(Fp, dtype=float)
    Gp = np.asarray(Gp, dtype=float)
    r = np.hypot(F_val, G_val)
    kink = r == 0.0
    safe = np.where(kink, 1.0, r)
    alpha = np.where(kink, -1.0, F_val / safe - 1.0)
    beta = np.where(kink, 0.0, G_val / safe - 1.0)
    shape = (-1,) + (1,) * (Fp.ndim - 1)
    return alpha.reshape(shape) * Fp + beta.reshape(shape) * Gp


def residual_norm(H_val, phi_val, h_scale=None, phi_scale=None):
    """Max-norm of ``(H / h_scale, phi / phi_scale)``."""
    H_val = np.asarray(H_val, dtype=float)
    phi_val = np.asarray(phi_val, dtype=float)
    if h_scale is not None:
        H_val = H_val / h_scale
    if phi_scale is not None:
        phi_val = phi_val / phi_scale
    parts = [np.abs(v).max() for v in (H_val, phi_val) if v.size]
    return float(max(parts)) if parts else 0.0


def dense_linear_solver(Hp, J_phi, rhs_h, rhs_phi):
    """Solve the stacked Newton system with a dense LU factorization."""
    Hp = np.asarray(Hp, dtype=float).reshape(-1, J_phi.shape[1])
    M = np.vstack([Hp, J_phi])
    rhs = np.concatenate([rhs_h, rhs_phi])
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"Newton matrix is not square: {M.shape}")
    if not np.all(np.isfinite(M)):
        raise SingularLinearSystem("non-finite entries in the Newton matrix")
    try:
        cond = np.linalg.cond(M)
        if not cond < COND_LIMIT:
            raise SingularLinearSystem(f"Newton matrix condition number {cond:.3e}")
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularLinearSystem(str(exc)) from exc


def newton_min_solve(
    problem: NcpProblem,
    x0,
    eps: float = 1e-10,
    max_iter: int = 50,
    linear_solver: Callable | None = None,
    c_function: str = "min",
    callback: Callable | None = None,
):
    """Solve ``H(x) = 0, phi(F(x), G(x)) = 0`` by the semi-smooth Newton method.

    One linear system is solved per iteration and no globalization is
    applied. ``callback(k, x, res, n_active)`` is invoked at every iterate.

    Returns
    -------
    x_star : ndarray
    report : NewtonReport

    Raises
    ------
    NonConvergence
        ``max_iter`` linear solves without reaching ``eps``.
    SingularLinearSystem
        The linearized system could not be factorized.
    EvaluationFailure
        The problem could not be evaluated at an iterate.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if c_function not in C_FUNCTIONS:
        raise ValueError(f"unknown C-function {c_function!r}")
    cfun = C_FUNCTIONS[c_function]
    solve = linear_solver or dense_linear_solver
    h_scale = getattr(problem, "h_scale", None)
    phi_scale = getattr(problem, "phi_scale", None)

    report = NewtonReport(c_function=c_function)
    x = np.array(x0, dtype=float, copy=True)
    k = 0
    while True:
        try:
            H_val, F_val, G_val = problem.residuals(x)
        except DomainError as exc:
            raise EvaluationFailure(f"iteration {k}: {exc}", report) from exc
        phi_val = cfun(F_val, G_val)
        res = residual_norm(H_val, phi_val, h_scale, phi_scale)
        active, _ = active_sets(F_val, G_val)
        report.residual_history.append(res)
        report.active_set_history.append(int(active.size))
        report.final_active_set = active
        report.iterations = k
        if callback is not None:
            callback(k, x, res, int(active.size))
        if not np.isfinite(res):
            raise EvaluationFailure(f"iteration {k}: non-finite residual", report)
        if res <= eps:
            report.converged = True
            return x, report
        if k >= max_iter:
            raise NonConvergence(
                f"no convergence after {max_iter} iterations (residual {res:.3e})", report
            )
        try:
            Hp, Fp, Gp = problem.jacobians(x)
        except DomainError as exc:
            raise EvaluationFailure(f"iteration {k}: {exc}", report) from exc
        if c_function == "min":
            J_phi = select_jacobian_rows(Fp, Gp, F_val, G_val)
        else:
            J_phi = fischer_burmeister_rows(Fp, Gp, F_val, G_val)
        try:
            dx = solve(Hp, J_phi, -np.asarray(H_val, dtype=float), -phi_val)
        except SingularLinearSystem as exc:
            exc.report = report
            raise
        x = x + dx
        k += 1
        log.debug("newton-min iter %d residual %.3e active %d", k, res, active.size)


class AffineNcp:
    """Dense problem with affine maps ``H = A x + a``, ``F = B x + b``,
    ``G = C x + c``. ``H`` may be empty."""

    def __init__(self, F_mat, F_vec, G_mat, G_vec, H_mat=None, H_vec=None):
        self.F_mat = np.atleast_2d(np.asarray(F_mat, dtype=float))
        self.F_vec = np.atleast_1d(np.asarray(F_vec, dtype=float))
        self.G_mat = np.atleast_2d(np.asarray(G_mat, dtype=float))
        self.G_vec = np.atleast_1d(np.asarray(G_vec, dtype=float))
        n = self.F_mat.shape[1]
        if H_mat is None:
            self.H_mat = np.zeros((0, n))
            self.H_vec = np.zeros(0)
        else:
            self.H_mat = np.atleast_2d(np.asarray(H_mat, dtype=float))
            self.H_vec = np.atleast_1d(np.asarray(H_vec, dtype=float))
        self.n = n
        self.n_comp = self.F_mat.shape[0]
        self.n_eq = self.H_mat.shape[0]
        if self.n_eq + self.n_comp != n:
            raise ValueError("need n_eq + n_comp == n")

    @classmethod
    def lcp(cls, M, q):
        """``min(x, M x + q) = 0``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(np.eye(M.shape[0]), np.zeros(M.shape[0]), M, q)

    def residuals(self, x):
        return self.H_mat @ x + self.H_vec, self.F_mat @ x + self.F_vec, self.G_mat @ x + self.G_vec

    def jacobians(self, x):
        return self.H_mat, self.F_mat, self.G_mat


class SmoothNcp:
    """Dense problem built from callables returning ``(value, jacobian)``."""

    def __init__(self, n, n_comp, F, G, H=None):
        self.n = n
        self.n_comp = n_comp
        self.n_eq = n - n_comp
        self._F, self._G, self._H = F, G, H

    def _h(self, x):
        if self._H is None:
            return np.zeros(0), np.zeros((0, self.n))
        return self._H(x)

    def residuals(self, x):
        return self._h(x)[0], self._F(x)[0], self._G(x)[0]

    def jacobians(self, x):
        return self._h(x)[1], self._F(x)[1], self._G(x)[1]
