"""Constitutive laws: Van Genuchten-Mualem curves, mobilities, Henry's law.

Every curve returns ``(value, derivative)`` where the derivative is taken
with respect to the liquid saturation ``s_l`` (or the natural argument for
the density laws). Inputs may be scalars or numpy arrays.

The Van Genuchten capillary pressure and liquid relative permeability have
an infinite slope at full liquid saturation when ``n < 2``. On the band
``1 - SE_REG < S_le <= 1`` both curves, and the gas relative permeability,
are replaced by the quadratic in ``1 - S_le`` that matches value and slope
of the closed form at ``S_le = 1 - SE_REG`` and the exact endpoint value at
``S_le = 1``. With ``extrapolate=True`` the curves are continued past
``S_le = 1`` (the quadratic for ``p_c`` and ``k_rl``, zero for ``k_rg``) so
that the discrete system is defined for Newton iterates with ``s_l > 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, ValidationError

R_GAS = 8.314  # J/(mol K)
S_EPS = 1e-6
SE_REG = 1e-3
DOMAIN_TOL = 1e-12
DIFFUSION_BASES = ("hydrogen", "water")


@dataclass(frozen=True)
class MediumParams:
    """Porous medium: permeability ``K`` (m^2), porosity ``phi``, Van Genuchten
    pressure ``P_r`` (Pa) and exponent ``n``, residual saturations."""

    K: float = 5e-20
    phi: float = 0.15
    P_r: float = 2e6
    n: float = 1.49
    S_lr: float = 0.4
    S_gr: float = 0.0
    m: float = field(init=False)

    def __post_init__(self):
        if not self.K > 0:
            raise ValidationError("medium.K", "must be > 0")
        if not 0 < self.phi < 1:
            raise ValidationError("medium.phi", "must lie in (0, 1)")
        if not self.P_r > 0:
            raise ValidationError("medium.P_r", "must be > 0")
        if not self.n > 1:
            raise ValidationError("medium.n", "must be > 1")
        if self.S_lr < 0:
            raise ValidationError("medium.S_lr", "must be >= 0")
        if self.S_gr < 0:
            raise ValidationError("medium.S_gr", "must be >= 0")
        if not self.S_lr + self.S_gr < 1:
            raise ValidationError("medium.S_lr", "S_lr + S_gr must be < 1")
        object.__setattr__(self, "m", 1.0 - 1.0 / self.n)


@dataclass(frozen=True)
class FluidParams:
    """Liquid and gas properties.

    ``H`` (kg/(Pa m^3)) is the mass Henry constant ``H_T * M_h``. ``C_g``
    defaults to the ideal-gas value ``M_h / (R T)``.

    ``diffusion_basis`` fixes the liquid molar density used by the diffusive
    flux. With ``"hydrogen"`` it is ``rho_l / M_h``, which is the value that
    makes ``rho_h^l = M_h c_l chi_h^l`` agree with the closure
    ``rho_h^l = rho_l chi_h^l``; the flux is then
    ``-phi s_l D grad(rho_h^l)``. With ``"water"`` it is ``rho_l / M_w``.
    """

    mu_l: float = 1e-3
    mu_g: float = 9e-6
    rho_l: float = 1e3
    H_T: float = 7.65e-6
    M_w: float = 1e-2
    M_h: float = 2e-3
    D_h_l: float = 3e-9
    T: float = 303.0
    C_g: float | None = None
    rho_h_ref: float = 8e-2
    diffusion_basis: str = "hydrogen"
    H: float = field(init=False)

    def __post_init__(self):
        if self.C_g is None:
            object.__setattr__(self, "C_g", self.M_h / (R_GAS * self.T))
        for name in ("mu_l", "mu_g", "rho_l", "H_T", "M_w", "M_h", "D_h_l", "T", "C_g", "rho_h_ref"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"fluid.{name}", "must be > 0")
        rel = abs(self.C_g * 1e5 - self.rho_h_ref) / self.rho_h_ref
        if rel > 0.02:
            raise ValidationError(
                "fluid.C_g", f"C_g * 1e5 Pa differs from rho_h_ref by {rel:.1%} (> 2%)"
            )
        if self.diffusion_basis not in DIFFUSION_BASES:
            raise ValidationError(
                "fluid.diffusion_basis", f"must be one of {', '.join(DIFFUSION_BASES)}"
            )
        object.__setattr__(self, "H", self.H_T * self.M_h)

    @property
    def liquid_molar_density(self):
        """Constant liquid molar density ``c_l`` (mol/m^3) of the diffusive flux."""
        if self.diffusion_basis == "water":
            return self.rho_l / self.M_w
        return self.rho_l / self.M_h


def effective_saturation(s_l, medium, tol=DOMAIN_TOL, extrapolate=False):
    """Map liquid saturation to ``S_le = (s_l - S_lr) / (1 - S_lr - S_gr)``.

    Returns ``(S_le, dS_le/ds_l)``. Without ``extrapolate`` the input must
    lie in ``[S_lr, 1]`` up to ``tol`` and the output is clipped to [0, 1].
    """
    s = np.asarray(s_l, dtype=float)
    span = 1.0 - medium.S_lr - medium.S_gr
    if not extrapolate:
        bad = (s < medium.S_lr - tol) | (s > 1.0 + tol) | ~np.isfinite(s)
        if np.any(bad):
            idx = np.flatnonzero(np.atleast_1d(bad))[0]
            raise DomainError(
                f"s_l={np.atleast_1d(s)[idx]!r} outside [{medium.S_lr}, 1]",
                cell=int(idx) if s.ndim else None,
            )
        se = np.clip((s - medium.S_lr) / span, 0.0, 1.0)
    else:
        se = (s - medium.S_lr) / span
    return se, np.full_like(se, 1.0 / span)


# --- closed forms on S_le -------------------------------------------------


def _vg_pc(se, m, n):
    """Dimensionless p_c / P_r and its S_le derivative (closed form)."""
    w = se ** (-1.0 / m)
    base = w - 1.0
    val = base ** (1.0 / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        der = (1.0 / n) * base ** (1.0 / n - 1.0) * (-1.0 / m) * w / se
    return val, der


def _vg_krl(se, m):
    w = se ** (1.0 / m)
    y = 1.0 - w
    with np.errstate(divide="ignore"):
        z = -np.expm1(m * np.log1p(-w))  # 1 - y^m without cancellation at small S_le
    val = np.sqrt(se) * z**2
    with np.errstate(divide="ignore", invalid="ignore"):
        der = 0.5 / np.sqrt(se) * z**2 + 2.0 * np.sqrt(se) * z * y ** (m - 1.0) * se ** (1.0 / m - 1.0)
    return val, np.where(se > 0, der, 0.0)


def _vg_krg(se, m):
    y = 1.0 - se ** (1.0 / m)
    root = np.sqrt(1.0 - se)
    val = root * y ** (2.0 * m)
    with np.errstate(divide="ignore", invalid="ignore"):
        dy = -(1.0 / m) * se ** (1.0 / m - 1.0)
        der = -0.5 / root * y ** (2.0 * m) + root * 2.0 * m * y ** (2.0 * m - 1.0) * dy
    return val, np.where(se > 0, der, -0.5)


@lru_cache(maxsize=64)
def _reg_coeffs(m, n, delta):
    """Quadratic ``f1 + u (a + b u)``, ``u = 1 - S_le``, for pc/P_r, krl, krg."""
    se0 = 1.0 - delta
    out = {}
    for name, f1, (v, d) in (
        ("pc", 0.0, _vg_pc(np.float64(se0), m, n)),
        ("krl", 1.0, _vg_krl(np.float64(se0), m)),
        ("krg", 0.0, _vg_krg(np.float64(se0), m)),
    ):
        g = -float(d)  # slope in u
        dv = float(v) - f1
        b = (g * delta - dv) / delta**2
        a = (2.0 * dv - g * delta) / delta
        out[name] = (f1, a, b)
    return out


def _regularized(se, name, exact, m, n, delta, above_one):
    """Evaluate a curve with the high-saturation quadratic splice.

    ``above_one`` selects the continuation for ``S_le > 1``: ``"quad"``
    keeps the quadratic, ``"zero"`` returns a flat zero.
    """
    se = np.asarray(se, dtype=float)
    f1, a, b = _reg_coeffs(m, n, delta)[name]
    hi = se > 1.0 - delta
    safe = np.where(hi, 0.5, se)
    val, der = exact(safe)
    u = 1.0 - se
    qval = f1 + u * (a + b * u)
    qder = -(a + 2.0 * b * u)
    val = np.where(hi, qval, val)
    der = np.where(hi, qder, der)
    if above_one == "zero":
        over = se > 1.0
        val = np.where(over, 0.0, val)
        der = np.where(over, 0.0, der)
    return val, der


def capillary_pressure(s_l, medium, extrapolate=False, delta=SE_REG):
    """Capillary pressure ``p_c = P_r (S_le^(-1/m) - 1)^(1/n)`` and dp_c/ds_l.

    ``S_le`` is clamped from below at ``S_EPS`` (zero derivative there).
    """
    se, dse = effective_saturation(s_l, medium, extrapolate=extrapolate)
    low = se < S_EPS
    se_c = np.where(low, S_EPS, se)
    m, n = medium.m, medium.n
    val, der = _regularized(se_c, "pc", lambda x: _vg_pc(x, m, n), m, n, delta, "quad")
    der = np.where(low, 0.0, der)
    return medium.P_r * val, medium.P_r * der * dse


def rel_perm_liquid(s_l, medium, extrapolate=False, delta=SE_REG):
    """``k_rl = sqrt(S_le) (1 - (1 - S_le^(1/m))^m)^2`` and dk_rl/ds_l."""
    se, dse = effective_saturation(s_l, medium, extrapolate=extrapolate)
    se_c = np.maximum(se, 0.0)
    m = medium.m
    val, der = _regularized(se_c, "krl", lambda x: _vg_krl(x, m), m, medium.n, delta, "quad")
    der = np.where(se < 0.0, 0.0, der)
    return val, der * dse


def rel_perm_gas(s_l, medium, extrapolate=False, delta=SE_REG):
    """``k_rg = sqrt(1 - S_le) (1 - S_le^(1/m))^(2m)`` and dk_rg/ds_l."""
    se, dse = effective_saturation(s_l, medium, extrapolate=extrapolate)
    se_c = np.maximum(se, 0.0)
    m = medium.m
    val, der = _regularized(se_c, "krg", lambda x: _vg_krg(x, m), m, medium.n, delta, "zero")
    der = np.where(se < 0.0, 0.0, der)
    return val, der * dse


def mobility(phase, s_l, medium, fluid, extrapolate=False):
    """Phase mobility ``k_r / mu`` (1/(Pa s)) and its s_l derivative."""
    if phase == "liquid":
        kr, dkr = rel_perm_liquid(s_l, medium, extrapolate=extrapolate)
        mu = fluid.mu_l
    elif phase == "gas":
        kr, dkr = rel_perm_gas(s_l, medium, extrapolate=extrapolate)
        mu = fluid.mu_g
    else:
        raise ValueError(f"unknown phase {phase!r}")
    return kr / mu, dkr / mu


def gas_density(p_g, fluid):
    """Slightly compressible gas, ``rho_g = C_g p_g``. Returns (rho_g, C_g)."""
    p = np.asarray(p_g, dtype=float)
    if np.any(p <= 0):
        raise DomainError(f"gas pressure must be > 0, got min {p.min()!r}")
    return fluid.C_g * p, np.full_like(p, fluid.C_g)


def dissolved_hydrogen_density(chi_h_l, fluid, check=True):
    """Dilute closure ``rho_h^l = rho_l * chi_h^l`` (kg/m^3)."""
    chi = np.asarray(chi_h_l, dtype=float)
    if check and np.any((chi < 0) | (chi > 1)):
        raise DomainError("chi_h_l outside [0, 1]")
    return fluid.rho_l * chi
