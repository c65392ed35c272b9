"""Run configuration: a line-based ``section.key = value`` format.

Example::

    profile = benchmark
    grid.N = 200
    schedule.dt_years = 5000
    schedule.snapshot_years = 1e4, 2e4, 5e4

Lines starting with ``#`` are comments. ``profile`` selects the base
parameter set; every other line overrides one field of it. Omitted solver
keys fall back to ``eps = 1e-10``, ``max_iter = 50``, ``c_function = min``.
Times are in years and the injection rate in kg/m^2/year.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .constitutive import FluidParams, MediumParams
from .discretization import Grid
from .errors import ParseError, ValidationError

C_FUNCTIONS = ("min", "fischer_burmeister")

DEFAULT_SNAPSHOT_YEARS = (1e4, 2e4, 5e4, 1e5, 1.5e5, 3e5, 5e5, 6e5, 8e5, 1e6)


@dataclass(frozen=True)
class ScheduleConfig:
    dt_years: float = 5000.0
    injection_end_years: float = 5e5
    total_years: float = 1e6
    snapshot_years: tuple = DEFAULT_SNAPSHOT_YEARS
    grad_tol: float = 1.0
    stat_tol: float = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 1e-10
    max_iter: int = 50
    c_function: str = "min"
    max_halvings: int = 4


@dataclass(frozen=True)
class InitialConfig:
    s_l: float = 1.0
    p_l: float = 1e6
    chi_h_l: float = 0.0


@dataclass(frozen=True)
class BoundaryConfig:
    q_h_in: float = 5.57e-6
    p_right: float = 1e6


@dataclass(frozen=True)
class Config:
    profile: str = "benchmark"
    grid: Grid = field(default_factory=Grid)
    medium: MediumParams = field(default_factory=MediumParams)
    fluid: FluidParams = field(default_factory=FluidParams)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)


PROFILES = {
    "benchmark": {},
    # viscosities exactly as printed in the parameter table ("Pa/s")
    "table1-as-printed": {"fluid.mu_l": 1e-9, "fluid.mu_g": 9e-9},
}

# grid keys differ from the Grid field names
_GRID_KEYS = {"N": "n_cells", "L": "length"}
_SECTIONS = {
    "grid": Grid,
    "medium": MediumParams,
    "fluid": FluidParams,
    "schedule": ScheduleConfig,
    "solver": SolverConfig,
    "initial": InitialConfig,
    "boundary": BoundaryConfig,
}


def _field_name(section, key):
    if section == "grid":
        return _GRID_KEYS.get(key)
    names = {f.name for f in dataclasses.fields(_SECTIONS[section]) if f.init}
    return key if key in names else None


def _convert(section, name, text):
    if section == "grid" and name == "n_cells" or name in ("max_iter", "max_halvings"):
        value = float(text)
        if value != int(value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if name in ("c_function", "diffusion_basis"):
        return text
    if name == "snapshot_years":
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    return float(text)


def _validate(cfg: Config):
    sc = cfg.schedule
    if not sc.dt_years > 0:
        raise ValidationError("schedule.dt_years", "must be > 0")
    if not sc.total_years > 0:
        raise ValidationError("schedule.total_years", "must be > 0")
    if not 0 <= sc.injection_end_years <= sc.total_years:
        raise ValidationError("schedule.injection_end_years", "must lie in [0, total_years]")
    snaps = list(sc.snapshot_years)
    if snaps != sorted(snaps) or any(t < 0 or t > sc.total_years for t in snaps):
        raise ValidationError("schedule.snapshot_years", "must be sorted and within [0, total_years]")
    if not sc.grad_tol > 0:
        raise ValidationError("schedule.grad_tol", "must be > 0")
    if not sc.stat_tol > 0:
        raise ValidationError("schedule.stat_tol", "must be > 0")
    so = cfg.solver
    if not so.eps > 0:
        raise ValidationError("solver.eps", "must be > 0")
    if so.max_iter < 1:
        raise ValidationError("solver.max_iter", "must be >= 1")
    if so.c_function not in C_FUNCTIONS:
        raise ValidationError("solver.c_function", f"must be one of {', '.join(C_FUNCTIONS)}")
    if so.max_halvings < 0:
        raise ValidationError("solver.max_halvings", "must be >= 0")
    ini = cfg.initial
    if not cfg.medium.S_lr < ini.s_l <= 1:
        raise ValidationError("initial.s_l", "must lie in (S_lr, 1]")
    if not ini.p_l > 0:
        raise ValidationError("initial.p_l", "must be > 0")
    if not 0 <= ini.chi_h_l <= 1:
        raise ValidationError("initial.chi_h_l", "must lie in [0, 1]")
    bc = cfg.boundary
    if not bc.q_h_in >= 0:
        raise ValidationError("boundary.q_h_in", "must be >= 0")
    if not bc.p_right > 0:
        raise ValidationError("boundary.p_right", "must be > 0")


def _build(profile, overrides):
    """Apply ``{(section, name): value}`` overrides on top of ``profile``."""
    if profile not in PROFILES:
        raise ValidationError("profile", f"unknown profile {profile!r} (known: {', '.join(PROFILES)})")
    values = {}
    for dotted, v in PROFILES[profile].items():
        section, key = dotted.split(".")
        values[(section, _field_name(section, key))] = v
    values.update(overrides)
    sections = {}
    for section, cls in _SECTIONS.items():
        kwargs = {name: v for (sec, name), v in values.items() if sec == section}
        try:
            sections[section] = cls(**kwargs)
        except ValidationError:
            raise
        except (ValueError, TypeError) as exc:
            raise ValidationError(section, str(exc)) from exc
    cfg = Config(profile=profile, **sections)
    _validate(cfg)
    return cfg


def default_config(profile="benchmark", **overrides):
    """Config for a named profile; ``overrides`` use ``section__key`` names."""
    parsed = {}
    for k, v in overrides.items():
        section, key = k.split("__", 1)
        name = _field_name(section, key)
        if name is None:
            raise ValidationError(f"{section}.{key}", "unknown key")
        parsed[(section, name)] = v
    return _build(profile, parsed)


def parse_config(text, profile=None):
    """Parse and validate a configuration text.

    ``profile`` overrides the ``profile = ...`` line when given.
    """
    file_profile = None
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not value:
            raise ParseError(f"missing value for {key!r}", lineno)
        if key == "profile":
            file_profile = value
            continue
        if "." not in key:
            raise ParseError(f"unknown key {key!r}", lineno)
        section, sub = key.split(".", 1)
        if section not in _SECTIONS:
            raise ParseError(f"unknown section {section!r}", lineno)
        name = _field_name(section, sub)
        if name is None:
            raise ParseError(f"unknown key {key!r}", lineno)
        if (section, name) in overrides:
            raise ParseError(f"duplicate key {key!r}", lineno)
        try:
            overrides[(section, name)] = _convert(section, name, value)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", lineno) from exc
    return _build(profile or file_profile or "benchmark", overrides)


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: Config):
    """Text form that :func:`parse_config` maps back to an equal Config."""
    lines = [f"profile = {cfg.profile}"]
    inv_grid = {v: k for k, v in _GRID_KEYS.items()}
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            if not f.init:
                continue
            key = inv_grid[f.name] if section == "grid" else f.name
            lines.append(f"{section}.{key} = {_fmt(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def load_config(path, profile=None):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, profile=profile)
