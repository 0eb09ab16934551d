"""Run configuration: one YAML file, strict keys, full validation.

The schema is nested: model, lane_emden, solver, perturbation,
diagnostics, stability, output.  A minimal config may instead put the
four model numbers (gamma, theta, nu1, nu2) at the top level.  Unknown
keys are rejected everywhere; every range constraint of the underlying
types is enforced at load time, so a config that loads is a config
that runs.  write_config/load_config round-trip exactly.
"""

from dataclasses import dataclass, field

import yaml

from . import diagnostics
from .errors import ValidationError
from .initial_data import Perturbation
from .params import ModelParams
from .solver import SolverConfig

FORMATS = ("csv", "json")


@dataclass(frozen=True)
class LaneEmdenSettings:
    """Equilibrium-profile construction knobs.

    M is the total mass; N_profile sizes stand-alone profile exports
    (simulation grids always use solver.n so the mesh matches).
    """

    M: float = 1.0
    N_profile: int = 512
    root_tol: float = 1e-12
    ode_rtol: float = 1e-12

    def __post_init__(self):
        if not self.M > 0.0:
            raise ValidationError(f"lane_emden.M must be positive, got {self.M}")
        if not (isinstance(self.N_profile, int) and self.N_profile >= 16):
            raise ValidationError(
                f"lane_emden.N_profile must be an integer >= 16, "
                f"got {self.N_profile}")
        for name in ("root_tol", "ode_rtol"):
            if not 0.0 < getattr(self, name) <= 1e-6:
                raise ValidationError(
                    f"lane_emden.{name} must lie in (0, 1e-6], "
                    f"got {getattr(self, name)}")


@dataclass(frozen=True)
class DiagnosticsSettings:
    """iota/b_grid feed the exponent arithmetic; l bounds the interior
    interval for the flow-gradient sup.  null picks the documented
    defaults (iota at its cap, l = R_bar/2, b_grid endpoints+midpoint).
    """

    iota: float = None
    l: float = None
    b_grid: tuple = None

    def __post_init__(self):
        if self.b_grid is not None:
            object.__setattr__(
                self, "b_grid", tuple(float(b) for b in self.b_grid))
        if self.l is not None and not self.l > 0.0:
            raise ValidationError(f"diagnostics.l must be positive, got {self.l}")


@dataclass(frozen=True)
class StabilitySettings:
    """delta_bar caps the admissible initial energy; null disables the check."""

    delta_bar: float = 1e-4

    def __post_init__(self):
        if self.delta_bar is not None and not self.delta_bar > 0.0:
            raise ValidationError(
                f"stability.delta_bar must be positive or null, "
                f"got {self.delta_bar}")


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "runs"
    formats: tuple = FORMATS

    def __post_init__(self):
        if not isinstance(self.directory, str) or not self.directory:
            raise ValidationError("output.directory must be a nonempty string")
        fmts = tuple(self.formats)
        bad = [f for f in fmts if f not in FORMATS]
        if bad or not fmts:
            raise ValidationError(
                f"output.formats entries must be among {FORMATS}, got {fmts}")
        object.__setattr__(self, "formats", fmts)


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    lane_emden: LaneEmdenSettings = field(default_factory=LaneEmdenSettings)
    solver: SolverConfig = field(default_factory=SolverConfig)
    perturbation: Perturbation = field(default_factory=lambda: Perturbation(
        "lagrangian_displacement", 1e-3))
    diagnostics: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)
    stability: StabilitySettings = field(default_factory=StabilitySettings)
    output: OutputSettings = field(default_factory=OutputSettings)


_MODEL_KEYS = ("gamma", "theta", "nu1", "nu2")
_SECTIONS = ("model", "lane_emden", "solver", "perturbation",
             "diagnostics", "stability", "output")


def _take(mapping, allowed, section):
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ValidationError(f"config section {section!r} must be a mapping")
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ValidationError(
            f"unknown config key(s) in {section}: {', '.join(unknown)}")
    return dict(mapping)


def from_mapping(raw):
    """Build a validated RunConfig from a parsed mapping."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a mapping")

    top = _take(raw, _SECTIONS + _MODEL_KEYS, "top level")
    shorthand = {k: top.pop(k) for k in _MODEL_KEYS if k in top}
    if shorthand and "model" in top:
        raise ValidationError(
            "model parameters given both at top level and under 'model'")
    model_map = _take(top.get("model", shorthand), _MODEL_KEYS, "model")
    missing = [k for k in _MODEL_KEYS if k not in model_map]
    if missing:
        raise ValidationError(f"model is missing key(s): {', '.join(missing)}")
    model = ModelParams(**{k: float(model_map[k]) for k in _MODEL_KEYS})

    le = _take(top.get("lane_emden"), ("M", "N_profile", "root_tol", "ode_rtol"),
               "lane_emden")
    lane = LaneEmdenSettings(**le)

    sv = _take(top.get("solver"),
               ("n", "cfl", "dt_max", "t_end", "viscous_tol", "output_stride"),
               "solver")
    if "viscous_tol" in sv:
        sv["viscous_solve_tol"] = float(sv.pop("viscous_tol"))
    solver_cfg = SolverConfig(**sv)

    pt = _take(top.get("perturbation"), ("kind", "epsilon", "shape"),
               "perturbation")
    pert_defaults = {"kind": "lagrangian_displacement", "epsilon": 1e-3}
    pert = Perturbation(**{**pert_defaults, **pt})

    dg = _take(top.get("diagnostics"), ("iota", "l", "b_grid"), "diagnostics")
    diag = DiagnosticsSettings(**dg)
    # range checks for iota/b_grid need gamma, so validate through the
    # exponent arithmetic itself
    diagnostics.exponents(model, iota=diag.iota, b_grid=diag.b_grid)

    st = _take(top.get("stability"), ("delta_bar",), "stability")
    stab = StabilitySettings(**st)

    ot = _take(top.get("output"), ("directory", "formats"), "output")
    out = OutputSettings(**ot)

    return RunConfig(model=model, lane_emden=lane, solver=solver_cfg,
                     perturbation=pert, diagnostics=diag, stability=stab,
                     output=out)


def to_mapping(config):
    """Plain nested dict of one RunConfig, inverse of from_mapping."""
    m = config.model
    s = config.solver
    return {
        "model": {"gamma": m.gamma, "theta": m.theta,
                  "nu1": m.nu1, "nu2": m.nu2},
        "lane_emden": {"M": config.lane_emden.M,
                       "N_profile": config.lane_emden.N_profile,
                       "root_tol": config.lane_emden.root_tol,
                       "ode_rtol": config.lane_emden.ode_rtol},
        "solver": {"n": s.n, "cfl": s.cfl, "dt_max": s.dt_max,
                   "t_end": s.t_end, "viscous_tol": s.viscous_solve_tol,
                   "output_stride": s.output_stride},
        "perturbation": {"kind": config.perturbation.kind,
                         "epsilon": config.perturbation.epsilon,
                         "shape": list(config.perturbation.shape)},
        "diagnostics": {"iota": config.diagnostics.iota,
                        "l": config.diagnostics.l,
                        "b_grid": (None if config.diagnostics.b_grid is None
                                   else list(config.diagnostics.b_grid))},
        "stability": {"delta_bar": config.stability.delta_bar},
        "output": {"directory": config.output.directory,
                   "formats": list(config.output.formats)},
    }


def load_config(path):
    """Parse and validate one YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ValidationError(f"config parse error in {path}: {err}") from None
    return from_mapping(raw)


def write_config(config, path):
    """Write one RunConfig as YAML; load_config inverts this exactly."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(to_mapping(config), fh, sort_keys=False,
                       default_flow_style=False)


def default_config(**model_overrides):
    """The standard small-perturbation setup with optional model tweaks."""
    base = {"gamma": 1.5, "theta": 0.5, "nu1": 0.02, "nu2": 0.02}
    base.update(model_overrides)
    return RunConfig(model=ModelParams(**base))
