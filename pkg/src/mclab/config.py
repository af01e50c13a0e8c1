"""Experiment configuration: INI files, environment overrides, plans.

A config file is standard INI with the sections below; every key has a
documented default except params.nu and params.alpha, which any run
needs explicitly.  Unknown sections or keys are an error that lists the
offenders, so typos never silently fall back to defaults.

    [grid]        nx ny nz m dealias_fraction
    [params]      nu alpha sigma delta0
    [run]         dt t_final epsilon ic_kind remap_policy
                  diagnostics_every ic_band ic_mode ic_amp_u ic_amp_b
                  ic_path sobolev_n linear_only snapshot_stride
    [experiment]  kind out jobs seed nu_values alpha_values
                  epsilon_values sigma_values
    [multiplier]  k_max l_max eta_abs_max eta_step nu_values
    [linear]      study mode amp_u amp_b k_max l_max eta_max t_final
                  n_eval
    [report]      states n c0 epsilon

sigma values are exact rationals ("1", "1/2", "-2/3").  List values are
comma separated.  An empty value means "unset" for optional keys.

Environment overrides
---------------------
MCL_<SECTION>__<KEY> (two underscores) replaces the file value, e.g.
``MCL_PARAMS__NU=1e-3`` or ``MCL_EXPERIMENT__JOBS=4``.  Overrides pass
through the same validation as file keys.

serialize_plan() emits an INI snapshot (floats via repr) whose re-parse
compares equal to the original plan; experiment cells persist that
snapshot so any cell can be rerun from its own directory.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from .solver import SimConfig
from .spectral import GridSpec, PhysParams, RationalShearAngle

PLAN_KINDS = (
    "multiplier_check",
    "linear_mode",
    "linear_sweep",
    "simulate",
    "threshold_sweep",
    "norms_report",
)

LINEAR_STUDIES = ("g2_scaling", "q2_scaling", "sym_v2", "liftup", "damping")

ENV_PREFIX = "MCL_"


@dataclass(frozen=True)
class RunSettings:
    """SimConfig fields that come from the [run] section; grid, params
    and seed are attached per cell by build_sim_config."""

    dt: float = 0.01
    t_final: float = 1.0
    epsilon: float = 1e-3
    ic_kind: str = "random_band"
    remap_policy: str = "periodic_at_integer_multiples"
    diagnostics_every: float | None = None
    ic_band: int = 4
    ic_mode: tuple[int, int, int] | None = None
    ic_amp_u: tuple[complex, complex, complex] | None = None
    ic_amp_b: tuple[complex, complex, complex] | None = None
    ic_path: str | None = None
    sobolev_n: float = 5.0
    linear_only: bool = False
    snapshot_stride: int = 0


@dataclass(frozen=True)
class MultiplierScan:
    """Exhaustive weight-bound scan extents (multiplier-check)."""

    k_max: int = 16
    l_max: int = 16
    eta_abs_max: float = 1000.0
    eta_step: float = 0.1
    nu_values: tuple[float, ...] = (1.0, 1e-2, 1e-4)


@dataclass(frozen=True)
class LinearStudy:
    """Single-mode / mode-family linear studies (linear-mode and the
    per-cell payload of linear-sweep)."""

    study: str = "g2_scaling"
    mode: tuple[int, int, int] = (1, 0, -1)
    amp_u: tuple[complex, complex, complex] = (0j, 1e-3 + 0j, 0j)
    amp_b: tuple[complex, complex, complex] = (0j, 0j, 0j)
    k_max: int = 2
    l_max: int = 2
    eta_max: int = 2
    t_final: float | None = None
    n_eval: int = 2001

    def __post_init__(self) -> None:
        if self.study not in LINEAR_STUDIES:
            raise ValueError(f"study must be one of {LINEAR_STUDIES}, got {self.study!r}")


@dataclass(frozen=True)
class ReportSettings:
    """norms-report inputs: a stored state trajectory plus norm knobs."""

    states: str | None = None
    n: float = 5.0
    c0: float | None = None
    epsilon: float | None = None


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything a run needs, resolved and validated.

    Sweep axes are consumed by the sweep kinds (linear_sweep iterates
    nu_values and alpha_values; threshold_sweep iterates nu_values x
    epsilon_values); an empty axis yields zero cells, which executes
    successfully as a no-op."""

    kind: str
    grid: GridSpec
    params: PhysParams
    run: RunSettings = field(default_factory=RunSettings)
    out: str = "out"
    jobs: int = 1
    seed: int = 0
    nu_values: tuple[float, ...] = ()
    alpha_values: tuple[float, ...] = ()
    epsilon_values: tuple[float, ...] = ()
    sigma_values: tuple[RationalShearAngle, ...] = ()
    multiplier: MultiplierScan = field(default_factory=MultiplierScan)
    linear: LinearStudy = field(default_factory=LinearStudy)
    report: ReportSettings = field(default_factory=ReportSettings)

    def __post_init__(self) -> None:
        if self.kind not in PLAN_KINDS:
            raise ValueError(f"kind must be one of {PLAN_KINDS}, got {self.kind!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.out:
            raise ValueError("output directory must be nonempty")
        if self.kind == "norms_report" and self.report.states is None:
            raise ValueError("norms_report needs report.states (a state file)")


# ---------------------------------------------------------------------------
# scalar parsers

def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_sigma(s: str) -> RationalShearAngle:
    frac = Fraction(s.strip())
    return RationalShearAngle(frac.numerator, frac.denominator)


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


def _parse_sigma_list(s: str) -> tuple[RationalShearAngle, ...]:
    return tuple(_parse_sigma(tok) for tok in s.split(",") if tok.strip())


def _parse_int_triplet(s: str) -> tuple[int, int, int]:
    toks = [tok for tok in s.split(",") if tok.strip()]
    if len(toks) != 3:
        raise ValueError(f"expected three integers, got {s!r}")
    return tuple(int(tok) for tok in toks)  # type: ignore[return-value]


def _parse_complex_triplet(s: str) -> tuple[complex, complex, complex]:
    toks = [tok for tok in s.split(",") if tok.strip()]
    if len(toks) != 3:
        raise ValueError(f"expected three complex numbers, got {s!r}")
    return tuple(complex(tok.strip()) for tok in toks)  # type: ignore[return-value]


#: section -> key -> parser; the single source of truth for known keys.
_SCHEMA: dict[str, dict[str, object]] = {
    "grid": {
        "nx": int,
        "ny": int,
        "nz": int,
        "m": int,
        "dealias_fraction": float,
    },
    "params": {
        "nu": float,
        "alpha": float,
        "sigma": _parse_sigma,
        "delta0": float,
    },
    "run": {
        "dt": float,
        "t_final": float,
        "epsilon": float,
        "ic_kind": str,
        "remap_policy": str,
        "diagnostics_every": float,
        "ic_band": int,
        "ic_mode": _parse_int_triplet,
        "ic_amp_u": _parse_complex_triplet,
        "ic_amp_b": _parse_complex_triplet,
        "ic_path": str,
        "sobolev_n": float,
        "linear_only": _parse_bool,
        "snapshot_stride": int,
    },
    "experiment": {
        "kind": str,
        "out": str,
        "jobs": int,
        "seed": int,
        "nu_values": _parse_float_list,
        "alpha_values": _parse_float_list,
        "epsilon_values": _parse_float_list,
        "sigma_values": _parse_sigma_list,
    },
    "multiplier": {
        "k_max": int,
        "l_max": int,
        "eta_abs_max": float,
        "eta_step": float,
        "nu_values": _parse_float_list,
    },
    "linear": {
        "study": str,
        "mode": _parse_int_triplet,
        "amp_u": _parse_complex_triplet,
        "amp_b": _parse_complex_triplet,
        "k_max": int,
        "l_max": int,
        "eta_max": int,
        "t_final": float,
        "n_eval": int,
    },
    "report": {
        "states": str,
        "n": float,
        "c0": float,
        "epsilon": float,
    },
}


def _collect(cp: configparser.ConfigParser) -> dict[str, dict[str, object]]:
    """Validate sections/keys against the schema and parse values.
    Empty strings mean unset and are dropped."""
    unknown = []
    out: dict[str, dict[str, object]] = {sec: {} for sec in _SCHEMA}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            unknown.extend(f"{sec}.{key}" for key in cp[sec])
            continue
        for key, raw in cp[sec].items():
            if key not in _SCHEMA[sec]:
                unknown.append(f"{sec}.{key}")
                continue
            if raw.strip() == "":
                continue
            try:
                out[sec][key] = _SCHEMA[sec][key](raw)  # type: ignore[operator]
            except (ValueError, ZeroDivisionError) as exc:
                raise ValueError(f"config key {sec}.{key}: {exc}") from exc
    if unknown:
        raise ValueError("unknown config keys: " + ", ".join(sorted(unknown)))
    return out


def _apply_env(cp: configparser.ConfigParser, environ=None) -> None:
    env = os.environ if environ is None else environ
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        body = name[len(ENV_PREFIX) :]
        if "__" not in body:
            raise ValueError(f"malformed override {name}: expected {ENV_PREFIX}SECTION__KEY")
        sec, key = (part.lower() for part in body.split("__", 1))
        if sec not in _SCHEMA or key not in _SCHEMA[sec]:
            raise ValueError(f"unknown config key in override {name}: {sec}.{key}")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, value)


def _build_plan(values: dict[str, dict[str, object]], kind: str | None) -> ExperimentPlan:
    g = values["grid"]
    grid_kw = {"dealias_fraction": float(g["dealias_fraction"])} if "dealias_fraction" in g else {}
    grid = GridSpec(
        int(g.get("nx", 16)),
        int(g.get("ny", 32)),
        int(g.get("nz", 16)),
        int(g.get("m", 1)),
        **grid_kw,
    )
    p = values["params"]
    missing = [f"params.{key}" for key in ("nu", "alpha") if key not in p]
    if missing:
        raise ValueError("required config keys missing: " + ", ".join(missing))
    params = PhysParams(
        nu=float(p["nu"]),
        alpha=float(p["alpha"]),
        sigma=p.get("sigma", RationalShearAngle(1, 1)),
        delta0=p.get("delta0"),
    )
    e = values["experiment"]
    return ExperimentPlan(
        kind=kind if kind is not None else str(e.get("kind", "simulate")),
        grid=grid,
        params=params,
        run=RunSettings(**values["run"]),
        out=str(e.get("out", "out")),
        jobs=int(e.get("jobs", 1)),
        seed=int(e.get("seed", 0)),
        nu_values=e.get("nu_values", ()),
        alpha_values=e.get("alpha_values", ()),
        epsilon_values=e.get("epsilon_values", ()),
        sigma_values=e.get("sigma_values", ()),
        multiplier=MultiplierScan(**values["multiplier"]),
        linear=LinearStudy(**values["linear"]),
        report=ReportSettings(**values["report"]),
    )


def parse_config(path, kind: str | None = None, environ=None) -> ExperimentPlan:
    """Read, override, validate; ``kind`` (from a CLI subcommand) wins
    over the file's experiment.kind."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    _apply_env(cp, environ)
    return _build_plan(_collect(cp), kind)


def parse_config_text(text: str, kind: str | None = None) -> ExperimentPlan:
    """parse_config for in-memory INI text (no environment pass)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_file(io.StringIO(text))
    return _build_plan(_collect(cp), kind)


# ---------------------------------------------------------------------------
# serialization

def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, RationalShearAngle):
        return f"{value.q}/{value.p}"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, complex):
        return repr(value)
    return str(value)


def serialize_plan(plan: ExperimentPlan) -> str:
    """INI snapshot; parse_config_text of the result equals the plan."""
    cp = configparser.ConfigParser()
    cp["grid"] = {
        "nx": str(plan.grid.nx),
        "ny": str(plan.grid.ny),
        "nz": str(plan.grid.nz),
        "m": str(plan.grid.m),
        "dealias_fraction": repr(plan.grid.dealias_fraction),
    }
    cp["params"] = {
        "nu": repr(plan.params.nu),
        "alpha": repr(plan.params.alpha),
        "sigma": _format(plan.params.sigma),
        "delta0": repr(plan.params.delta0),
    }
    for sec, obj in (
        ("run", plan.run),
        ("multiplier", plan.multiplier),
        ("linear", plan.linear),
        ("report", plan.report),
    ):
        cp[sec] = {
            f.name: _format(getattr(obj, f.name))
            for f in fields(obj)
            if getattr(obj, f.name) is not None
        }
    cp["experiment"] = {
        "kind": plan.kind,
        "out": plan.out,
        "jobs": str(plan.jobs),
        "seed": str(plan.seed),
        "nu_values": _format(plan.nu_values),
        "alpha_values": _format(plan.alpha_values),
        "epsilon_values": _format(plan.epsilon_values),
        "sigma_values": _format(plan.sigma_values),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# per-cell builders

def _default_delta0(alpha: float) -> float:
    return 1.0 / (100.0 * abs(alpha)) if alpha != 0.0 else 0.0


def cell_params(
    plan: ExperimentPlan,
    nu: float | None = None,
    alpha: float | None = None,
    sigma: RationalShearAngle | None = None,
) -> PhysParams:
    """Plan parameters with sweep-axis values substituted.  delta0
    follows its default when the plan's value is the default for the
    plan's alpha, so alpha sweeps rescale it as intended."""
    base = plan.params
    alpha_new = base.alpha if alpha is None else alpha
    explicit = base.delta0 != _default_delta0(base.alpha)
    return PhysParams(
        nu=base.nu if nu is None else nu,
        alpha=alpha_new,
        sigma=base.sigma if sigma is None else sigma,
        delta0=base.delta0 if explicit else None,
    )


def build_sim_config(
    plan: ExperimentPlan,
    nu: float | None = None,
    alpha: float | None = None,
    sigma: RationalShearAngle | None = None,
    epsilon: float | None = None,
) -> SimConfig:
    r = plan.run
    return SimConfig(
        grid=plan.grid,
        params=cell_params(plan, nu, alpha, sigma),
        dt=r.dt,
        t_final=r.t_final,
        epsilon=r.epsilon if epsilon is None else epsilon,
        seed=plan.seed,
        ic_kind=r.ic_kind,
        remap_policy=r.remap_policy,
        diagnostics_every=r.diagnostics_every,
        ic_band=r.ic_band,
        ic_mode=r.ic_mode,
        ic_amp_u=r.ic_amp_u,
        ic_amp_b=r.ic_amp_b,
        ic_path=r.ic_path,
        sobolev_n=r.sobolev_n,
        linear_only=r.linear_only,
        snapshot_stride=r.snapshot_stride,
    )
