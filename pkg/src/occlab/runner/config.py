"""Scenario files.

A scenario is a TOML file with the sections ``[dynamics]``, ``[psi]``,
``[nu]`` and ``[run]``, plus optional ``[checks]`` and ``[condition_h]``.
Validation collects every problem before raising, so one run of the loader
reports all offending fields.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from occlab.dynamics import (
    FBM,
    Brownian,
    Dyson,
    DynamicsSpec,
    EllipticDiffusion,
    Frozen,
    SineSquaredCoefficient,
    Stable,
)
from occlab.functionals import SystemConfig, TestFunction
from occlab.samplers import Box, ConstantDensity, IntensityMeasure, SineSquaredDensity

TASKS = ("bounds", "rates", "scaling", "audit", "condition_h")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario: " + "; ".join(self.problems))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    dynamics: DynamicsSpec
    psi: TestFunction
    nu: IntensityMeasure
    window_policy: str
    k_safety: float
    r_list: tuple
    dt_list: tuple
    n_reps: int
    n_mc: int
    master_seed: int
    output_dir: str
    tasks: tuple = ("bounds",)
    n_boot: int = 200
    checks: dict = field(default_factory=dict)
    condition_h: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def system(self, i: int) -> SystemConfig:
        """System configuration at the ``i``-th horizon."""
        return SystemConfig(
            self.nu, self.dynamics, self.psi, self.r_list[i], self.dt_list[i], self.k_safety, self.window_policy
        )

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        raw = json.loads(json.dumps(self.raw))
        raw.setdefault("run", {})["master_seed"] = int(seed)
        return parse_config(raw, self.name)


def _num(table, key, problems, where, default=None, kind=float, positive=False, required=False):
    if key not in table:
        if required:
            problems.append(f"{where}.{key}: missing")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{where}.{key}: expected a number, got {value!r}")
        return default
    if kind is int and int(value) != value:
        problems.append(f"{where}.{key}: expected an integer, got {value!r}")
        return default
    if not math.isfinite(value) or (positive and value <= 0):
        problems.append(f"{where}.{key}: must be {'positive' if positive else 'finite'}, got {value!r}")
        return default
    return kind(value)


def _vec(table, key, problems, where, required=True):
    if key not in table:
        if required:
            problems.append(f"{where}.{key}: missing")
        return None
    value = table[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        problems.append(f"{where}.{key}: expected a nonempty list of numbers")
        return None
    return [float(v) for v in value]


def _dynamics(t: dict, problems: list) -> Optional[DynamicsSpec]:
    fam_name = t.get("family")
    dim = _num(t, "dim", problems, "dynamics", kind=int, positive=True)
    ambient = _num(t, "ambient_dim", problems, "dynamics", 1, kind=int, positive=True)
    blocks = _num(t, "block_count", problems, "dynamics", None, kind=int, positive=True)
    weights = _vec(t, "weights", problems, "dynamics", required=False)
    fam = None
    try:
        if fam_name == "frozen":
            fam = Frozen()
        elif fam_name == "brownian":
            fam = Brownian()
        elif fam_name == "stable":
            alpha = _num(t, "alpha", problems, "dynamics", required=True)
            fam = Stable(alpha) if alpha is not None else None
        elif fam_name == "fbm":
            hurst = _num(t, "hurst", problems, "dynamics", required=True)
            fam = FBM(hurst, t.get("method", "auto")) if hurst is not None else None
        elif fam_name == "diffusion":
            c = t.get("coefficient", {})
            coef = SineSquaredCoefficient(
                _num(c, "base", problems, "dynamics.coefficient", 1.0, positive=True) or 1.0,
                _num(c, "amp", problems, "dynamics.coefficient", 0.5) or 0.0,
                _num(c, "freq", problems, "dynamics.coefficient", 1.0) or 1.0,
            )
            fam = EllipticDiffusion(coef, eta=_num(t, "eta", problems, "dynamics", None, positive=True))
        elif fam_name == "dyson":
            if dim is None:
                problems.append("dynamics.dim: required for the dyson family")
            else:
                fam = Dyson(dim)
        else:
            problems.append(f"dynamics.family: unknown family {fam_name!r}")
    except ValueError as exc:
        problems.append(f"dynamics: {exc}")
    if fam is None:
        return None
    if isinstance(fam, Dyson):
        blocks = fam.dim if blocks is None else blocks
    blocks = blocks or (len(weights) if weights else 1)
    weights = weights or [1.0] * blocks
    try:
        return DynamicsSpec(fam, ambient, blocks, tuple(weights))
    except ValueError as exc:
        problems.append(f"dynamics: {exc}")
        return None


def _psi(t: dict, problems: list) -> Optional[TestFunction]:
    lower = _vec(t, "lower", problems, "psi")
    upper = _vec(t, "upper", problems, "psi")
    amp = _num(t, "amplitude", problems, "psi", 1.0)
    if lower is None or upper is None:
        return None
    try:
        return TestFunction(t.get("kind", "indicator"), tuple(lower), tuple(upper), amp)
    except ValueError as exc:
        problems.append(f"psi: {exc}")
        return None


def _nu(t: dict, dim: int, psi: Optional[TestFunction], policy: str, problems: list):
    kind = t.get("density", "constant")
    if kind == "constant":
        value = _num(t, "value", problems, "nu", 1.0, positive=True)
        density, lo_hi = ConstantDensity(value or 1.0), (value or 1.0, value or 1.0)
    elif kind == "sine_squared":
        base = _num(t, "base", problems, "nu", 1.0, positive=True) or 1.0
        amp = _num(t, "amp", problems, "nu", 0.5) or 0.0
        freq = _num(t, "freq", problems, "nu", math.pi) or math.pi
        if amp < 0:
            problems.append("nu.amp: must be nonnegative")
        density, lo_hi = SineSquaredDensity(base, amp, freq), (base, base + max(amp, 0.0))
    else:
        problems.append(f"nu.density: unknown density {kind!r}")
        return None
    if policy == "fixed":
        lower = _vec(t, "lower", problems, "nu")
        upper = _vec(t, "upper", problems, "nu")
        if lower is None or upper is None:
            return None
        if len(lower) != dim or len(upper) != dim:
            problems.append(f"nu.lower/nu.upper: need {dim} coordinates")
            return None
        window = Box(lower, upper)
    else:
        if psi is None:
            return None
        window = psi.support
    if window.volume <= 0:
        problems.append("nu: window has zero volume")
        return None
    try:
        return IntensityMeasure(density, lo_hi[0], lo_hi[1], window)
    except ValueError as exc:
        problems.append(f"nu: {exc}")
        return None


def _dt_list(run: dict, r_list, problems):
    has_dt, has_steps = "dt" in run, "steps" in run
    if has_dt == has_steps:
        problems.append("run.dt / run.steps: give exactly one of them")
        return None
    if has_dt:
        dt = run["dt"]
        dts = dt if isinstance(dt, list) else [dt] * len(r_list)
        if len(dts) != len(r_list):
            problems.append("run.dt: list length must match run.r_list")
            return None
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in dts):
            problems.append("run.dt: step sizes must be positive numbers")
            return None
        return [float(v) for v in dts]
    steps = _num(run, "steps", problems, "run", kind=int, positive=True)
    dt_min = _num(run, "dt_min", problems, "run", 0.0)
    if steps is None:
        return None
    return [max(r / steps, dt_min or 0.0) for r in r_list]


def parse_config(raw: dict, name: str = "scenario") -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from a parsed TOML document."""
    problems = []
    for section in ("dynamics", "psi", "nu", "run"):
        if not isinstance(raw.get(section), dict):
            problems.append(f"[{section}]: missing section")
    if problems:
        raise ConfigError(problems)
    run, nu_t = raw["run"], raw["nu"]
    dynamics = _dynamics(raw["dynamics"], problems)
    psi = _psi(raw["psi"], problems)
    policy = nu_t.get("window_policy", "inflate")
    if policy not in ("inflate", "fixed"):
        problems.append(f"nu.window_policy: expected 'inflate' or 'fixed', got {policy!r}")
    start_dim = dynamics.start_dim if dynamics else 1
    nu = _nu(nu_t, start_dim, psi, policy, problems)
    k_safety = _num(nu_t, "k_safety", problems, "nu", 6.0)
    if k_safety is not None and k_safety < 0:
        problems.append("nu.k_safety: must be nonnegative")
    r_list = _vec(run, "r_list", problems, "run")
    if r_list is not None:
        if any(r <= 0 for r in r_list):
            problems.append("run.r_list: horizons must be positive")
        if r_list != sorted(r_list) or len(set(r_list)) != len(r_list):
            problems.append("run.r_list: must be strictly ascending")
    dts = _dt_list(run, r_list, problems) if r_list is not None else None
    n_reps = _num(run, "n_reps", problems, "run", kind=int, positive=True, required=True)
    n_mc = _num(run, "n_mc", problems, "run", kind=int, positive=True, required=True)
    if n_mc is not None and n_mc < 100:
        problems.append("run.n_mc: must be at least 100")
    seed = _num(run, "master_seed", problems, "run", kind=int, required=True)
    if seed is not None and not (0 <= seed < 2**64):
        problems.append("run.master_seed: must be an unsigned 64-bit integer")
    n_boot = _num(run, "n_boot", problems, "run", 200, kind=int, positive=True)
    tasks = run.get("tasks", ["bounds"])
    if not isinstance(tasks, list) or any(t not in TASKS for t in tasks):
        problems.append(f"run.tasks: each task must be one of {', '.join(TASKS)}")
    checks = raw.get("checks", {})
    cond_h = raw.get("condition_h", {})
    if "condition_h" in (tasks or []) and not cond_h.get("hurst"):
        problems.append("condition_h.hurst: required when the condition_h task is enabled")
    if dynamics is not None and psi is not None and psi.dim != dynamics.ambient_dim:
        problems.append("psi.lower/psi.upper: dimension must equal dynamics.ambient_dim")
    if dynamics is not None and dynamics.is_dyson and policy != "fixed":
        problems.append("nu.window_policy: the dyson family needs a fixed spectral window")
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(
        name=str(raw.get("name", name)),
        dynamics=dynamics,
        psi=psi,
        nu=nu,
        window_policy=policy,
        k_safety=k_safety,
        r_list=tuple(r_list),
        dt_list=tuple(dts),
        n_reps=n_reps,
        n_mc=n_mc,
        master_seed=seed,
        output_dir=str(run.get("output_dir", "out")),
        tasks=tuple(tasks),
        n_boot=n_boot,
        checks=dict(checks),
        condition_h=dict(cond_h),
        raw=raw,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return parse_config(raw, path.stem)
