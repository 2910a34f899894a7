"""Scenario orchestration: config in, report bundle out."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from occlab import __version__
from occlab.dynamics import collision_census
from occlab.functionals import bound_report, mecke_moment_estimators, sample_Z
from occlab.rng import RngStream
from occlab.runner.audit import convergence_audit
from occlab.runner.config import ScenarioConfig
from occlab.runner.report import ReportBundle, write_bundle
from occlab.samplers import TimeGrid
from occlab.statistics import wasserstein1_to_std_gaussian
from occlab.theory import check_condition_H_fbm, rate_check, scaling_from_points

log = logging.getLogger(__name__)

# Top-level stream labels, one per task.
BOUNDS, SCALING, AUDIT, COLLISIONS, SIMULATE = 10, 20, 30, 40, 50


def _opt(checks: dict, key: str, default=None):
    value = checks.get(key, default)
    return None if value is None else float(value)


def _collisions(cfg: ScenarioConfig, root: RngStream) -> dict:
    n = int(cfg.checks["collision_trajectories"])
    r = float(cfg.checks.get("collision_r", cfg.r_list[0]))
    dt = float(cfg.checks.get("collision_dt", cfg.dt_list[0]))
    stream = root.substream(COLLISIONS)
    starts = cfg.nu.sample_points(stream.generator(), n)
    count, gap = collision_census(cfg.dynamics, starts, TimeGrid(r, dt), stream.substream(1))
    return {"trajectories": n, "r": r, "dt": dt, "collisions": count, "min_gap": gap, "passed": count == 0}


def run_scenario(
    cfg: ScenarioConfig, workers: int = 1, out_dir=None, tasks: Optional[tuple] = None
) -> ReportBundle:
    """Run the requested tasks (default: those in the config) and write the bundle.

    Runtime errors stop the run; what was finished so far is still written,
    with ``partial`` set and the error recorded.
    """
    tasks = tuple(cfg.tasks if tasks is None else tasks)
    root = RngStream(cfg.master_seed)
    bundle = ReportBundle(
        name=cfg.name,
        config_hash=cfg.config_hash,
        seed=cfg.master_seed,
        version=__version__,
        r_list=list(cfg.r_list),
        dt_list=list(cfg.dt_list),
    )
    try:
        if "bounds" in tasks or "rates" in tasks:
            for i, r in enumerate(cfg.r_list):
                log.info("%s: bounds at r=%g", cfg.name, r)
                rep = bound_report(
                    cfg.system(i), cfg.n_reps, cfg.n_mc, root.substream(BOUNDS, i), workers, cfg.n_boot
                )
                bundle.bounds[r] = rep
                bundle.moments[r] = rep.moments
        if "rates" in tasks:
            bundle.rates = rate_check(
                cfg.system(0),
                list(bundle.bounds.values()),
                exponent=_opt(cfg.checks, "rate_exponent"),
                slope_max=_opt(cfg.checks, "dw_slope_max"),
                ratio_max=_opt(cfg.checks, "ratio_max", 3.0),
            )
            if cfg.dynamics.is_dyson and "collision_trajectories" in cfg.checks:
                bundle.collisions = _collisions(cfg, root)
        if "scaling" in tasks:
            for i, r in enumerate(cfg.r_list):
                if r not in bundle.moments:
                    log.info("%s: moments at r=%g", cfg.name, r)
                    bundle.moments[r] = mecke_moment_estimators(
                        cfg.system(i), cfg.n_mc, root.substream(SCALING, i), workers
                    )
            points = [(r, bundle.moments[r].sigma2, bundle.moments[r].sigma2_se) for r in cfg.r_list]
            bundle.scaling = scaling_from_points(
                cfg.system(0),
                points,
                tolerance=_opt(cfg.checks, "scaling_tolerance", 0.1),
                theory=_opt(cfg.checks, "scaling_exponent"),
            )
        if "audit" in tasks:
            n_mc = int(cfg.checks.get("audit_n_mc", cfg.n_mc))
            for i, r in enumerate(cfg.r_list):
                log.info("%s: audit at r=%g", cfg.name, r)
                bundle.audits[r] = convergence_audit(cfg.system(i), n_mc, root.substream(AUDIT, i), workers)
        if "condition_h" in tasks:
            ch = cfg.condition_h
            hursts = ch["hurst"] if isinstance(ch["hurst"], list) else [ch["hurst"]]
            for h in hursts:
                bundle.condition_h.append(
                    check_condition_H_fbm(float(h), int(ch.get("md", 1)), beta=_opt(ch, "beta"), tol=_opt(ch, "tol", 0.01))
                )
    except Exception as exc:  # the bundle records the failure instead of losing earlier results
        log.error("%s aborted: %s", cfg.name, exc)
        bundle.partial = True
        bundle.error = f"{type(exc).__name__}: {exc}"
    if out_dir is not None:
        write_bundle(bundle, out_dir)
    return bundle


def simulate_scenario(cfg: ScenarioConfig, workers: int = 1, out_dir=None) -> dict:
    """Normalized draws and their distance to N(0, 1) at every horizon.

    Writes ``<name>_z.csv`` (one column per horizon) when ``out_dir`` is set.
    """
    root = RngStream(cfg.master_seed)
    samples, result = {}, {}
    for i, r in enumerate(cfg.r_list):
        z = sample_Z(cfg.system(i), cfg.n_reps, root.substream(SIMULATE, i), n_mc=cfg.n_mc, workers=workers)
        samples[r] = z
        result[r] = wasserstein1_to_std_gaussian(z)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = np.column_stack([samples[r] for r in cfg.r_list])
        header = ",".join(f"z_r{r:g}" for r in cfg.r_list)
        np.savetxt(out / f"{cfg.name}_z.csv", cols, fmt="%.17g", delimiter=",", header=header, comments="", newline="\r\n")
    return result

