"""Numerical checks of the structural hypotheses and variance-growth laws.

* Conditional variance of fractional Brownian motion given two past values,
  and the resulting bound on Gaussian conditional density peaks.
* Log-log fits of the system variance against the horizon.
* Monte Carlo check of the stable characteristic function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from occlab.dynamics import FBM, Brownian, EllipticDiffusion, Frozen, Stable
from occlab.functionals import SystemConfig, mecke_moment_estimators
from occlab.rng import RngLike, RngStream
from occlab.samplers import SamplerError, sample_stable_increments
from occlab.statistics import RateFit, loglog_rate_fit


def fbm_covariance(hurst: float, s, t):
    e = 2.0 * hurst
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    return 0.5 * (s**e + t**e - np.abs(t - s) ** e)


def fbm_conditional_variance(hurst: float, s1: float, s2: float, s3: float) -> float:
    """Var(B_s3 | B_s1, B_s2) for fractional Brownian motion.

    Conditioners at time 0, or so close to 0 that their variance underflows,
    are dropped (B_0 = 0) and equal times are merged.
    The Schur complement is taken directly; only if the conditioning block is
    numerically singular is it regularized by 1e-12 * trace.
    """
    if not (0.0 < hurst < 1.0):
        raise ValueError("Hurst index must lie in (0, 1)")
    if min(s1, s2) < 0 or max(s1, s2) >= s3:
        raise ValueError("need 0 <= s1, s2 < s3")
    cond = sorted({float(s) for s in (s1, s2) if s > 0 and float(fbm_covariance(hurst, s, s)) > 0})
    total = float(fbm_covariance(hurst, s3, s3))
    if not cond:
        return total
    c = np.array(cond)
    sig11 = fbm_covariance(hurst, c[:, None], c[None, :])
    sig12 = fbm_covariance(hurst, c, s3)
    try:
        chol = np.linalg.cholesky(sig11)
    except np.linalg.LinAlgError:
        reg = sig11 + 1e-12 * np.trace(sig11) * np.eye(len(c))
        try:
            chol = np.linalg.cholesky(reg)
        except np.linalg.LinAlgError as exc:
            raise SamplerError("conditioning covariance is singular") from exc
    w = np.linalg.solve(chol, sig12)
    v = total - float(w @ w)
    if v > total * (1.0 + 1e-12) or v <= 0:
        raise SamplerError(f"conditional variance {v} outside (0, {total}]")
    return v


@dataclass(frozen=True)
class HGrid:
    """Conditioning times ``s_values`` and gaps geometric in ``[delta_min, delta_max]``."""

    s_values: tuple = tuple(round(0.1 * k, 10) for k in range(0, 10))
    delta_min: float = 1e-3
    delta_max: float = 1.0
    per_decade: int = 8

    @property
    def deltas(self) -> np.ndarray:
        decades = math.log10(self.delta_max / self.delta_min)
        n = max(2, int(round(decades * self.per_decade)) + 1)
        return np.geomspace(self.delta_min, self.delta_max, n)

    def refined(self) -> "HGrid":
        """Twice as dense in both directions, gap range one decade wider at each end."""
        s = np.asarray(self.s_values)
        mids = 0.5 * (s[1:] + s[:-1])
        extra = [s[-1] + 0.5 * (s[-1] - s[-2])] if len(s) > 1 else []
        merged = tuple(sorted(set(np.round(np.concatenate([s, mids, extra]), 12))))
        return HGrid(merged, self.delta_min / 10.0, self.delta_max * 10.0, 2 * self.per_decade)

    def describe(self) -> str:
        return (
            f"s in {{{', '.join(f'{v:g}' for v in self.s_values)}}}, "
            f"gap geometric in [{self.delta_min:g}, {self.delta_max:g}] with {len(self.deltas)} points"
        )


def min_variance_ratio(hurst: float, grid: HGrid, beta: Optional[float] = None) -> float:
    """Minimum over the grid of Var(B_s3 | B_s1, B_s2) / gap**(2 beta)."""
    beta = hurst if beta is None else beta
    s = grid.s_values
    best = math.inf
    for i, s1 in enumerate(s):
        for s2 in s[i:]:
            for delta in grid.deltas:
                v = fbm_conditional_variance(hurst, s1, s2, s2 + delta)
                best = min(best, v / delta ** (2.0 * beta))
    return best


@dataclass(frozen=True)
class ConditionHReport:
    hurst: float
    md: int
    beta: float
    grid: str
    max_ratio: float
    fitted_kappa: float
    min_variance_ratio: float
    refined_max_ratio: float
    relative_change: float
    passed: bool

    @property
    def pass_(self) -> bool:
        return self.passed


def check_condition_H_fbm(
    hurst: float, md: int = 1, grid: Optional[HGrid] = None, beta: Optional[float] = None, tol: float = 0.01
) -> ConditionHReport:
    """Bound the conditional density peak (2 pi v)^(-md/2) by kappa * gap^(-beta md).

    The ratio peak * gap^(beta md) is maximized over the grid and over its
    refinement; the check passes when both maxima are finite and agree
    within ``tol``.
    """
    if not (0.0 < hurst < 1.0):
        raise ValueError("Hurst index must lie in (0, 1)")
    grid = grid or HGrid()
    beta = hurst if beta is None else float(beta)
    vmin = min_variance_ratio(hurst, grid, beta)
    vmin_ref = min_variance_ratio(hurst, grid.refined(), beta)
    peak = (2.0 * math.pi * vmin) ** (-0.5 * md)
    peak_ref = (2.0 * math.pi * vmin_ref) ** (-0.5 * md)
    change = abs(peak_ref / peak - 1.0)
    ok = math.isfinite(peak) and math.isfinite(peak_ref) and change <= tol
    return ConditionHReport(hurst, md, beta, grid.describe(), peak, peak, vmin, peak_ref, change, ok)


def theory_variance_exponent(config: SystemConfig) -> float:
    """Tabulated growth exponent of the variance in the horizon."""
    fam = config.dynamics.family
    d = config.dynamics.ambient_dim
    if isinstance(fam, Frozen):
        return 2.0
    if isinstance(fam, (Brownian, Stable, EllipticDiffusion)):
        alpha = fam.alpha if isinstance(fam, Stable) else 2.0
        if d < alpha:
            return 2.0 - d / alpha
        if d > alpha:
            return 1.0
        raise ValueError("critical case d == alpha grows logarithmically; no power law")
    if isinstance(fam, FBM):
        if d != 1:
            raise ValueError("the tabulated fBm exponent is for d = 1")
        return 2.0 - fam.hurst / 2.0
    raise ValueError(f"no tabulated variance exponent for {type(fam).__name__}")


@dataclass(frozen=True)
class ScalingReport:
    family: str
    d: int
    exponent_theory: float
    exponent_fitted: RateFit
    passed: bool
    points: list = field(default_factory=list)
    tolerance: float = 0.1


def variance_scaling_check(
    config: SystemConfig,
    r_list: Sequence[float],
    n_mc: int,
    rng: RngStream,
    dt_list: Optional[Sequence[float]] = None,
    tolerance: float = 0.1,
    theory: Optional[float] = None,
    workers: int = 1,
) -> ScalingReport:
    """Fit log sigma^2 against log r; pass when |slope - theory| <= tolerance."""
    r_list = [float(r) for r in r_list]
    if len(r_list) < 3 or r_list != sorted(r_list) or r_list[-1] / r_list[0] < 10:
        raise ValueError("need >= 3 ascending horizons spanning at least a decade")
    dts = [config.dt] * len(r_list) if dt_list is None else list(dt_list)
    points = []
    for i, (r, dt) in enumerate(zip(r_list, dts)):
        rep = mecke_moment_estimators(config.with_r(r, dt), n_mc, rng.substream(i), workers)
        points.append((r, rep.sigma2, rep.sigma2_se))
    return scaling_from_points(config, points, tolerance, theory)


def scaling_from_points(
    config: SystemConfig, points: Sequence, tolerance: float = 0.1, theory: Optional[float] = None
) -> ScalingReport:
    """Scaling verdict from precomputed ``(r, sigma2, sigma2_se)`` triples."""
    points = [tuple(float(v) for v in p) for p in points]
    fit = loglog_rate_fit(points)
    expo = theory_variance_exponent(config) if theory is None else float(theory)
    return ScalingReport(
        family=config.dynamics.family.name,
        d=config.dynamics.ambient_dim,
        exponent_theory=expo,
        exponent_fitted=fit,
        passed=abs(fit.slope - expo) <= tolerance,
        points=points,
        tolerance=tolerance,
    )


def stable_cf_check(alpha: float, t: float, theta_list, n_mc: int, rng: RngLike) -> float:
    """Largest gap between the empirical and exact characteristic function."""
    x = sample_stable_increments(alpha, t, n_mc, rng)
    worst = 0.0
    for theta in theta_list:
        emp = math.fsum(np.cos(theta * x)) / n_mc
        worst = max(worst, abs(emp - math.exp(-t * abs(theta) ** alpha)))
    return worst


def rate_exponent(config: SystemConfig) -> Optional[float]:
    """Power of r in the distance bound, or None when the bound is in sigma."""
    fam = config.dynamics.family
    d = config.dynamics.ambient_dim
    if isinstance(fam, (Brownian, Stable)):
        if d != 1:
            return None
        alpha = fam.alpha if isinstance(fam, Stable) else 2.0
        return -1.0 / (2.0 * alpha)
    if isinstance(fam, EllipticDiffusion):
        return -0.25
    if isinstance(fam, FBM):
        h = fam.hurst
        if d == 1:
            return -0.75 * h
        if d == 2:
            return -1.5 * h
        return -h * (2 * d - 1) / 2.0
    return None


@dataclass(frozen=True)
class RatePoint:
    r: float
    dw_hat: float
    dw_se: float
    bound: float
    sigma: float
    passed: bool


@dataclass(frozen=True)
class RateReport:
    """Distance-to-Gaussian decay across horizons.

    With a power law the constant is calibrated at the first horizon and each
    later distance must stay below ``C r**exponent (1 + 3 rel. SE)``.  Without
    one (Dyson) the product ``dw * sigma`` must stay within ``ratio_max``.
    """

    family: str
    exponent: Optional[float]
    constant: float
    points: list
    dw_fit: Optional[RateFit]
    slope_max: Optional[float]
    sigma_ratio: Optional[float]
    ratio_max: float
    passed: bool


def rate_check(
    config: SystemConfig,
    reports: Sequence,
    exponent: Optional[float] = None,
    slope_max: Optional[float] = None,
    ratio_max: float = 3.0,
) -> RateReport:
    """Check ``BoundReport`` objects (ascending r) against the predicted decay."""
    reports = sorted(reports, key=lambda b: b.r)
    if len(reports) < 2:
        raise ValueError("a rate check needs at least two horizons")
    expo = rate_exponent(config) if exponent is None else float(exponent)
    dw_fit = None
    if len(reports) >= 3 and all(b.dw_hat > 0 for b in reports):
        dw_fit = loglog_rate_fit([(b.r, b.dw_hat, b.dw_se) for b in reports])
    points, ok = [], True
    sigma_ratio, const = None, math.nan
    if expo is not None:
        first = reports[0]
        const = first.dw_hat * first.r ** (-expo)
        points.append(RatePoint(first.r, first.dw_hat, first.dw_se, first.dw_hat, first.moments.sigma, True))
        for b in reports[1:]:
            rel = b.dw_se / b.dw_hat if b.dw_hat > 0 else 0.0
            bound = const * b.r**expo * (1.0 + 3.0 * rel)
            good = b.dw_hat <= bound
            ok &= good
            points.append(RatePoint(b.r, b.dw_hat, b.dw_se, bound, b.moments.sigma, good))
    else:
        prod = [b.dw_hat * b.moments.sigma for b in reports]
        sigma_ratio = max(prod) / min(prod) if min(prod) > 0 else math.inf
        ok = sigma_ratio < ratio_max
        const = float(np.mean(prod))
        points = [RatePoint(b.r, b.dw_hat, b.dw_se, const / b.moments.sigma, b.moments.sigma, True) for b in reports]
    if slope_max is not None:
        ok &= dw_fit is not None and dw_fit.slope <= slope_max
    return RateReport(
        family=config.dynamics.family.name,
        exponent=expo,
        constant=const,
        points=points,
        dw_fit=dw_fit,
        slope_max=slope_max,
        sigma_ratio=sigma_ratio,
        ratio_max=ratio_max,
        passed=bool(ok),
    )
