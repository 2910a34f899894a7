"""Estimators: exact 1-D Wasserstein distance to N(0, 1), moments with
standard errors, log-log rate fits and the chi small-ball probability."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special
from scipy import stats as sps

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    """Standard normal CDF through the complementary error function."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("quantile needs p in (0, 1)")
    return special.ndtri(p)


def _G(x):
    """Antiderivative of the normal CDF: x * Phi(x) + phi(x)."""
    return x * std_normal_cdf(x) + std_normal_pdf(x)


def _int_cdf_minus(a, b, p):
    """Integral of Phi(x) - p over [a, b], accurate in both tails."""
    left = _G(b) - _G(a) - p * (b - a)
    right = (1.0 - p) * (b - a) - (_G(-a) - _G(-b))
    return np.where(a >= 0.0, right, left)


def wasserstein1_to_std_gaussian(sample) -> float:
    """Exact L1 distance between the empirical CDF of ``sample`` and Phi."""
    z = np.sort(np.asarray(sample, dtype=float).ravel())
    n = z.size
    if n == 0:
        raise ValueError("sample is empty")
    if not np.all(np.isfinite(z)):
        raise ValueError("sample has non-finite entries")
    total = float(_G(z[0])) + float(_G(-z[-1]))
    if n == 1:
        return total
    a, b = z[:-1], z[1:]
    p = np.arange(1, n) / n
    c = special.ndtri(p)
    below = c <= a
    above = c >= b
    mid = ~(below | above)
    pieces = np.empty(n - 1)
    pieces[below] = _int_cdf_minus(a[below], b[below], p[below])
    pieces[above] = -_int_cdf_minus(a[above], b[above], p[above])
    am, bm, cm, pm = a[mid], b[mid], c[mid], p[mid]
    pieces[mid] = -_int_cdf_minus(am, cm, pm) + _int_cdf_minus(cm, bm, pm)
    return total + math.fsum(pieces)


def wasserstein_bootstrap_se(sample, rng, n_boot: int = 200) -> float:
    """Bootstrap standard error of :func:`wasserstein1_to_std_gaussian`."""
    from occlab.rng import as_generator

    x = np.asarray(sample, dtype=float).ravel()
    gen = as_generator(rng)
    vals = [wasserstein1_to_std_gaussian(x[gen.integers(0, x.size, x.size)]) for _ in range(n_boot)]
    return float(np.std(vals, ddof=1))


def moments_with_se(sample, k: int):
    """Plug-in raw moment ``mean(x**k)`` and its jackknife standard error."""
    if k not in (1, 2, 3, 4):
        raise ValueError("k must be 1..4")
    x = np.asarray(sample, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least two observations")
    xk = x**k
    total = math.fsum(xk)
    loo = (total - xk) / (n - 1)
    est = total / n
    se = math.sqrt((n - 1) / n * math.fsum((loo - loo.mean()) ** 2))
    return est, se


def _standardized(s1, s2, s3, s4, n):
    mean = s1 / n
    var = s2 / n - mean**2
    m3 = s3 / n - 3 * mean * s2 / n + 2 * mean**3
    m4 = s4 / n - 4 * mean * s3 / n + 6 * mean**2 * s2 / n - 3 * mean**4
    with np.errstate(divide="ignore", invalid="ignore"):
        return mean, var, m3 / var**1.5, m4 / var**2


def standardized_moments(sample) -> dict:
    """Mean, variance, skewness and kurtosis, each with a jackknife SE."""
    x = np.asarray(sample, dtype=float).ravel()
    n = x.size
    if n < 3:
        raise ValueError("need at least three observations")
    c = x - x.mean()
    powers = [c**j for j in range(1, 5)]
    sums = [math.fsum(p) for p in powers]
    full = _standardized(*sums, n)
    loo = _standardized(*[s - p for s, p in zip(sums, powers)], n - 1)
    out = {}
    for name, est, reps in zip(("mean", "variance", "skewness", "kurtosis"), full, loo):
        se = math.sqrt((n - 1) / n * float(np.sum((reps - reps.mean()) ** 2)))
        value = float(est) + (float(x.mean()) if name == "mean" else 0.0)
        out[name] = (value, se)
    return out


def sample_variance_with_se(sample):
    """Unbiased sample variance and its large-sample SE sqrt((mu4 - s^4) / n)."""
    x = np.asarray(sample, dtype=float).ravel()
    n = x.size
    c = x - x.mean()
    var = float(np.dot(c, c) / (n - 1))
    mu4 = float(np.mean(c**4))
    return var, math.sqrt(max(mu4 - var**2, 0.0) / n)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_ci_halfwidth: float

    def predict(self, r):
        return math.exp(self.intercept) * np.asarray(r, dtype=float) ** self.slope


def loglog_rate_fit(pairs: Sequence) -> RateFit:
    """Weighted least squares of log(value) on log(r).

    ``pairs`` holds ``(r, value)`` or ``(r, value, se)``.  Weights are the
    inverse delta-method variances ``(value / se)**2``; missing or zero SEs give
    equal weights.  The 95% slope interval is the larger of the Student-t
    residual interval and the interval implied by the stated SEs.
    """
    rows = [tuple(p) for p in pairs]
    if len(rows) < 3:
        raise ValueError("a rate fit needs at least three points")
    r = np.array([row[0] for row in rows], dtype=float)
    v = np.array([row[1] for row in rows], dtype=float)
    if np.any(r <= 0) or np.any(v <= 0):
        raise ValueError("log-log fit needs positive r and values")
    se = np.array([row[2] if len(row) > 2 else 0.0 for row in rows], dtype=float)
    have_se = bool(np.all(se > 0))
    w = (v / se) ** 2 if have_se else np.ones_like(v)
    x, y = np.log(r), np.log(v)
    xb = np.sum(w * x) / np.sum(w)
    yb = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xb) ** 2)
    if sxx <= 0:
        raise ValueError("rate fit needs at least two distinct r values")
    slope = float(np.sum(w * (x - xb) * (y - yb)) / sxx)
    intercept = float(yb - slope * xb)
    resid = y - intercept - slope * x
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - yb) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, ss_res) else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    dof = len(r) - 2
    half = float(sps.t.ppf(0.975, dof)) * math.sqrt(ss_res / dof / sxx) if dof > 0 else math.inf
    if have_se:
        half = max(half, 1.959963984540054 * math.sqrt(1.0 / sxx))
    return RateFit(slope, intercept, r2, half)


def chi_smallball_cdf(D: int, y):
    """P[chi_D <= y], the regularized lower incomplete gamma at (D/2, y^2/2)."""
    if int(D) != D or D < 1:
        raise ValueError("D must be a positive integer")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("y must be nonnegative")
    out = special.gammainc(0.5 * D, 0.5 * y * y)
    return float(out) if out.ndim == 0 else out


def smallball_constant(D: int, y, exponent: Optional[float] = None) -> float:
    """Smallest C with chi_smallball_cdf(D, y) <= C * y**exponent on the given grid.

    The default exponent is D/2; the sharp small-y exponent is D.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("y grid must be positive")
    e = 0.5 * D if exponent is None else float(exponent)
    return float(np.max(chi_smallball_cdf(D, y) / y**e))
