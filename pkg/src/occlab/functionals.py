"""Occupation-type functionals of Poisson particle systems.

The per-particle functional is the time integral of the weighted test
function along the particle's blocks.  The system functional sums it over a
Poisson configuration.  Its moments are estimated from single particles drawn
from the normalized intensity (Mecke identities), which is far cheaper and
less noisy than sampling whole systems.

Internally all functionals are computed for the test function with unit
amplitude and rescaled on output, so normalized samples do not depend on the
amplitude at all.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Optional

import numpy as np
from scipy import integrate

from occlab import kernels
from occlab.dynamics import FBM, DynamicsSpec, EllipticDiffusion, ParticleTrajectory, simulate_particle
from occlab.parallel import indexed_map
from occlab.rng import RngStream
from occlab.samplers import (
    Box,
    ConvergenceError,
    EllipticityError,
    IntensityMeasure,
    TimeGrid,
    fbm_increments,
    sample_poisson_process,
)
from occlab import _fallback
from occlab import statistics as st

# stream labels
MECKE, REPS, BOOT = 1, 2, 3
MC_CHUNK = 4096
REP_BLOCK = 64

_BUMP_1D = integrate.quad(lambda y: math.exp(1.0 - 1.0 / (1.0 - y * y)), -1.0, 1.0, epsabs=1e-14)[0]


class DegenerateError(ValueError):
    """The estimated variance is zero within Monte Carlo noise."""


@dataclass(frozen=True)
class TestFunction:
    """Indicator of a closed box, or a product bump supported on the box."""

    __test__ = False

    kind: str
    lower: tuple
    upper: tuple
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("indicator", "bump"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        box = Box(self.lower, self.upper)
        if box.volume <= 0:
            raise ValueError("test function support must have positive volume")
        object.__setattr__(self, "lower", box.lower)
        object.__setattr__(self, "upper", box.upper)
        object.__setattr__(self, "amplitude", float(self.amplitude))

    @property
    def code(self) -> int:
        return 0 if self.kind == "indicator" else 1

    @property
    def support(self) -> Box:
        return Box(self.lower, self.upper)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    @property
    def nonnegative(self) -> bool:
        return self.amplitude >= 0

    @property
    def integral(self) -> float:
        widths = self.support.widths
        if self.kind == "indicator":
            return self.amplitude * float(np.prod(widths))
        return self.amplitude * float(np.prod(0.5 * widths * _BUMP_1D))

    def unit(self, x):
        """Values of the unit-amplitude shape at points of shape ``(..., d)``."""
        return _fallback.psi_values(x, self.code, self.lower, self.upper, 1.0)

    def __call__(self, x):
        return self.amplitude * self.unit(x)

    def scaled(self, c: float) -> "TestFunction":
        return replace(self, amplitude=self.amplitude * c)


@dataclass(frozen=True)
class SystemConfig:
    """Everything needed to sample the system functional at horizon ``r``.

    With ``window_policy="inflate"`` particles live on the support of the
    test function inflated by ``k_safety * dynamics.scale(r)``; with
    ``"fixed"`` the window of ``nu`` is used unchanged.
    """

    nu: IntensityMeasure
    dynamics: DynamicsSpec
    psi: TestFunction
    r: float
    dt: float
    k_safety: float = 6.0
    window_policy: str = "inflate"

    def __post_init__(self):
        if self.window_policy not in ("inflate", "fixed"):
            raise ValueError(f"unknown window policy {self.window_policy!r}")
        if not (self.r > 0 and self.dt > 0 and self.k_safety >= 0):
            raise ValueError("r and dt must be positive and k_safety nonnegative")
        if self.nu.dim != self.dynamics.start_dim:
            raise ValueError("intensity dimension does not match the start-point dimension")
        if self.psi.dim != self.dynamics.ambient_dim:
            raise ValueError("test function dimension does not match the dynamics")
        if self.dynamics.is_dyson and self.window_policy != "fixed":
            raise ValueError("Dyson spectra need an explicit (fixed) spectral window")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.r, self.dt)

    @property
    def window(self) -> Box:
        if self.window_policy == "fixed":
            return self.nu.window
        return self.psi.support.inflate(self.k_safety * self.dynamics.scale(self.r))

    @property
    def sampling_measure(self) -> IntensityMeasure:
        return self.nu if self.window_policy == "fixed" else self.nu.with_window(self.window)

    @property
    def u_bound(self) -> float:
        """Deterministic bound on the unit-amplitude functional."""
        return self.r * math.fsum(self.dynamics.weights)

    def with_r(self, r: float, dt: Optional[float] = None) -> "SystemConfig":
        return replace(self, r=float(r), dt=self.dt if dt is None else float(dt))


@dataclass(frozen=True)
class FunctionalSample:
    a_value: float
    starts: np.ndarray
    u: np.ndarray
    r: float

    @property
    def contributions(self) -> list:
        return list(zip(self.starts, self.u))


def particle_functional_u(traj: ParticleTrajectory, psi: TestFunction, weights, grid: TimeGrid) -> float:
    """Trapezoid rule for the weighted occupation integral of one trajectory."""
    w = np.asarray(weights, dtype=float)
    f = np.tensordot(w, psi(traj.blocks), axes=([0], [0]))
    return float(_fallback.trapezoid(f, grid.h))


def _fbm_unit_u(config: SystemConfig, starts: np.ndarray, gen: np.random.Generator, coarse=None) -> np.ndarray:
    spec, grid, psi = config.dynamics, config.grid, config.psi
    m, d, n = spec.block_count, spec.ambient_dim, grid.n_steps
    w = np.asarray(spec.weights)
    out = np.empty(len(starts))
    chunk = max(1, (1 << 21) // (m * d * (n + 1)))
    for lo in range(0, len(starts), chunk):
        s = starts[lo : lo + chunk]
        inc = fbm_increments(spec.family.hurst, n, grid.h, len(s) * m * d, gen, spec.family.method)
        pos = np.empty((len(s), m, d, n + 1))
        pos[..., 0] = s[:, None, :]
        pos[..., 1:] = s[:, None, :, None] + np.cumsum(inc.reshape(len(s), m, d, n), axis=-1)
        f = np.tensordot(w, psi.unit(np.moveaxis(pos, 2, -1)), axes=([0], [1]))
        out[lo : lo + chunk] = _fallback.trapezoid(f, grid.h)
        if coarse is not None:
            coarse[lo : lo + chunk] = _fallback.trapezoid(f[..., ::2], 2.0 * grid.h)
    return out


def simulate_unit_u(config: SystemConfig, starts, gen: np.random.Generator, coarse=None) -> np.ndarray:
    """Unit-amplitude functional for each start point, drawing from ``gen``.

    ``coarse``, if given, is filled with the functional of the same paths
    integrated on every other grid point (the grid has an even step count).
    """
    spec, psi, grid = config.dynamics, config.psi, config.grid
    starts = np.ascontiguousarray(np.asarray(starts, dtype=float).reshape(-1, spec.start_dim))
    if len(starts) == 0:
        return np.zeros(0)
    if spec.is_dyson:
        starts = np.sort(starts, axis=1)
        u, _, status = kernels.dyson_occupation(
            starts, spec.weights, psi.code, psi.lower[0], psi.upper[0], 1.0, grid.n_steps, grid.h, gen, coarse
        )
        if status:
            raise ConvergenceError("Jacobi iteration did not converge within 50 sweeps")
    elif spec.kernel_params() is not None:
        code, params = spec.kernel_params()
        u, status = kernels.occupation(
            code, params, starts, spec.weights, psi.code, psi.lower, psi.upper, 1.0, grid.n_steps, grid.h, gen, coarse
        )
        if status:
            raise EllipticityError("diffusion coefficient left the ellipticity band")
    elif isinstance(spec.family, FBM):
        u = _fbm_unit_u(config, starts, gen, coarse)
    elif isinstance(spec.family, EllipticDiffusion):
        unit = replace(psi, amplitude=1.0)
        w = np.asarray(spec.weights)
        u = np.empty(len(starts))
        for i, x in enumerate(starts):
            f = np.tensordot(w, unit(simulate_particle(spec, x, grid, gen).blocks), axes=([0], [0]))
            u[i] = _fallback.trapezoid(f, grid.h)
            if coarse is not None:
                coarse[i] = _fallback.trapezoid(f[::2], 2.0 * grid.h)
    else:
        raise TypeError(f"unsupported dynamics {spec.family!r}")
    bound = config.u_bound * (1.0 + 1e-12)
    if np.any(np.abs(u) > bound):
        raise AssertionError("occupation functional exceeds r * sum(weights)")
    return u


def simulate_u(config: SystemConfig, starts, gen: np.random.Generator) -> np.ndarray:
    return config.psi.amplitude * simulate_unit_u(config, starts, gen)


def _sample_system(config: SystemConfig, stream: RngStream, unit: bool = True):
    gen = stream.generator()
    pts = sample_poisson_process(config.sampling_measure, gen).points
    u = simulate_unit_u(config, pts, gen)
    return pts, (u if unit else config.psi.amplitude * u)


def system_functional_A(config: SystemConfig, rng: RngStream) -> FunctionalSample:
    """One realization of the system functional and its per-particle parts."""
    pts, u = _sample_system(config, rng, unit=False)
    return FunctionalSample(math.fsum(u), pts, u, config.r)


def _rep_block(config: SystemConfig, rng: RngStream, n_reps: int, block: int) -> np.ndarray:
    lo = block * REP_BLOCK
    return np.array(
        [math.fsum(_sample_system(config, rng.substream(REPS, i))[1]) for i in range(lo, min(n_reps, lo + REP_BLOCK))]
    )


def sample_unit_A(config: SystemConfig, n_reps: int, rng: RngStream, workers: int = 1) -> np.ndarray:
    """``n_reps`` system functionals (unit amplitude), each on its own stream."""
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    if not isinstance(rng, RngStream):
        raise TypeError("replications need an RngStream so each gets a distinct stream index")
    blocks = range((n_reps + REP_BLOCK - 1) // REP_BLOCK)
    parts = indexed_map(partial(_rep_block, config, rng, n_reps), blocks, workers)
    return np.concatenate(parts)


def sample_A(config: SystemConfig, n_reps: int, rng: RngStream, workers: int = 1) -> np.ndarray:
    return config.psi.amplitude * sample_unit_A(config, n_reps, rng, workers)


@dataclass(frozen=True)
class MomentReport:
    """Mecke estimates; every value carries a delta-method standard error."""

    sigma2: float
    sigma2_se: float
    m3: float
    m3_se: float
    m4: float
    m4_se: float
    n_mc: int
    mean_a: float = 0.0
    mean_a_se: float = 0.0
    rhs_mecke: float = 0.0
    rhs_mecke_se: float = 0.0
    rhs_zeta: float = 0.0
    rhs_zeta_se: float = 0.0
    mass: float = 0.0

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def _mc_chunk(config: SystemConfig, rng: RngStream, n_mc: int, chunk: int) -> np.ndarray:
    size = min(MC_CHUNK, n_mc - chunk * MC_CHUNK)
    gen = rng.substream(MECKE, chunk).generator()
    x = config.sampling_measure.sample_points(gen, size)
    return simulate_unit_u(config, x, gen)


def mecke_unit_draws(config: SystemConfig, n_mc: int, rng: RngStream, workers: int = 1) -> np.ndarray:
    """Unit-amplitude functionals of ``n_mc`` particles started from the normalized intensity."""
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    chunks = range((n_mc + MC_CHUNK - 1) // MC_CHUNK)
    return np.concatenate(indexed_map(partial(_mc_chunk, config, rng, n_mc), chunks, workers))


def _coupled_chunk(config: SystemConfig, rng: RngStream, n_mc: int, chunk: int):
    size = min(MC_CHUNK, n_mc - chunk * MC_CHUNK)
    gen = rng.substream(MECKE, chunk).generator()
    x = config.sampling_measure.sample_points(gen, size)
    coarse = np.empty(size)
    fine = simulate_unit_u(config, x, gen, coarse)
    return fine, coarse


def coupled_refinement_draws(config: SystemConfig, n_mc: int, rng: RngStream, workers: int = 1):
    """Unit functionals on the grid with half the step and on the original grid, same paths.

    Returns ``(fine, coarse)``; the coarse values integrate the even-indexed
    points of the fine paths, so their difference is pure discretization error.
    """
    fine_cfg = replace(config, dt=config.grid.h / 2.0)
    chunks = range((n_mc + MC_CHUNK - 1) // MC_CHUNK)
    parts = indexed_map(partial(_coupled_chunk, fine_cfg, rng, n_mc), chunks, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def moments_from_draws(u, mass: float) -> MomentReport:
    """Assemble the Mecke estimators from single-particle draws ``u``."""
    u = np.asarray(u, dtype=float)
    n = u.size
    ys = np.stack([u, u**2, u**3, np.abs(u) ** 3, u**4])
    mu = np.array([math.fsum(row) / n for row in ys])
    cov = np.cov(ys) / n if n > 1 else np.zeros((5, 5))
    m1, m2, m3r, a3, m4r = (float(v) for v in mu)
    M = float(mass)

    def se(grad):
        g = np.asarray(grad, dtype=float)
        return math.sqrt(max(float(g @ cov @ g), 0.0))

    sigma2 = M * m2
    sigma2_se = se([0, M, 0, 0, 0])
    if not (sigma2 > 0) or sigma2 < 2.0 * sigma2_se:
        raise DegenerateError(f"variance estimate {sigma2:.3g} +- {sigma2_se:.3g} is degenerate")
    k3 = M**-0.5 * m2**-1.5
    m3 = k3 * m3r
    g_m3 = [0, -1.5 * m3 / m2, k3, 0, 0]
    k4 = 1.0 / (M * m2 * m2)
    ex4 = k4 * m4r
    g_m4 = [0, -2.0 * ex4 / m2, 0, 0, k4]
    rhs = math.sqrt(2.0) * k3 * a3
    g_rhs = [0, -1.5 * rhs / m2, 0, math.sqrt(2.0) * k3, 0]
    g_zeta = np.add(g_m3, np.divide(g_m4, 6.0))
    return MomentReport(
        sigma2=sigma2,
        sigma2_se=sigma2_se,
        m3=m3,
        m3_se=se(g_m3),
        m4=3.0 + ex4,
        m4_se=se(g_m4),
        n_mc=n,
        mean_a=M * m1,
        mean_a_se=se([M, 0, 0, 0, 0]),
        rhs_mecke=rhs,
        rhs_mecke_se=se(g_rhs),
        rhs_zeta=zeta_rhs(m3, 3.0 + ex4),
        rhs_zeta_se=se(g_zeta),
        mass=M,
    )


def scale_moments(rep: MomentReport, c: float) -> MomentReport:
    """Moments of the functional for the test function multiplied by ``c``."""
    if c == 0.0:
        raise DegenerateError("test function is identically zero; the variance vanishes")
    if c == 1.0:
        return rep
    sgn = math.copysign(1.0, c)
    return replace(
        rep,
        sigma2=c * c * rep.sigma2,
        sigma2_se=c * c * rep.sigma2_se,
        m3=sgn * rep.m3,
        mean_a=c * rep.mean_a,
        mean_a_se=abs(c) * rep.mean_a_se,
        rhs_zeta=zeta_rhs(sgn * rep.m3, rep.m4),
    )


def unit_moments(config: SystemConfig, n_mc: int, rng: RngStream, workers: int = 1) -> MomentReport:
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    u = mecke_unit_draws(config, n_mc, rng, workers)
    return moments_from_draws(u, config.sampling_measure.total_mass())


def mecke_moment_estimators(config: SystemConfig, n_mc: int, rng: RngStream, workers: int = 1) -> MomentReport:
    return scale_moments(unit_moments(config, n_mc, rng, workers), config.psi.amplitude)


def bound_rhs_mecke(config: SystemConfig, n_mc: int, rng: RngStream, workers: int = 1):
    """``(value, se)`` of sqrt(2) * sigma^-3 * integral of E|u|^3 against the intensity."""
    rep = mecke_moment_estimators(config, n_mc, rng, workers)
    return rep.rhs_mecke, rep.rhs_mecke_se


def zeta_rhs(m3: float, m4: float) -> float:
    return m3 + (m4 - 3.0) / 6.0


def normalize(a, moments: MomentReport) -> np.ndarray:
    """Centre and scale system draws by the Mecke mean and standard deviation."""
    return (np.asarray(a, dtype=float) - moments.mean_a) / math.sqrt(moments.sigma2)


def sample_Z(
    config: SystemConfig,
    n_reps: int,
    rng: RngStream,
    moments: Optional[MomentReport] = None,
    n_mc: int = 100_000,
    workers: int = 1,
) -> np.ndarray:
    """Normalized system draws ``(A - E A) / sigma`` using the Mecke mean and sigma.

    Without ``moments`` everything is computed for the unit-amplitude test
    function, so the result is exactly invariant under positive rescaling.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be at least 2")
    if moments is None:
        if config.psi.amplitude == 0.0:
            raise DegenerateError("test function is identically zero; the variance vanishes")
        unit = unit_moments(config, n_mc, rng, workers)
        z = normalize(sample_unit_A(config, n_reps, rng, workers), unit)
        return z if config.psi.amplitude > 0 else -z
    return normalize(sample_A(config, n_reps, rng, workers), moments)


def normalization_se(z, moments: MomentReport, eps: float = 1e-3) -> float:
    """SE of the distance to N(0, 1) caused by the estimated mean and sigma.

    Delta method with numerical derivatives of the distance in the shift and
    the scale of ``z``; the two estimation errors are treated as independent.
    """
    z = np.asarray(z, dtype=float)
    w = st.wasserstein1_to_std_gaussian
    d_shift = (w(z + eps) - w(z - eps)) / (2.0 * eps)
    d_scale = (w(z * (1.0 + eps)) - w(z * (1.0 - eps))) / (2.0 * eps)
    sigma = math.sqrt(moments.sigma2)
    shift_se = moments.mean_a_se / sigma
    scale_se = 0.5 * moments.sigma2_se / moments.sigma2
    return math.hypot(d_shift * shift_se, d_scale * scale_se)


@dataclass(frozen=True)
class BoundReport:
    r: float
    dw_hat: float
    dw_se: float
    rhs_mecke: float
    rhs_mecke_se: float
    rhs_m3: float
    rhs_m3_se: float
    rhs_zeta: float
    rhs_zeta_se: float
    a_var: float
    a_var_se: float
    moments: MomentReport
    n_reps: int
    verdicts: dict = field(default_factory=dict)
    dw_boot_se: float = 0.0
    dw_norm_se: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def bound_report(
    config: SystemConfig,
    n_reps: int,
    n_mc: int,
    rng: RngStream,
    workers: int = 1,
    n_boot: int = 200,
    return_z: bool = False,
):
    """Empirical distance to the Gaussian against the moment bounds at one horizon."""
    unit = unit_moments(config, n_mc, rng, workers)
    moments = scale_moments(unit, config.psi.amplitude)
    a_unit = sample_unit_A(config, n_reps, rng, workers)
    z = normalize(a_unit, unit)
    if config.psi.amplitude < 0:
        z = -z
    dw = st.wasserstein1_to_std_gaussian(z)
    boot_se = st.wasserstein_bootstrap_se(z, rng.substream(BOOT), n_boot)
    norm_se = normalization_se(z, unit)
    dw_se = math.hypot(boot_se, norm_se)
    a_var, a_var_se = st.sample_variance_with_se(config.psi.amplitude * a_unit)
    rhs_m3, rhs_m3_se = math.sqrt(2.0) * moments.m3, math.sqrt(2.0) * moments.m3_se
    verdicts = {
        "dw_le_rhs_m3": dw <= rhs_m3 + 3.0 * (dw_se + rhs_m3_se),
        "dw_le_rhs_mecke": dw <= moments.rhs_mecke + 3.0 * (dw_se + moments.rhs_mecke_se),
        "mecke_variance": abs(a_var - moments.sigma2) <= 3.0 * math.hypot(a_var_se, moments.sigma2_se),
    }
    if config.psi.nonnegative:
        verdicts["rhs_m3_le_rhs_mecke"] = rhs_m3 <= moments.rhs_mecke + 3.0 * math.hypot(
            rhs_m3_se, moments.rhs_mecke_se
        )
    rep = BoundReport(
        r=config.r,
        dw_hat=dw,
        dw_se=dw_se,
        rhs_mecke=moments.rhs_mecke,
        rhs_mecke_se=moments.rhs_mecke_se,
        rhs_m3=rhs_m3,
        rhs_m3_se=rhs_m3_se,
        rhs_zeta=moments.rhs_zeta,
        rhs_zeta_se=moments.rhs_zeta_se,
        a_var=a_var,
        a_var_se=a_var_se,
        moments=moments,
        n_reps=n_reps,
        verdicts=verdicts,
        dw_boot_se=boot_se,
        dw_norm_se=norm_se,
    )
    return (rep, z) if return_z else rep
