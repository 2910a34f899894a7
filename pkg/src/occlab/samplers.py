"""Low-level reproducible random generation.

Poisson point processes on boxes, symmetric stable increments, fractional
Brownian paths, symmetric Gaussian matrix increments, an Euler-Maruyama step
for divergence-form diffusions, and a cyclic Jacobi eigensolver.

All samplers take either an :class:`~occlab.rng.RngStream` or an already
constructed :class:`numpy.random.Generator`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from occlab import kernels
from occlab.rng import RngLike, as_generator


class SamplerError(RuntimeError):
    pass


class EllipticityError(SamplerError):
    pass


class ConvergenceError(SamplerError):
    pass


# --------------------------------------------------------------------------
# geometry and intensity
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must be nonempty and of equal length")
        if any(not (math.isfinite(a) and math.isfinite(b)) or b < a for a, b in zip(lo, hi)):
            raise ValueError(f"invalid box bounds {lo} .. {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def inflate(self, radius: float) -> "Box":
        return Box(tuple(a - radius for a in self.lower), tuple(b + radius for b in self.upper))

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.all((pts >= np.asarray(self.lower)) & (pts <= np.asarray(self.upper)), axis=1)

    def uniform(self, gen: np.random.Generator, n: int) -> np.ndarray:
        lo = np.asarray(self.lower)
        return lo + self.widths * gen.random((n, self.dim))


@dataclass(frozen=True)
class ConstantDensity:
    value: float

    def __call__(self, x) -> np.ndarray:
        return np.full(np.shape(x)[:-1], float(self.value))

    def bounds(self, box: Box) -> tuple:
        return float(self.value), float(self.value)

    def integrate(self, box: Box) -> float:
        return float(self.value) * box.volume


@dataclass(frozen=True)
class SineSquaredDensity:
    """``base + amp * sin(freq * x_1)**2``, constant in the other coordinates."""

    base: float = 1.0
    amp: float = 0.5
    freq: float = math.pi

    def __call__(self, x) -> np.ndarray:
        x1 = np.asarray(x, dtype=float)[..., 0]
        return self.base + self.amp * np.sin(self.freq * x1) ** 2

    def bounds(self, box: Box) -> tuple:
        return min(self.base, self.base + self.amp), max(self.base, self.base + self.amp)

    def integrate(self, box: Box) -> float:
        a, b = box.lower[0], box.upper[0]
        f = self.freq

        def prim(x):
            return x / 2.0 - math.sin(2.0 * f * x) / (4.0 * f)

        first = self.base * (b - a) + self.amp * (prim(b) - prim(a))
        return first * float(np.prod(box.widths[1:]))


def _gauss_legendre_mass(density: Callable, box: Box, panels: int = 32, order: int = 8) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    axes, axis_w = [], []
    for lo, hi in zip(box.lower, box.upper):
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        axes.append((mid[:, None] + half[:, None] * nodes[None, :]).ravel())
        axis_w.append((half[:, None] * weights[None, :]).ravel())
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = axis_w[0]
    for extra in axis_w[1:]:
        w = np.multiply.outer(w, extra).ravel()
    return float(np.dot(np.asarray(density(pts), dtype=float), w))


@dataclass(frozen=True)
class IntensityMeasure:
    """Control measure with a density bounded in ``[rho_min, rho_max]`` on ``window``."""

    density: Callable
    rho_min: float
    rho_max: float
    window: Box
    check_points: int = 9

    def __post_init__(self):
        if not self.rho_min > 0:
            raise ValueError(f"rho_min must be positive, got {self.rho_min}")
        if self.rho_max < self.rho_min:
            raise ValueError("rho_max must be >= rho_min")
        axes = [np.linspace(a, b, self.check_points) for a, b in zip(self.window.lower, self.window.upper)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        vals = np.asarray(self.density(grid), dtype=float)
        tol = 1e-12 * max(1.0, self.rho_max)
        if np.any(vals < self.rho_min - tol) or np.any(vals > self.rho_max + tol):
            raise ValueError("density leaves [rho_min, rho_max] on the window")

    @classmethod
    def constant(cls, value: float, window: Box) -> "IntensityMeasure":
        return cls(ConstantDensity(value), value, value, window)

    @property
    def dim(self) -> int:
        return self.window.dim

    def with_window(self, window: Box) -> "IntensityMeasure":
        return IntensityMeasure(self.density, self.rho_min, self.rho_max, window, self.check_points)

    def total_mass(self) -> float:
        integrate = getattr(self.density, "integrate", None)
        if integrate is not None:
            return float(integrate(self.window))
        return _gauss_legendre_mass(self.density, self.window)

    def sample_points(self, gen: np.random.Generator, n: int, batch: int = 4096) -> np.ndarray:
        """``n`` iid points with law proportional to the measure (rejection from uniform)."""
        out = np.empty((n, self.dim))
        filled = 0
        accept_all = self.rho_min == self.rho_max
        while filled < n:
            size = max(batch, n - filled)
            cand = self.window.uniform(gen, size)
            if not accept_all:
                keep = gen.random(size) * self.rho_max < np.asarray(self.density(cand))
                cand = cand[keep]
            take = min(len(cand), n - filled)
            out[filled : filled + take] = cand[:take]
            filled += take
        return out


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray
    window: Box

    def __len__(self) -> int:
        return len(self.points)

    def count_in(self, box: Box) -> int:
        return int(np.count_nonzero(box.contains(self.points))) if len(self.points) else 0


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    dt: float
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not (self.t_end > 0 and self.dt > 0):
            raise ValueError("t_end and dt must be positive")
        n = max(1, math.ceil(self.t_end / self.dt * (1.0 - 1e-12)))
        object.__setattr__(self, "n_steps", n)

    @property
    def h(self) -> float:
        """Actual (uniform) step; never larger than ``dt``."""
        return self.t_end / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = self.h * np.arange(self.n_steps + 1)
        t[-1] = self.t_end
        return t

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_end, self.t_end / (self.n_steps * factor))


@dataclass(frozen=True)
class SymmetricMatrix:
    """Packed upper triangle (row-major, ``i <= j``) of a real symmetric matrix."""

    dimension: int
    entries: np.ndarray

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (self.dimension * (self.dimension + 1) // 2,):
            raise ValueError("entries must hold d(d+1)/2 values")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_dense(cls, a) -> "SymmetricMatrix":
        a = np.asarray(a, dtype=float)
        iu = np.triu_indices(a.shape[0])
        return cls(a.shape[0], a[iu])

    def dense(self) -> np.ndarray:
        d = self.dimension
        out = np.zeros((d, d))
        iu = np.triu_indices(d)
        out[iu] = self.entries
        out.T[iu] = self.entries
        return out

    def __add__(self, other: "SymmetricMatrix") -> "SymmetricMatrix":
        if other.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        return SymmetricMatrix(self.dimension, self.entries + other.entries)


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------


def sample_poisson_process(nu: IntensityMeasure, rng: RngLike) -> PointSet:
    """Poisson process with intensity ``nu`` by thinning a rate-``rho_max`` process."""
    if nu.window.volume <= 0:
        raise ValueError("cannot sample a Poisson process on a zero-volume window")
    gen = as_generator(rng)
    count = gen.poisson(nu.rho_max * nu.window.volume)
    pts = nu.window.uniform(gen, count)
    keep = gen.random(count) * nu.rho_max < np.asarray(nu.density(pts), dtype=float).reshape(count)
    return PointSet(pts[keep], nu.window)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"stability index must lie in (0, 2], got {alpha}")
    return alpha


def cms_transform(alpha: float, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Chambers-Mallows-Stuck map for the symmetric unit-scale stable law.

    ``u`` is uniform on (-pi/2, pi/2) and ``w`` standard exponential.
    """
    if abs(alpha - 1.0) < 1e-9:
        return np.tan(u)
    if alpha == 2.0:
        return 2.0 * np.sin(u) * np.sqrt(w)
    return (np.sin(alpha * u) / np.cos(u) ** (1.0 / alpha)) * (
        np.cos((1.0 - alpha) * u) / w
    ) ** ((1.0 - alpha) / alpha)


def sample_stable_increments(alpha: float, t_step: float, n: int, rng: RngLike) -> np.ndarray:
    """``n`` iid symmetric stable increments with characteristic function exp(-t|theta|^alpha)."""
    alpha = check_alpha(alpha)
    if t_step <= 0:
        raise ValueError("t_step must be positive")
    gen = as_generator(rng)
    u = gen.uniform(-0.5 * math.pi, 0.5 * math.pi, n)
    w = gen.standard_exponential(n)
    return t_step ** (1.0 / alpha) * cms_transform(alpha, u, w)


def fgn_autocovariance(hurst: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    e = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** e - 2.0 * k**e + np.abs(k - 1) ** e)


@lru_cache(maxsize=64)
def _circulant_sqrt_eigs(hurst: float, n: int) -> Optional[np.ndarray]:
    size = 1 << max(1, math.ceil(math.log2(2 * n)))
    half = size // 2
    gamma = fgn_autocovariance(hurst, half + 1)
    row = np.concatenate([gamma, gamma[1:half][::-1]])
    eig = np.fft.fft(row).real
    top = eig.max()
    if eig.min() < -1e-9 * top:
        return None
    return np.sqrt(np.clip(eig, 0.0, None) / size)


@lru_cache(maxsize=16)
def _fgn_cholesky(hurst: float, n: int) -> np.ndarray:
    gamma = fgn_autocovariance(hurst, n)
    idx = np.arange(n)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = cov + 1e-12 * np.trace(cov) * np.eye(n)
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SamplerError("fGn covariance is not positive definite") from exc


def fbm_increments(
    hurst: float, n_steps: int, h: float, n_paths: int, gen: np.random.Generator, method: str = "auto"
) -> np.ndarray:
    """Exact fBm increments on a uniform grid, shape ``(n_paths, n_steps)``.

    Circulant embedding produces two independent paths per complex draw (real
    and imaginary parts); draws are consumed pairwise in path order.
    """
    if not (0.0 < hurst < 1.0):
        raise ValueError(f"Hurst index must lie in (0, 1), got {hurst}")
    scale = h**hurst
    sqrt_eig = None if method == "cholesky" else _circulant_sqrt_eigs(float(hurst), int(n_steps))
    if sqrt_eig is None and method == "circulant":
        raise SamplerError("circulant embedding has negative eigenvalues")
    if sqrt_eig is not None:
        size = sqrt_eig.shape[0]
        pairs = (n_paths + 1) // 2
        z = gen.standard_normal((pairs, 2, size))
        y = np.fft.fft(sqrt_eig * (z[:, 0] + 1j * z[:, 1]), axis=-1)[:, :n_steps]
        out = np.empty((2 * pairs, n_steps))
        out[0::2] = y.real
        out[1::2] = y.imag
        return scale * out[:n_paths]
    chol = _fgn_cholesky(float(hurst), int(n_steps))
    z = gen.standard_normal((n_paths, n_steps))
    return scale * z @ chol.T


def sample_fbm_path(hurst: float, grid: TimeGrid, rng: RngLike, method: str = "auto") -> np.ndarray:
    """One fBm path on ``grid.times`` starting at 0."""
    gen = as_generator(rng)
    inc = fbm_increments(hurst, grid.n_steps, grid.h, 1, gen, method)[0]
    return np.concatenate([[0.0], np.cumsum(inc)])


def sample_goe_increment(d: int, t_step: float, rng: RngLike) -> SymmetricMatrix:
    """Symmetric matrix with independent N(0, t_step) entries for ``i <= j``."""
    if d < 1:
        raise ValueError("matrix dimension must be >= 1")
    if t_step <= 0:
        raise ValueError("t_step must be positive")
    gen = as_generator(rng)
    return SymmetricMatrix(d, math.sqrt(t_step) * gen.standard_normal(d * (d + 1) // 2))


def euler_maruyama_divergence_form(
    a: Callable,
    a_prime: Callable,
    x0: float,
    grid: TimeGrid,
    rng: RngLike,
    eta: Optional[float] = None,
) -> np.ndarray:
    """Euler-Maruyama path of dX = a'(X) dt + sqrt(2 a(X)) dW (generator d/dx a d/dx)."""
    gen = as_generator(rng)
    if eta is None:
        eta = getattr(a, "eta", None)
    n, h = grid.n_steps, grid.h
    z = gen.standard_normal(n)
    path = np.empty(n + 1)
    path[0] = x = float(x0)
    sq = math.sqrt(h)
    for k in range(n):
        ax = float(a(x))
        if eta is not None and not (eta <= ax <= 1.0 / eta):
            raise EllipticityError(f"a({x}) = {ax} outside [{eta}, {1.0 / eta}]")
        x = x + float(a_prime(x)) * h + math.sqrt(2.0 * ax) * sq * z[k]
        path[k + 1] = x
    return path


def symmetric_eigenvalues(m) -> np.ndarray:
    """Ascending eigenvalues by cyclic Jacobi rotations.

    Accepts a :class:`SymmetricMatrix`, a dense ``(d, d)`` array or a stack
    ``(..., d, d)``.
    """
    if isinstance(m, SymmetricMatrix):
        m = m.dense()
    a = np.asarray(m, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError("expected square matrices")
    if not np.array_equal(a, np.swapaxes(a, -1, -2)):
        raise ValueError("matrix is not symmetric")
    lead = a.shape[:-2]
    flat = np.ascontiguousarray(a.reshape((-1,) + a.shape[-2:]))
    vals, ok = kernels.jacobi_eigenvalues(flat)
    if not np.all(ok):
        raise ConvergenceError("Jacobi iteration did not converge within 50 sweeps")
    return vals.reshape(lead + (a.shape[-1],))
