"""Particle dynamics families and single-particle trajectories.

A particle started at ``x`` carries ``m`` weighted blocks.  For the Brownian,
stable and fractional families each block coordinate is an independent scalar
path translated by ``x``.  The diffusion family integrates a one-dimensional
divergence-form SDE, and the Dyson family follows the ordered spectrum of a
symmetric matrix Brownian motion started at ``diag(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from occlab import _fallback, kernels
from occlab.rng import RngLike, as_generator
from occlab.samplers import (
    EllipticityError,
    SamplerError,
    TimeGrid,
    check_alpha,
    euler_maruyama_divergence_form,
    fbm_increments,
    symmetric_eigenvalues,
)

COLLISION_GAP = 1e-13


@dataclass(frozen=True)
class Frozen:
    """Particles that never move; useful as an analytically solvable control."""

    name = "frozen"


@dataclass(frozen=True)
class Brownian:
    name = "brownian"


@dataclass(frozen=True)
class Stable:
    alpha: float
    name = "stable"

    def __post_init__(self):
        check_alpha(self.alpha)


@dataclass(frozen=True)
class FBM:
    hurst: float
    method: str = "auto"
    name = "fbm"

    def __post_init__(self):
        if not (0.0 < self.hurst < 1.0):
            raise ValueError(f"Hurst index must lie in (0, 1), got {self.hurst}")
        if self.method not in ("auto", "circulant", "cholesky"):
            raise ValueError(f"unknown fBm method {self.method!r}")


@dataclass(frozen=True)
class SineSquaredCoefficient:
    """Diffusion coefficient ``base + amp * sin(freq * x)**2`` and its derivative."""

    base: float = 1.0
    amp: float = 0.5
    freq: float = 1.0

    def __post_init__(self):
        if self.base <= 0 or self.amp < 0:
            raise ValueError("need base > 0 and amp >= 0")

    def __call__(self, x):
        return self.base + self.amp * np.sin(self.freq * x) ** 2

    def derivative(self, x):
        return self.amp * self.freq * np.sin(2.0 * self.freq * x)

    @property
    def eta(self) -> float:
        return min(1.0, self.base, 1.0 / (self.base + self.amp))


@dataclass(frozen=True)
class EllipticDiffusion:
    """Divergence-form diffusion with coefficient ``a`` bounded in ``[eta, 1/eta]``."""

    a: object = field(default_factory=SineSquaredCoefficient)
    a_prime: object = None
    eta: Optional[float] = None
    name = "diffusion"

    def __post_init__(self):
        if self.a_prime is None:
            deriv = getattr(self.a, "derivative", None)
            if deriv is None:
                raise ValueError("a_prime is required unless the coefficient provides derivative()")
            object.__setattr__(self, "a_prime", deriv)
        if self.eta is None:
            object.__setattr__(self, "eta", getattr(self.a, "eta", None))
        if self.eta is None or not (0.0 < self.eta <= 1.0):
            raise ValueError(f"ellipticity constant must lie in (0, 1], got {self.eta}")


@dataclass(frozen=True)
class Dyson:
    dim: int
    name = "dyson"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("Dyson dimension must be >= 1")


Family = Union[Frozen, Brownian, Stable, FBM, EllipticDiffusion, Dyson]


@dataclass(frozen=True)
class DynamicsSpec:
    family: Family
    ambient_dim: int = 1
    block_count: int = 1
    weights: tuple = (1.0,)

    def __post_init__(self):
        weights = tuple(float(w) for w in np.atleast_1d(self.weights))
        object.__setattr__(self, "weights", weights)
        if self.ambient_dim < 1 or self.block_count < 1:
            raise ValueError("ambient_dim and block_count must be >= 1")
        if len(weights) != self.block_count:
            raise ValueError(f"expected {self.block_count} weights, got {len(weights)}")
        if any(not (w > 0 and math.isfinite(w)) for w in weights):
            raise ValueError("weights must be strictly positive")
        if isinstance(self.family, Dyson):
            if self.block_count != self.family.dim or self.ambient_dim != 1:
                raise ValueError("Dyson needs block_count == dim and ambient_dim == 1")
        if isinstance(self.family, EllipticDiffusion) and self.ambient_dim != 1:
            raise ValueError("the diffusion family is one-dimensional")

    @classmethod
    def dyson(cls, dim: int, weights=None) -> "DynamicsSpec":
        w = (1.0,) * dim if weights is None else weights
        return cls(Dyson(dim), 1, dim, w)

    @property
    def is_dyson(self) -> bool:
        return isinstance(self.family, Dyson)

    @property
    def start_dim(self) -> int:
        """Dimension of a start point (the spectrum size for Dyson)."""
        return self.family.dim if self.is_dyson else self.ambient_dim

    def scale(self, r: float) -> float:
        """Typical displacement over time ``r``; sets the truncation window."""
        fam = self.family
        if isinstance(fam, Frozen):
            return 0.0
        if isinstance(fam, Stable):
            return r ** (1.0 / fam.alpha)
        if isinstance(fam, FBM):
            return r**fam.hurst
        return math.sqrt(r)

    def kernel_params(self):
        """``(family code, params)`` for the compiled loop, or ``None`` if not covered."""
        fam = self.family
        if isinstance(fam, Frozen):
            return kernels.FROZEN, [0.0]
        if isinstance(fam, Brownian):
            return kernels.BROWNIAN, [0.0]
        if isinstance(fam, Stable):
            return kernels.STABLE, [float(fam.alpha)]
        if isinstance(fam, EllipticDiffusion) and isinstance(fam.a, SineSquaredCoefficient):
            c = fam.a
            return kernels.DIFFUSION, [c.base, c.amp, c.freq, float(fam.eta)]
        return None


@dataclass(frozen=True)
class ParticleTrajectory:
    """``blocks`` has shape ``(m, n_steps + 1, d)``."""

    start: np.ndarray
    grid: TimeGrid
    blocks: np.ndarray


def _check_weyl(start: np.ndarray):
    if start.ndim != 1 or np.any(np.diff(start) <= COLLISION_GAP):
        raise ValueError("Dyson start must be strictly increasing (open Weyl chamber)")


def _dyson_path(dim: int, start: np.ndarray, grid: TimeGrid, gen: np.random.Generator) -> np.ndarray:
    n, h = grid.n_steps, grid.h
    nd = dim * (dim + 1) // 2
    iu = np.triu_indices(dim)
    z = gen.standard_normal((n, nd))
    wacc = np.cumsum(math.sqrt(h) * z, axis=0) * (1.0 / math.sqrt(dim))
    mats = np.zeros((n, dim, dim))
    mats[:, iu[0], iu[1]] = wacc
    mats[:, iu[1], iu[0]] = wacc
    diag = np.arange(dim)
    mats[:, diag, diag] += start
    lam = np.concatenate([start[None, :], symmetric_eigenvalues(mats)], axis=0)
    return lam.T[:, :, None]


def simulate_particle(spec: DynamicsSpec, start, grid: TimeGrid, rng: RngLike) -> ParticleTrajectory:
    """One trajectory; draws follow the same order as the batched kernels."""
    gen = as_generator(rng)
    start = np.asarray(start, dtype=float).reshape(-1)
    fam = spec.family
    m, d, n = spec.block_count, spec.ambient_dim, grid.n_steps
    if spec.is_dyson:
        if start.shape != (fam.dim,):
            raise ValueError(f"Dyson start must have {fam.dim} coordinates")
        _check_weyl(start)
        blocks = _dyson_path(fam.dim, start, grid, gen)
        traj = ParticleTrajectory(start, grid, blocks)
        if dyson_collision_audit(traj) <= COLLISION_GAP:
            raise SamplerError("eigenvalue collision detected")
        return traj
    if start.shape != (d,):
        raise ValueError(f"start must have {d} coordinates")
    if isinstance(fam, FBM):
        inc = fbm_increments(fam.hurst, n, grid.h, m * d, gen, fam.method).reshape(m, d, n)
        pos = np.empty((m, d, n + 1))
        pos[..., 0] = start
        pos[..., 1:] = start[None, :, None] + np.cumsum(inc, axis=-1)
    elif isinstance(fam, EllipticDiffusion) and spec.kernel_params() is None:
        pos = np.empty((m, d, n + 1))
        for i in range(m):
            pos[i, 0] = euler_maruyama_divergence_form(fam.a, fam.a_prime, start[0], grid, gen, fam.eta)
    else:
        code, params = spec.kernel_params()
        pos, status = _fallback._paths(code, params, start[None, :], m, n, grid.h, gen)
        if status:
            raise EllipticityError("diffusion coefficient left the ellipticity band")
        pos = pos[0]
    return ParticleTrajectory(start, grid, np.moveaxis(pos, 1, 2))


def dyson_collision_audit(traj: ParticleTrajectory) -> float:
    """Smallest gap between neighbouring eigenvalues over the whole grid."""
    lam = traj.blocks[:, :, 0]
    if lam.shape[0] < 2:
        return math.inf
    return float(np.min(np.diff(lam, axis=0)))


def collision_census(spec: DynamicsSpec, starts, grid: TimeGrid, rng) -> tuple:
    """Simulate one Dyson trajectory per start; return ``(collisions, smallest gap)``.

    ``rng`` is an :class:`~occlab.rng.RngStream`; trajectory ``i`` uses its
    substream ``i``.
    """
    if not spec.is_dyson:
        raise ValueError("collision census applies to the Dyson family")
    collisions, smallest = 0, math.inf
    for i, start in enumerate(np.asarray(starts, dtype=float)):
        try:
            traj = simulate_particle(spec, np.sort(start), grid, rng.substream(i).generator())
        except SamplerError:
            collisions += 1
            smallest = 0.0
            continue
        smallest = min(smallest, dyson_collision_audit(traj))
    return collisions, smallest
