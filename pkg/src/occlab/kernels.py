"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback takes over.  Both consume random numbers in the same order, so a
given stream produces the same functionals up to rounding.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from occlab import _fallback

try:
    from occlab import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

FROZEN = _fallback.FROZEN
BROWNIAN = _fallback.BROWNIAN
STABLE = _fallback.STABLE
DIFFUSION = _fallback.DIFFUSION

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"


def available_backends():
    return sorted(_BACKENDS)


def _impl():
    return _BACKENDS[BACKEND]


@contextmanager
def use_backend(name: str):
    """Temporarily switch backend, e.g. ``with use_backend("python"): ...``."""
    global BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    previous, BACKEND = BACKEND, name
    try:
        yield
    finally:
        BACKEND = previous


def _check_coarse(coarse, n_part, n_steps):
    if coarse is not None and (n_steps % 2 or coarse.shape != (n_part,) or coarse.dtype != float):
        raise ValueError("coarse output needs an even step count and a float array of one value per particle")


def occupation(family, fparams, starts, weights, psi_kind, psi_lo, psi_hi, psi_amp, n_steps, h, gen, coarse=None):
    """Occupation functionals ``(u, status)``; see :mod:`occlab._fallback` for the draw order."""
    starts = np.ascontiguousarray(starts, dtype=float)
    _check_coarse(coarse, len(starts), n_steps)
    return _impl().occupation(
        int(family),
        np.ascontiguousarray(fparams, dtype=float),
        starts,
        np.ascontiguousarray(weights, dtype=float),
        int(psi_kind),
        np.ascontiguousarray(psi_lo, dtype=float),
        np.ascontiguousarray(psi_hi, dtype=float),
        float(psi_amp),
        int(n_steps),
        float(h),
        gen,
        coarse,
    )


def dyson_occupation(starts, weights, psi_kind, psi_lo, psi_hi, psi_amp, n_steps, h, gen, coarse=None):
    """Dyson occupation functionals ``(u, eigen_solves, status)``."""
    starts = np.ascontiguousarray(starts, dtype=float)
    _check_coarse(coarse, len(starts), n_steps)
    return _impl().dyson_occupation(
        starts,
        np.ascontiguousarray(weights, dtype=float),
        int(psi_kind),
        float(psi_lo),
        float(psi_hi),
        float(psi_amp),
        int(n_steps),
        float(h),
        gen,
        coarse,
    )


def jacobi_eigenvalues(batch):
    return _impl().jacobi_eigenvalues(np.ascontiguousarray(batch, dtype=float))
