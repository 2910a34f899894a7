"""Pure numpy implementations of the compiled kernels.

Random draws are consumed in this order, shared with ``_kernels.pyx``:

* occupation: particle by particle, then block by block, then coordinate by
  coordinate; a Brownian or diffusion path takes ``n_steps`` normals, a stable
  path ``n_steps`` uniforms followed by ``n_steps`` exponentials, a frozen
  path nothing.
* dyson_occupation: particle by particle, then step by step, ``d(d+1)/2``
  normals filling the upper triangle row-major.
"""
from __future__ import annotations

import math

import numpy as np

FROZEN, BROWNIAN, STABLE, DIFFUSION = 0, 1, 2, 3
MAX_SWEEPS = 50
_CHUNK_ELEMENTS = 1 << 22


def psi_values(x, kind, lo, hi, amp):
    """Test function at points ``x`` of shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    inside = np.all((x >= lo) & (x <= hi), axis=-1)
    if kind == 0:
        return np.where(inside, float(amp), 0.0)
    y = (x - 0.5 * (hi + lo)) / (0.5 * (hi - lo))
    y2 = y * y
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        factors = np.where(y2 < 1.0, np.exp(1.0 - 1.0 / (1.0 - y2)), 0.0)
    return np.where(inside, float(amp) * np.prod(factors, axis=-1), 0.0)


def trapezoid(f, h):
    return h * (0.5 * (f[..., 0] + f[..., -1]) + f[..., 1:-1].sum(axis=-1))


def _cms(alpha, u, w):
    if abs(alpha - 1.0) < 1e-9:
        return np.tan(u)
    if alpha == 2.0:
        return 2.0 * np.sin(u) * np.sqrt(w)
    return (np.sin(alpha * u) / np.cos(u) ** (1.0 / alpha)) * (np.cos((1.0 - alpha) * u) / w) ** (
        (1.0 - alpha) / alpha
    )


def _paths(family, fparams, starts, m, n_steps, h, gen):
    """Positions of shape ``(n, m, d, n_steps + 1)`` and an ellipticity flag."""
    n, d = starts.shape
    pos = np.empty((n, m, d, n_steps + 1))
    pos[..., 0] = starts[:, None, :]
    if family == FROZEN:
        pos[...] = starts[:, None, :, None]
        return pos, 0
    if family == BROWNIAN:
        z = gen.standard_normal((n, m, d, n_steps))
        pos[..., 1:] = starts[:, None, :, None] + np.cumsum(math.sqrt(h) * z, axis=-1)
        return pos, 0
    if family == STABLE:
        alpha = float(fparams[0])
        scale = h ** (1.0 / alpha)
        for p in range(n):
            for i in range(m):
                for c in range(d):
                    u = gen.uniform(-0.5 * math.pi, 0.5 * math.pi, n_steps)
                    w = gen.standard_exponential(n_steps)
                    pos[p, i, c, 1:] = starts[p, c] + np.cumsum(scale * _cms(alpha, u, w))
        return pos, 0
    if family == DIFFUSION:
        base, amp, freq, eta = (float(v) for v in fparams[:4])
        z = gen.standard_normal((n, m, d, n_steps))
        s = math.sqrt(h)
        x = pos[..., 0].copy()
        status = 0
        for k in range(n_steps):
            ax = base + amp * np.sin(freq * x) ** 2
            if eta > 0.0 and np.any((ax < eta) | (ax > 1.0 / eta)):
                status = 1
            x = x + amp * freq * np.sin(2.0 * freq * x) * h + np.sqrt(2.0 * ax) * s * z[..., k]
            pos[..., k + 1] = x
        return pos, status
    raise ValueError(f"unknown family code {family}")


def occupation(family, fparams, starts, weights, psi_kind, psi_lo, psi_hi, psi_amp, n_steps, h, gen, coarse=None):
    starts = np.ascontiguousarray(starts, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n, d = starts.shape
    m = len(weights)
    out = np.zeros(n)
    chunk = max(1, _CHUNK_ELEMENTS // max(1, m * d * (n_steps + 1)))
    for lo in range(0, n, chunk):
        block = starts[lo : lo + chunk]
        pos, status = _paths(family, fparams, block, m, n_steps, h, gen)
        if status:
            return out, status
        vals = psi_values(np.moveaxis(pos, 2, -1), psi_kind, psi_lo, psi_hi, psi_amp)
        f = np.tensordot(weights, vals, axes=([0], [1]))
        out[lo : lo + chunk] = trapezoid(f, h)
        if coarse is not None:
            coarse[lo : lo + chunk] = trapezoid(f[..., ::2], 2.0 * h)
    return out, 0


def jacobi_eigenvalues(batch):
    """Batched cyclic Jacobi; returns ``(ascending values, converged flags)``."""
    a = np.array(batch, dtype=float, copy=True)
    n, d, _ = a.shape
    norm2 = np.einsum("bij,bij->b", a, a)
    iu = np.triu_indices(d, 1)
    converged = np.zeros(n, dtype=bool)
    for sweep in range(MAX_SWEEPS + 1):
        off2 = 2.0 * np.sum(a[:, iu[0], iu[1]] ** 2, axis=1)
        converged |= off2 <= 1e-24 * norm2
        if converged.all() or sweep == MAX_SWEEPS:
            break
        active = ~converged
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[:, p, q]
                rot = active & (apq != 0.0)
                if not rot.any():
                    continue
                safe = np.where(rot, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                t = 1.0 / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(theta < 0.0, -t, t)
                cs = np.where(rot, 1.0 / np.sqrt(t * t + 1.0), 1.0)
                sn = np.where(rot, t * cs, 0.0)
                colp = a[:, :, p].copy()
                colq = a[:, :, q].copy()
                a[:, :, p] = cs[:, None] * colp - sn[:, None] * colq
                a[:, :, q] = sn[:, None] * colp + cs[:, None] * colq
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :].copy()
                a[:, p, :] = cs[:, None] * rowp - sn[:, None] * rowq
                a[:, q, :] = sn[:, None] * rowp + cs[:, None] * rowq
                a[rot, p, q] = 0.0
                a[rot, q, p] = 0.0
    vals = np.sort(np.diagonal(a, axis1=1, axis2=2), axis=1)
    converged |= norm2 == 0.0
    return vals, converged


def dyson_occupation(starts, weights, psi_kind, psi_lo, psi_hi, psi_amp, n_steps, h, gen, coarse=None):
    starts = np.ascontiguousarray(starts, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n, d = starts.shape
    nd = d * (d + 1) // 2
    iu = np.triu_indices(d)
    out = np.zeros(n)
    status = 0
    chunk = max(1, _CHUNK_ELEMENTS // max(1, nd * n_steps * 4))
    inv_sqrt_d = 1.0 / math.sqrt(d)
    for lo in range(0, n, chunk):
        block = starts[lo : lo + chunk]
        nb = len(block)
        z = gen.standard_normal((nb, n_steps, nd))
        wacc = np.cumsum(math.sqrt(h) * z, axis=1) * inv_sqrt_d
        mats = np.zeros((nb, n_steps, d, d))
        mats[:, :, iu[0], iu[1]] = wacc
        mats[:, :, iu[1], iu[0]] = wacc
        diag = np.arange(d)
        mats[:, :, diag, diag] = block[:, None, :] + wacc[:, :, iu[0] == iu[1]]
        vals, ok = jacobi_eigenvalues(mats.reshape(-1, d, d))
        if not ok.all():
            status = 1
        lam = np.concatenate([block[:, None, :], vals.reshape(nb, n_steps, d)], axis=1)
        f = psi_values(lam[..., None], psi_kind, [psi_lo], [psi_hi], psi_amp) @ weights
        out[lo : lo + nb] = trapezoid(f, h)
        if coarse is not None:
            coarse[lo : lo + nb] = trapezoid(f[..., ::2], 2.0 * h)
    return out, n * n_steps, status
