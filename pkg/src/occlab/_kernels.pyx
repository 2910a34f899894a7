# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Each kernel consumes random numbers in exactly the order documented in
:mod:`occlab._fallback`, so both backends agree draw for draw.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport sqrt, sin, cos, tan, exp, log, fabs, M_PI
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal, random_standard_uniform, random_standard_exponential)

import numpy as np

cdef enum:
    FROZEN = 0
    BROWNIAN = 1
    STABLE = 2
    DIFFUSION = 3
    MAX_SWEEPS = 50


cdef bitgen_t* _bitgen(gen) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(gen.bit_generator.capsule, "BitGenerator")


cdef inline double _psi(const double* x, Py_ssize_t stride, int d, int kind,
                        const double* lo, const double* hi, double amp) noexcept nogil:
    cdef int c
    cdef double v = amp, y, half, mid
    for c in range(d):
        y = x[c * stride]
        if y < lo[c] or y > hi[c]:
            return 0.0
        if kind == 1:
            half = 0.5 * (hi[c] - lo[c])
            mid = 0.5 * (hi[c] + lo[c])
            y = (y - mid) / half
            if y * y >= 1.0:
                return 0.0
            v *= exp(1.0 - 1.0 / (1.0 - y * y))
    return v


cdef inline double _cms(double alpha, double u, double w) noexcept nogil:
    if fabs(alpha - 1.0) < 1e-9:
        return tan(u)
    if alpha == 2.0:
        return 2.0 * sin(u) * sqrt(w)
    return (sin(alpha * u) / cos(u) ** (1.0 / alpha)) * (cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)


def occupation(int family, double[::1] fparams, double[:, ::1] starts, double[::1] weights,
               int psi_kind, double[::1] psi_lo, double[::1] psi_hi, double psi_amp,
               Py_ssize_t n_steps, double h, gen, coarse=None):
    """Trapezoid occupation functional for every start point; returns ``(u, status)``.

    ``status`` is 0 on success and 1 when a diffusion path left the
    ellipticity band.  If ``coarse`` is given (``n_steps`` even) it receives
    the trapezoid rule on every other grid point of the same path.
    """
    cdef Py_ssize_t n_part = starts.shape[0], p, k
    cdef int d = starts.shape[1], m = weights.shape[0], i, c
    cdef Py_ssize_t n1 = n_steps + 1
    cdef double s = sqrt(h), w, x, ax, acc, alpha = 0.0, scale = 0.0
    cdef double base = 0.0, amp = 0.0, freq = 0.0, eta = 0.0
    cdef int status = 0
    cdef bitgen_t* rng = _bitgen(gen)
    out = np.zeros(n_part)
    cdef double[::1] u = out
    cdef double[::1] uc
    cdef bint want_coarse = coarse is not None
    if want_coarse:
        uc = coarse
    cdef double* pos = <double*> malloc(d * n1 * sizeof(double))
    cdef double* f = <double*> malloc(n1 * sizeof(double))
    cdef double* buf = <double*> malloc(n1 * sizeof(double))
    if pos == NULL or f == NULL or buf == NULL:
        free(pos); free(f); free(buf)
        raise MemoryError()
    if family == STABLE:
        alpha = fparams[0]
        scale = h ** (1.0 / alpha)
    elif family == DIFFUSION:
        base = fparams[0]; amp = fparams[1]; freq = fparams[2]; eta = fparams[3]
    try:
        with gen.bit_generator.lock, nogil:
            for p in range(n_part):
                if status:
                    break
                for k in range(n1):
                    f[k] = 0.0
                for i in range(m):
                    for c in range(d):
                        pos[c * n1] = starts[p, c]
                        if family == FROZEN:
                            for k in range(1, n1):
                                pos[c * n1 + k] = starts[p, c]
                        elif family == BROWNIAN:
                            w = 0.0
                            for k in range(1, n1):
                                w += s * random_standard_normal(rng)
                                pos[c * n1 + k] = starts[p, c] + w
                        elif family == STABLE:
                            for k in range(n_steps):
                                buf[k] = -0.5 * M_PI + M_PI * random_standard_uniform(rng)
                            w = 0.0
                            for k in range(n_steps):
                                w += scale * _cms(alpha, buf[k], random_standard_exponential(rng))
                                pos[c * n1 + k + 1] = starts[p, c] + w
                        else:
                            x = starts[p, c]
                            for k in range(1, n1):
                                ax = base + amp * sin(freq * x) ** 2
                                if eta > 0.0 and (ax < eta or ax > 1.0 / eta):
                                    status = 1
                                x = x + amp * freq * sin(2.0 * freq * x) * h + sqrt(2.0 * ax) * s * random_standard_normal(rng)
                                pos[c * n1 + k] = x
                    for k in range(n1):
                        f[k] += weights[i] * _psi(&pos[k], n1, d, psi_kind, &psi_lo[0], &psi_hi[0], psi_amp)
                acc = 0.5 * (f[0] + f[n_steps])
                for k in range(1, n_steps):
                    acc += f[k]
                u[p] = acc * h
                if want_coarse:
                    acc = 0.5 * (f[0] + f[n_steps])
                    for k in range(2, n_steps, 2):
                        acc += f[k]
                    uc[p] = acc * (2.0 * h)
    finally:
        free(pos); free(f); free(buf)
    return out, status


cdef int _jacobi(double* a, int d, double* vals) noexcept nogil:
    """Cyclic Jacobi on the dense row-major ``a`` (destroyed); ascending ``vals``."""
    cdef int sweep, p, q, r, converged = 0
    cdef double norm2 = 0.0, off2, theta, t, cs, sn, app, aqq, apq, arp, arq, tmp
    for p in range(d * d):
        norm2 += a[p] * a[p]
    if norm2 == 0.0:
        for p in range(d):
            vals[p] = 0.0
        return 1
    for sweep in range(MAX_SWEEPS + 1):
        off2 = 0.0
        for p in range(d):
            for q in range(p + 1, d):
                off2 += 2.0 * a[p * d + q] * a[p * d + q]
        if off2 <= 1e-24 * norm2:
            converged = 1
            break
        if sweep == MAX_SWEEPS:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p * d + q]
                if apq == 0.0:
                    continue
                app = a[p * d + p]
                aqq = a[q * d + q]
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                cs = 1.0 / sqrt(t * t + 1.0)
                sn = t * cs
                for r in range(d):
                    arp = a[r * d + p]
                    arq = a[r * d + q]
                    a[r * d + p] = cs * arp - sn * arq
                    a[r * d + q] = sn * arp + cs * arq
                for r in range(d):
                    arp = a[p * d + r]
                    arq = a[q * d + r]
                    a[p * d + r] = cs * arp - sn * arq
                    a[q * d + r] = sn * arp + cs * arq
                a[p * d + q] = 0.0
                a[q * d + p] = 0.0
    for p in range(d):
        vals[p] = a[p * d + p]
    for p in range(1, d):
        tmp = vals[p]
        r = p - 1
        while r >= 0 and vals[r] > tmp:
            vals[r + 1] = vals[r]
            r -= 1
        vals[r + 1] = tmp
    return converged


def jacobi_eigenvalues(double[:, :, ::1] batch):
    """Ascending eigenvalues of a stack of symmetric matrices; returns ``(vals, ok)``."""
    cdef Py_ssize_t b, n = batch.shape[0], j
    cdef int d = batch.shape[1]
    vals = np.empty((n, d))
    ok = np.empty(n, dtype=bool)
    cdef double[:, ::1] v = vals
    cdef unsigned char[::1] okv = ok.view(np.uint8)
    cdef double* work = <double*> malloc(d * d * sizeof(double))
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            for b in range(n):
                for j in range(d * d):
                    work[j] = batch[b, j // d, j % d]
                okv[b] = _jacobi(work, d, &v[b, 0])
    finally:
        free(work)
    return vals, ok


def dyson_occupation(double[:, ::1] starts, double[::1] weights,
                     int psi_kind, double psi_lo, double psi_hi, double psi_amp,
                     Py_ssize_t n_steps, double h, gen, coarse=None):
    """Occupation functional of Dyson spectra; returns ``(u, eigen_solves, status)``.

    Per step, ``d(d+1)/2`` normals fill the upper triangle row-major.  When the
    Frobenius norm of the accumulated noise, divided by sqrt(d), is below the
    distance from every initial eigenvalue to the support, Weyl's inequality
    keeps all eigenvalues off the support and the diagonalization is skipped.
    """
    cdef Py_ssize_t n_part = starts.shape[0], p, k
    cdef int d, i, j, idx, nd
    cdef int status = 0
    cdef long solves = 0
    cdef double s = sqrt(h), inv_sqrt_d, fro2, mindist, dist, fk, acc, acc2, z, lam
    cdef bitgen_t* rng = _bitgen(gen)
    cdef double[::1] uc
    cdef bint want_coarse = coarse is not None
    if want_coarse:
        uc = coarse
    d = starts.shape[1]
    nd = d * (d + 1) // 2
    inv_sqrt_d = 1.0 / sqrt(<double> d)
    out = np.zeros(n_part)
    cdef double[::1] u = out
    cdef double* wacc = <double*> malloc(nd * sizeof(double))
    cdef double* a = <double*> malloc(d * d * sizeof(double))
    cdef double* vals = <double*> malloc(d * sizeof(double))
    if wacc == NULL or a == NULL or vals == NULL:
        free(wacc); free(a); free(vals)
        raise MemoryError()
    try:
        with gen.bit_generator.lock, nogil:
            for p in range(n_part):
                mindist = 1e300
                fk = 0.0
                for i in range(d):
                    lam = starts[p, i]
                    dist = psi_lo - lam
                    if lam - psi_hi > dist:
                        dist = lam - psi_hi
                    if dist < 0.0:
                        dist = 0.0
                    if dist < mindist:
                        mindist = dist
                    fk += weights[i] * _psi(&starts[p, i], 1, 1, psi_kind, &psi_lo, &psi_hi, psi_amp)
                acc = 0.5 * fk
                acc2 = acc
                for j in range(nd):
                    wacc[j] = 0.0
                fro2 = 0.0
                for k in range(1, n_steps + 1):
                    fro2 = 0.0
                    idx = 0
                    for i in range(d):
                        for j in range(i, d):
                            wacc[idx] += s * random_standard_normal(rng)
                            z = wacc[idx]
                            fro2 += z * z if i == j else 2.0 * z * z
                            idx += 1
                    if sqrt(fro2) * inv_sqrt_d < mindist:
                        fk = 0.0
                    else:
                        idx = 0
                        for i in range(d):
                            for j in range(i, d):
                                z = wacc[idx] * inv_sqrt_d
                                if i == j:
                                    a[i * d + i] = starts[p, i] + z
                                else:
                                    a[i * d + j] = z
                                    a[j * d + i] = z
                                idx += 1
                        if not _jacobi(a, d, vals):
                            status = 1
                        solves += 1
                        fk = 0.0
                        for i in range(d):
                            fk += weights[i] * _psi(&vals[i], 1, 1, psi_kind, &psi_lo, &psi_hi, psi_amp)
                    acc += fk if k < n_steps else 0.5 * fk
                    if k % 2 == 0:
                        acc2 += fk if k < n_steps else 0.5 * fk
                u[p] = acc * h
                if want_coarse:
                    uc[p] = acc2 * (2.0 * h)
    finally:
        free(wacc); free(a); free(vals)
    return out, solves, status
