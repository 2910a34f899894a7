"""Fast checks against exact values, run by ``occlab selftest``."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from occlab import kernels
from occlab.dynamics import Brownian, DynamicsSpec, Frozen
from occlab.functionals import SystemConfig, TestFunction, mecke_moment_estimators, simulate_unit_u
from occlab.rng import RngStream
from occlab.samplers import Box, IntensityMeasure, TimeGrid, symmetric_eigenvalues
from occlab.statistics import chi_smallball_cdf, std_normal_cdf, wasserstein1_to_std_gaussian
from occlab.theory import fbm_conditional_variance, stable_cf_check


def _one_atom():
    err = abs(wasserstein1_to_std_gaussian([0.0]) - math.sqrt(2.0 / math.pi))
    return err <= 1e-10, f"error {err:.2e}"


def _w1_quadrature():
    x = np.sort(RngStream(1).generator().normal(0.3, 1.2, 7))

    def gap(t):
        return abs(np.searchsorted(x, t, side="right") / x.size - std_normal_cdf(t))

    pts = [-12.0, *x, 12.0]
    ref = sum(integrate.quad(gap, a, b, epsabs=1e-13, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))
    err = abs(wasserstein1_to_std_gaussian(x) - ref)
    return err <= 1e-8, f"error {err:.2e}"


def _chi_exact():
    y = np.linspace(0.005, 1.0, 200)
    e1 = np.max(np.abs(chi_smallball_cdf(1, y) - np.vectorize(math.erf)(y / math.sqrt(2.0))))
    e2 = np.max(np.abs(chi_smallball_cdf(2, y) - (1.0 - np.exp(-0.5 * y * y))))
    return max(e1, e2) <= 1e-10, f"errors {e1:.1e}, {e2:.1e}"


def _brownian_reduction():
    err = abs(fbm_conditional_variance(0.5, 0.2, 0.5, 0.9) - 0.4)
    return err <= 1e-12, f"error {err:.1e}"


def _stable_cf():
    n = 20000
    worst = max(
        stable_cf_check(a, 1.0, [0.5, 1.0, 2.0], n, RngStream(2).substream(i).generator())
        for i, a in enumerate((0.5, 1.0, 1.5, 2.0))
    )
    return worst <= 4.0 / math.sqrt(n), f"max deviation {worst:.4f}"


def _frozen_mecke():
    nu = IntensityMeasure.constant(1.0, Box([0.0], [1.0]))
    cfg = SystemConfig(nu, DynamicsSpec(Frozen()), TestFunction("indicator", (-1.0,), (1.0,)), r=5.0, dt=0.5)
    rep = mecke_moment_estimators(cfg, 1000, RngStream(3))
    err = abs(rep.sigma2 - 2.0 * 25.0)
    return err <= 1e-9 and rep.sigma2_se == 0.0, f"sigma2 {rep.sigma2:.12g}"


def _backends():
    if len(kernels.available_backends()) < 2:
        return True, "only the python backend is built"
    nu = IntensityMeasure.constant(1.0, Box([0.0], [1.0]))
    cfg = SystemConfig(nu, DynamicsSpec(Brownian()), TestFunction("indicator", (-1.0,), (1.0,)), r=4.0, dt=0.05)
    starts = np.linspace(-3.0, 3.0, 50)[:, None]
    out = {}
    for name in kernels.available_backends():
        with kernels.use_backend(name):
            out[name] = simulate_unit_u(cfg, starts, RngStream(4).generator())
    err = float(np.max(np.abs(out["compiled"] - out["python"])))
    return err <= 1e-10, f"max difference {err:.1e}"


def _jacobi():
    m = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]])
    exact = np.array([2.0 - math.sqrt(2.0), 2.0, 2.0 + math.sqrt(2.0)])
    err = float(np.max(np.abs(symmetric_eigenvalues(m) - exact)))
    return err <= 1e-12, f"error {err:.1e}"


def _grid():
    g = TimeGrid(1.0, 0.3)
    return g.n_steps == 4 and abs(g.h - 0.25) < 1e-15, f"{g.n_steps} steps of {g.h}"


CHECKS = [
    ("one-atom distance", _one_atom),
    ("distance vs quadrature", _w1_quadrature),
    ("chi small-ball closed forms", _chi_exact),
    ("fBm H=1/2 conditional variance", _brownian_reduction),
    ("stable characteristic function", _stable_cf),
    ("frozen Mecke variance", _frozen_mecke),
    ("backend agreement", _backends),
    ("Jacobi eigenvalues", _jacobi),
    ("time grid", _grid),
]


def run_selftest(stream=None) -> bool:
    ok_all = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        if stream is not None:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=stream)
    return ok_all
