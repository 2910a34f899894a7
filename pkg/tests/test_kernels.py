import numpy as np
import pytest

from occlab import _fallback, kernels
from occlab.dynamics import (
    Brownian,
    Dyson,
    DynamicsSpec,
    EllipticDiffusion,
    Frozen,
    SineSquaredCoefficient,
    Stable,
    simulate_particle,
)
from occlab.functionals import TestFunction, particle_functional_u
from occlab.rng import RngStream
from occlab.samplers import TimeGrid

compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="extension not built")

SPECS = [
    DynamicsSpec(Frozen()),
    DynamicsSpec(Brownian(), block_count=2, weights=(1.0, 0.5)),
    DynamicsSpec(Brownian(), ambient_dim=2),
    DynamicsSpec(Stable(1.5)),
    DynamicsSpec(Stable(1.0)),
    DynamicsSpec(Stable(2.0)),
    DynamicsSpec(Stable(0.8), block_count=3, weights=(1.0, 2.0, 3.0)),
    DynamicsSpec(EllipticDiffusion(SineSquaredCoefficient())),
]


def run(backend, spec, starts, psi, n_steps, h, seed, coarse=False):
    code, params = spec.kernel_params()
    out = np.empty(len(starts)) if coarse else None
    with kernels.use_backend(backend):
        u, status = kernels.occupation(
            code, params, starts, spec.weights, psi.code, psi.lower, psi.upper, 1.0, n_steps, h, RngStream(seed).generator(), out
        )
    return u, status, out


def starts_for(spec, n=64):
    gen = RngStream(99).generator()
    return gen.uniform(-4, 4, (n, spec.ambient_dim))


def psi_for(spec, kind="indicator"):
    d = spec.ambient_dim
    return TestFunction(kind, (-1.0,) * d, (1.0,) * d)


@compiled
@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family.name}-d{s.ambient_dim}-m{s.block_count}")
@pytest.mark.parametrize("kind", ["indicator", "bump"])
def test_backends_agree(spec, kind):
    starts, psi = starts_for(spec), psi_for(spec, kind)
    uc, sc, cc = run("compiled", spec, starts, psi, 40, 0.1, 3, coarse=True)
    up, sp, cp = run("python", spec, starts, psi, 40, 0.1, 3, coarse=True)
    assert sc == sp == 0
    assert np.allclose(uc, up, rtol=1e-12, atol=1e-12)
    assert np.allclose(cc, cp, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("spec", SPECS[1:4], ids=lambda s: f"{s.family.name}-d{s.ambient_dim}")
def test_kernel_matches_trajectory_quadrature(spec):
    # Particle by particle through the reference trajectory sampler and the trapezoid helper.
    starts, psi = starts_for(spec, 5), psi_for(spec)
    grid = TimeGrid(4.0, 0.1)
    u, status, _ = run(kernels.BACKEND, spec, starts, psi, grid.n_steps, grid.h, 5)
    gen = RngStream(5).generator()
    for i, x in enumerate(starts):
        traj = simulate_particle(spec, x, grid, gen)
        assert particle_functional_u(traj, psi, spec.weights, grid) == pytest.approx(u[i], rel=1e-12, abs=1e-12)


def test_coarse_output_is_trapezoid_on_even_points():
    spec = DynamicsSpec(Brownian())
    starts, psi = starts_for(spec, 3), psi_for(spec)
    grid = TimeGrid(2.0, 0.05)
    _, _, coarse = run(kernels.BACKEND, spec, starts, psi, grid.n_steps, grid.h, 8, coarse=True)
    gen = RngStream(8).generator()
    for i, x in enumerate(starts):
        traj = simulate_particle(spec, x, grid, gen)
        f = psi(traj.blocks[0, ::2])
        assert _fallback.trapezoid(f, 2 * grid.h) == pytest.approx(coarse[i], abs=1e-12)


def test_coarse_needs_even_steps():
    spec = DynamicsSpec(Brownian())
    with pytest.raises(ValueError):
        run(kernels.BACKEND, spec, starts_for(spec, 2), psi_for(spec), 41, 0.1, 1, coarse=True)


def test_diffusion_status_flags_ellipticity():
    spec = DynamicsSpec(EllipticDiffusion(SineSquaredCoefficient()))
    code, params = spec.kernel_params()
    bad = list(params)
    bad[3] = 0.99  # eta so tight that a(x) = 1 + ... leaves [eta, 1/eta] once sin(x) != 0
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            _, status = kernels.occupation(code, bad, [[0.5]], [1.0], 0, [-1.0], [1.0], 1.0, 10, 0.1, RngStream(0).generator())
        assert status != 0


@compiled
def test_dyson_backends_agree():
    gen = RngStream(4).generator()
    starts = np.sort(gen.uniform(-2, 2, (40, 3)), axis=1)
    res = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            coarse = np.empty(40)
            u, solves, status = kernels.dyson_occupation(starts, np.ones(3), 0, -1.0, 1.0, 1.0, 20, 0.05, RngStream(6).generator(), coarse)
            res[backend] = (u, coarse, status)
    assert res["compiled"][2] == res["python"][2] == 0
    assert np.allclose(res["compiled"][0], res["python"][0], atol=1e-10)
    assert np.allclose(res["compiled"][1], res["python"][1], atol=1e-10)


def test_dyson_kernel_matches_trajectory():
    spec = DynamicsSpec.dyson(3)
    grid = TimeGrid(1.0, 0.05)
    starts = np.array([[-1.5, -0.2, 0.9], [-3.0, 2.5, 3.5]])
    u, _, status = kernels.dyson_occupation(starts, np.ones(3), 0, -1.0, 1.0, 1.0, grid.n_steps, grid.h, RngStream(2).generator())
    assert status == 0
    gen = RngStream(2).generator()
    psi = TestFunction("indicator", (-1.0,), (1.0,))
    for i, x in enumerate(starts):
        traj = simulate_particle(spec, x, grid, gen)
        assert particle_functional_u(traj, psi, spec.weights, grid) == pytest.approx(u[i], abs=1e-10)


def test_jacobi_backends():
    gen = RngStream(7).generator()
    a = gen.standard_normal((50, 5, 5))
    batch = a + np.swapaxes(a, 1, 2)
    ref = np.linalg.eigvalsh(batch)
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            vals, ok = kernels.jacobi_eigenvalues(batch)
        assert np.all(ok)
        assert np.allclose(vals, ref, atol=1e-10)


def test_unknown_backend():
    with pytest.raises(ValueError):
        with kernels.use_backend("fortran"):
            pass
    assert kernels.BACKEND in kernels.available_backends()


def test_dyson_spec_rejects_bad_shape():
    with pytest.raises(ValueError):
        DynamicsSpec(Dyson(3), ambient_dim=2, block_count=3, weights=(1.0, 1.0, 1.0))
