import math

import numpy as np
import pytest
from scipy import integrate, stats

from occlab.rng import RngStream
from occlab.samplers import (
    Box,
    ConstantDensity,
    IntensityMeasure,
    SamplerError,
    SineSquaredDensity,
    SymmetricMatrix,
    TimeGrid,
    cms_transform,
    euler_maruyama_divergence_form,
    fbm_increments,
    sample_fbm_path,
    sample_goe_increment,
    sample_poisson_process,
    sample_stable_increments,
    symmetric_eigenvalues,
)


def counts(nu, n, seed):
    root = RngStream(seed)
    return np.array([len(sample_poisson_process(nu, root.substream(i).generator())) for i in range(n)])


def test_stream_determinism():
    a = RngStream(5, 3).generator().random(10)
    b = RngStream(5, 3).generator().random(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RngStream(5, 4).generator().random(10))


def test_substreams_distinct():
    root = RngStream(1)
    idx = {root.substream(i).stream_index for i in range(1000)}
    assert len(idx) == 1000


def test_substreams_uncorrelated():
    root = RngStream(11)
    x = root.substream(1).generator().standard_normal(20000)
    y = root.substream(2).generator().standard_normal(20000)
    assert abs(np.corrcoef(x, y)[0, 1]) <= 3 / math.sqrt(20000)


def test_density_bounds_checked():
    with pytest.raises(ValueError):
        IntensityMeasure(SineSquaredDensity(1.0, 0.5), 1.0, 1.2, Box([0.0], [2.0]))
    with pytest.raises(ValueError):
        IntensityMeasure.constant(0.0, Box([0.0], [1.0]))


def test_sine_density_mass_matches_quadrature():
    nu = IntensityMeasure(SineSquaredDensity(1.0, 0.5), 1.0, 1.5, Box([0.0], [2.0]))
    ref, _ = integrate.quad(lambda x: 1 + 0.5 * math.sin(math.pi * x) ** 2, 0, 2)
    assert nu.total_mass() == pytest.approx(ref, abs=1e-12)


def test_zero_volume_window_rejected():
    nu = IntensityMeasure.constant(1.0, Box([0.0, 0.0], [1.0, 0.0]))
    with pytest.raises(ValueError):
        sample_poisson_process(nu, RngStream(0).generator())


def test_poisson_constant_density_mean():
    c = counts(IntensityMeasure.constant(2.0, Box([0.0], [1.0])), 100_000, 1)
    se = c.std(ddof=1) / math.sqrt(c.size)
    assert abs(c.mean() - 2.0) <= 3 * se


def test_poisson_thinning_mean_matches_quadrature():
    nu = IntensityMeasure(SineSquaredDensity(1.0, 0.5), 1.0, 1.5, Box([0.0], [2.0]))
    ref, _ = integrate.quad(lambda x: 1 + 0.5 * math.sin(math.pi * x) ** 2, 0, 2)
    c = counts(nu, 40_000, 2)
    se = c.std(ddof=1) / math.sqrt(c.size)
    assert abs(c.mean() - ref) <= 3 * se


def test_poisson_mean_equals_variance_and_disjoint_counts_uncorrelated():
    nu = IntensityMeasure(SineSquaredDensity(1.0, 0.5), 1.0, 1.5, Box([0.0, 0.0], [2.0, 1.0]))
    left, right = Box([0.0, 0.0], [0.7, 1.0]), Box([0.7, 0.0], [2.0, 1.0])
    root = RngStream(3)
    n = 20_000
    cl, cr = np.empty(n), np.empty(n)
    for i in range(n):
        ps = sample_poisson_process(nu, root.substream(i).generator())
        cl[i], cr[i] = ps.count_in(left), ps.count_in(right)
    mean, var = cl.mean(), cl.var(ddof=1)
    # SE of mean - variance for Poisson counts: Var(mean) ~ lam/n, Var(s^2) ~ (lam + 2 lam^2)/n
    se = math.sqrt((mean + mean + 2 * mean**2) / n)
    assert abs(mean - var) <= 3 * se
    assert abs(np.corrcoef(cl, cr)[0, 1]) <= 3 / math.sqrt(n)


def test_alpha_validation():
    for bad in (0.0, -1.0, 2.5):
        with pytest.raises(ValueError):
            sample_stable_increments(bad, 1.0, 10, RngStream(0).generator())


def test_stable_alpha2_variance():
    x = sample_stable_increments(2.0, 1.0, 1_000_000, RngStream(4).generator())
    var = x.var(ddof=1)
    se = math.sqrt((np.mean(x**4) - var**2) / x.size)
    assert abs(var - 2.0) <= 3 * se


def test_stable_cauchy_quartiles():
    n = 400_000
    x = sample_stable_increments(1.0, 1.0, n, RngStream(5).generator())
    # Order-statistic SE: sqrt(p(1-p)/n) / f(q); Cauchy density f(0) = 1/pi, f(1) = 1/(2 pi)
    se_med = math.sqrt(0.25 / n) * math.pi
    se_q3 = math.sqrt(0.1875 / n) * 2 * math.pi
    assert abs(np.median(x)) <= 3 * se_med
    assert abs(np.quantile(x, 0.75) - 1.0) <= 3 * se_q3


def test_cms_alpha_one_branch_is_continuous():
    u = np.linspace(-1.4, 1.4, 9)
    w = np.full(9, 0.7)
    near = cms_transform(1.0 + 1e-7, u, w)
    assert np.allclose(near, np.tan(u), rtol=1e-4, atol=1e-5)


@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.5, 2.0])
def test_stable_characteristic_function(alpha):
    n = 200_000
    x = sample_stable_increments(alpha, 1.0, n, RngStream(6).substream(int(alpha * 10)).generator())
    for theta in (0.5, 1.0, 2.0):
        emp = np.mean(np.cos(theta * x))
        assert abs(emp - math.exp(-abs(theta) ** alpha)) <= 4 / math.sqrt(n)


def test_stable_time_scaling():
    n = 200_000
    x = sample_stable_increments(1.5, 2.0, n, RngStream(7).generator())
    for theta in (0.5, 1.0, 2.0):
        assert abs(np.mean(np.cos(theta * x)) - math.exp(-2.0 * theta**1.5)) <= 4 / math.sqrt(n)


def test_fbm_half_has_independent_increments():
    gen = RngStream(8).generator()
    inc = fbm_increments(0.5, 16, 1 / 16, 20_000, gen)
    rho = np.corrcoef(inc[:, 3], inc[:, 4])[0, 1]
    assert abs(rho) <= 3 / math.sqrt(inc.shape[0])


def test_fbm_terminal_variance_h07():
    gen = RngStream(9).generator()
    b1 = fbm_increments(0.7, 64, 1 / 64, 100_000, gen).sum(axis=1)
    var = b1.var(ddof=1)
    se = var * math.sqrt(2 / (b1.size - 1))
    assert abs(var - 1.0) <= 3 * se


def test_fbm_cross_covariance_h03():
    gen = RngStream(10).generator()
    inc = fbm_increments(0.3, 32, 1 / 32, 100_000, gen)
    bs, bt = inc[:, :16].sum(axis=1), inc.sum(axis=1)
    prod = bs * bt
    target = 0.5 * (0.5**0.6 + 1.0 - 0.5**0.6)
    assert abs(prod.mean() - target) <= 3 * prod.std(ddof=1) / math.sqrt(prod.size)


def test_fbm_covariance_matrix_16_points():
    n = 100_000
    gen = RngStream(12).generator()
    paths = np.cumsum(fbm_increments(0.7, 16, 1 / 16, n, gen), axis=1)
    t = np.arange(1, 17) / 16
    exact = 0.5 * (t[:, None] ** 1.4 + t[None, :] ** 1.4 - np.abs(t[:, None] - t[None, :]) ** 1.4)
    prod = paths[:, :, None] * paths[:, None, :]
    emp = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(emp - exact) <= 3.5 * se)


def test_fbm_methods_agree_in_law():
    grid = TimeGrid(1.0, 1 / 8)
    for method in ("circulant", "cholesky"):
        path = sample_fbm_path(0.3, grid, RngStream(13).generator(), method)
        assert path.shape == (9,) and path[0] == 0.0
    gen = RngStream(14).generator()
    a = fbm_increments(0.3, 8, 1 / 8, 40_000, gen, "circulant").sum(axis=1)
    b = fbm_increments(0.3, 8, 1 / 8, 40_000, gen, "cholesky").sum(axis=1)
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_goe_scalar_case():
    x = np.array([sample_goe_increment(1, 0.5, RngStream(15).substream(i).generator()).entries[0] for i in range(20_000)])
    var = x.var(ddof=1)
    assert abs(var - 0.5) <= 3 * var * math.sqrt(2 / (x.size - 1))


def test_goe_entries_and_symmetry():
    gen = RngStream(16).generator()
    draws = np.array([sample_goe_increment(3, 2.0, gen).entries for _ in range(50_000)])
    var = draws.var(axis=0, ddof=1)
    assert np.all(np.abs(var - 2.0) <= 3 * var * math.sqrt(2 / (len(draws) - 1)))
    m = sample_goe_increment(3, 2.0, gen).dense()
    assert np.array_equal(m, m.T)


def test_goe_convolution():
    gen = RngStream(17).generator()
    n = 50_000
    s = np.array([(sample_goe_increment(2, 0.3, gen) + sample_goe_increment(2, 0.7, gen)).entries for _ in range(n)])
    var = s.var(axis=0, ddof=1)
    assert np.all(np.abs(var - 1.0) <= 3 * var * math.sqrt(2 / (n - 1)))


def test_em_constant_coefficient_is_scaled_brownian():
    c = 0.8
    grid = TimeGrid(2.0, 0.01)
    gen_a, gen_b = RngStream(18).generator(), RngStream(18).generator()
    path = euler_maruyama_divergence_form(lambda x: c, lambda x: 0.0, 0.3, grid, gen_a)
    z = gen_b.standard_normal(grid.n_steps)
    expected = 0.3 + math.sqrt(2 * c) * np.concatenate([[0.0], np.cumsum(math.sqrt(grid.h) * z)])
    assert np.allclose(path, expected, atol=1e-12)


def test_em_half_coefficient_matches_standard_brownian():
    grid = TimeGrid(1.0, 0.05)
    root = RngStream(19)
    ends = np.array(
        [euler_maruyama_divergence_form(lambda x: 0.5, lambda x: 0.0, 0.0, grid, root.substream(i).generator())[-1] for i in range(4000)]
    )
    stat = stats.kstest(ends, "norm", args=(0.0, 1.0)).statistic
    assert stat < 1.63 / math.sqrt(len(ends))


@pytest.mark.slow
def test_em_sine_coefficient_self_refinement():
    def a(x):
        return 1 + 0.5 * np.sin(x) ** 2

    def ap(x):
        return 0.5 * np.sin(2 * x)

    def terminal(dt, n, seed):
        # Vectorized Euler-Maruyama, independent of the scalar sampler under test.
        gen = RngStream(seed).generator()
        x = np.zeros(n)
        steps = int(round(1.0 / dt))
        for _ in range(steps):
            x = x + ap(x) * dt + np.sqrt(2 * a(x) * dt) * gen.standard_normal(n)
        return x

    n = 2000
    root = RngStream(20)
    coarse = np.array(
        [euler_maruyama_divergence_form(a, ap, 0.0, TimeGrid(1.0, 1e-3), root.substream(i).generator())[-1] for i in range(n)]
    )
    fine = terminal(1e-4, 20_000, 21)
    se_mean = math.hypot(coarse.std(ddof=1) / math.sqrt(n), fine.std(ddof=1) / math.sqrt(fine.size))
    assert abs(coarse.mean() - fine.mean()) <= 3 * se_mean
    v1, v2 = coarse.var(ddof=1), fine.var(ddof=1)
    se_var = math.hypot(v1 * math.sqrt(2 / n), v2 * math.sqrt(2 / fine.size))
    assert abs(v1 - v2) <= 3 * se_var


def test_em_ellipticity_guard():
    from occlab.samplers import EllipticityError

    with pytest.raises(EllipticityError):
        euler_maruyama_divergence_form(lambda x: 5.0, lambda x: 0.0, 0.0, TimeGrid(1.0, 0.1), RngStream(0).generator(), eta=0.5)


def test_eigenvalues_simple_cases():
    assert np.allclose(symmetric_eigenvalues(np.diag([3.0, 1.0, 2.0])), [1, 2, 3], atol=1e-14)
    assert np.allclose(symmetric_eigenvalues(np.array([[0.0, 1.0], [1.0, 0.0]])), [-1, 1], atol=1e-14)


def test_eigenvalues_trace_and_frobenius():
    a = RngStream(22).generator().standard_normal((6, 6))
    m = a + a.T
    lam = symmetric_eigenvalues(SymmetricMatrix.from_dense(m))
    assert np.all(np.diff(lam) >= 0)
    assert abs(lam.sum() - np.trace(m)) <= 1e-10
    assert abs((lam**2).sum() - np.sum(m * m)) <= 1e-10


def test_eigenvalues_reject_nonsymmetric():
    with pytest.raises(ValueError):
        symmetric_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_time_grid_ends_exactly():
    g = TimeGrid(1.0, 0.3)
    assert g.n_steps == 4 and g.h <= 0.3 and g.times[-1] == 1.0
    assert g.refined().n_steps == 8
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.1)


def test_sampler_error_hierarchy():
    from occlab.samplers import ConvergenceError, EllipticityError

    assert issubclass(EllipticityError, SamplerError) and issubclass(ConvergenceError, SamplerError)


def test_constant_density_integral():
    assert ConstantDensity(2.5).integrate(Box([0.0, 0.0], [2.0, 3.0])) == 15.0
