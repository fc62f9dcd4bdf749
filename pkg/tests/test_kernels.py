import math

import numpy as np
import pytest

from ldjump.kernels import (
    BoxKernel,
    EnvelopeError,
    GeneralizedGaussianKernel,
    KernelError,
    TabulatedKernel,
    standard_gaussian,
)


def quad_oracle(fn, lo, hi, n=200001):
    """Independent dense-trapezoid reference used to freeze expected values."""
    x = np.linspace(lo, hi, n)
    return np.trapezoid(fn(x), x)


def test_box_eval_inside_and_outside(box1):
    assert box1.eval(np.array([0.0])) == 1.0
    assert box1.eval(np.array([0.7])) == 0.0


def test_gaussian_density_at_zero(gauss1):
    # oracle: normalize exp(-z^2/2) by dense quadrature
    mass = quad_oracle(lambda z: np.exp(-0.5 * z * z), -12, 12)
    assert abs(gauss1.eval(np.array([0.0])) - 1.0 / mass) < 1e-10
    assert abs(gauss1.eval(np.array([0.0])) - 0.39894) < 1e-5


@pytest.mark.parametrize("name", ["gauss1", "box1", "box2", "shifted_table"])
def test_exp_moment_at_zero_is_one(name, request):
    kern = request.getfixturevalue(name)
    assert abs(kern.exp_moment(np.zeros(kern.dim)) - 1.0) < 1e-10


def test_exp_moment_gaussian_closed_form(gauss1):
    # closed form e^{lam^2/2}, cross-checked by an independent quadrature
    val = gauss1.exp_moment(np.array([1.0]))
    assert abs(val - math.exp(0.5)) < 1e-10
    mass = quad_oracle(lambda z: np.exp(-0.5 * z * z), -14, 14)
    oracle = quad_oracle(lambda z: np.exp(-0.5 * z * z - z), -14, 14) / mass
    assert abs(val - oracle) < 1e-9


def test_exp_moment_box_analytic(box1):
    # integral of e^{-lam z} over [-1/2, 1/2] = 2 sinh(lam/2)/lam
    val = box1.exp_moment(np.array([2.0]))
    assert abs(val - math.sinh(1.0)) < 1e-9


def test_exp_moment_rejects_nonfinite(gauss1):
    with pytest.raises(KernelError):
        gauss1.exp_moment(np.array([np.inf]))


@pytest.mark.parametrize("name", ["gauss1", "box1", "shifted_table"])
def test_exp_moment_gradient_matches_fd(name, request):
    kern = request.getfixturevalue(name)
    rng = np.random.default_rng(10)
    h = 1e-5
    for _ in range(20):
        lam = rng.uniform(-3, 3, size=kern.dim)
        grad = kern.exp_moment_grad(lam)
        for i in range(kern.dim):
            e = np.zeros(kern.dim)
            e[i] = h
            fd = (kern.exp_moment(lam + e) - kern.exp_moment(lam - e)) / (2 * h)
            assert abs(grad[i] - fd) <= 1e-6 * max(1.0, abs(fd))


def test_exp_moment_hessian_matches_fd(gauss2):
    rng = np.random.default_rng(11)
    h = 1e-4
    for _ in range(10):
        lam = rng.uniform(-2, 2, size=2)
        hess = gauss2.exp_moment_hess(lam)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (
                gauss2.exp_moment_grad(lam + e) - gauss2.exp_moment_grad(lam - e)
            ) / (2 * h)
            assert np.allclose(hess[:, i], fd, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("name", ["gauss1", "box1", "shifted_table"])
def test_exp_moment_log_convex_on_lines(name, request):
    kern = request.getfixturevalue(name)
    rng = np.random.default_rng(12)
    for _ in range(20):
        a = rng.uniform(-2, 2, size=kern.dim)
        b = rng.uniform(-2, 2, size=kern.dim)
        mid = math.log(kern.exp_moment(0.5 * (a + b)))
        ends = 0.5 * (
            math.log(kern.exp_moment(a)) + math.log(kern.exp_moment(b))
        )
        assert mid <= ends + 1e-10


def test_halfspace_symmetric_kernels(gauss1, box2):
    assert abs(gauss1.halfspace_mass(np.array([1.0])) - 0.5) < 1e-8
    assert abs(box2.halfspace_mass(np.array([1.0, 0.0])) - 0.5) < 1e-8


def test_halfspace_one_sided_table():
    z = np.linspace(0.05, 4.0, 400)
    kern = TabulatedKernel(z, np.exp(-z), envelope=(4.0, 0.3, 1.5))
    assert abs(kern.halfspace_mass(np.array([1.0])) - 1.0) < 1e-8
    assert kern.halfspace_mass(np.array([-1.0])) < 1e-8


def test_halfspace_complement_sums_to_one(gauss2):
    rng = np.random.default_rng(13)
    a = rng.normal(size=2)
    a /= np.linalg.norm(a)
    total = gauss2.halfspace_mass(a) + gauss2.halfspace_mass(-a)
    assert abs(total - 1.0) < 5e-3


def test_halfspace_rejects_zero_vector(gauss1):
    with pytest.raises(KernelError):
        gauss1.halfspace_mass(np.array([0.0]))


def test_c0_certificate_positive(gauss2):
    assert gauss2.min_halfspace_mass() > 0.1


def test_sampler_box_mean(box1):
    rng = np.random.default_rng(100)
    z = box1.sample(rng, 1_000_000)
    assert abs(z.mean()) < 3e-3


def test_sampler_gaussian_variance(gauss1):
    rng = np.random.default_rng(101)
    z = gauss1.sample(rng, 1_000_000)[:, 0]
    # second moment from the quadrature oracle
    mass = quad_oracle(lambda t: np.exp(-0.5 * t * t), -12, 12)
    second = quad_oracle(lambda t: t * t * np.exp(-0.5 * t * t), -12, 12) / mass
    assert abs(z.var() - second) < 1e-2


@pytest.mark.parametrize("name", ["gauss1", "box1", "shifted_table"])
def test_sampler_kolmogorov_distance(name, request):
    kern = request.getfixturevalue(name)
    if kern.dim != 1:
        pytest.skip("one-dimensional check")
    rng = np.random.default_rng(102)
    z = np.sort(kern.sample(rng, 1_000_000)[:, 0])
    # quadrature CDF oracle on a fine grid
    r = kern.truncation_radius(0.0)
    grid = np.linspace(-r, r, 200001)
    dens = kern.density(grid[:, None])
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    emp = (np.arange(z.size) + 0.5) / z.size
    ks = np.max(np.abs(np.interp(z, grid, cdf) - emp))
    assert ks < 0.005


@pytest.mark.parametrize("name", ["gauss1", "box1", "shifted_table"])
def test_sampler_moments_within_four_se(name, request):
    kern = request.getfixturevalue(name)
    rng = np.random.default_rng(103)
    n = 1_000_000
    z = kern.sample(rng, n)[:, 0]
    mean_ref = kern.mean()[0]
    second_ref = kern.covariance()[0, 0]
    se1 = z.std() / math.sqrt(n)
    assert abs(z.mean() - mean_ref) < 4 * se1
    se2 = (z**2).std() / math.sqrt(n)
    assert abs((z**2).mean() - second_ref) < 4 * se2


@pytest.mark.parametrize(
    "maker,lam",
    [
        (lambda: standard_gaussian(1), 1.0),
        (lambda: BoxKernel(1), 2.0),
        (lambda: GeneralizedGaussianKernel(1, k=1.0, p=3.0), 1.5),
    ],
)
def test_tilted_sampler_matches_tilted_cdf(maker, lam):
    kern = maker()
    tilt = np.array([lam])
    rng = np.random.default_rng(104)
    z = np.sort(kern.sample_tilted(rng, tilt, 400_000)[:, 0])
    r = kern.truncation_radius(abs(lam))
    grid = np.linspace(-r, r, 200001)
    dens = kern.density(grid[:, None]) * np.exp(-lam * grid)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    emp = (np.arange(z.size) + 0.5) / z.size
    ks = np.max(np.abs(np.interp(z, grid, cdf) - emp))
    assert ks < 0.005


def test_tilted_gaussian_2d_mean(gauss2):
    rng = np.random.default_rng(105)
    tilt = np.array([1.0, -0.5])
    z = gauss2.sample_tilted(rng, tilt, 200_000)
    assert np.allclose(z.mean(axis=0), -tilt, atol=0.01)


def test_envelope_validation_rejects_bad_table():
    z = np.linspace(-1, 1, 101)
    vals = np.ones_like(z)
    with pytest.raises(EnvelopeError):
        TabulatedKernel(z, vals, envelope=(0.1, 5.0, 2.0))


def test_table_requires_monotone_grid():
    with pytest.raises(KernelError):
        TabulatedKernel([0.0, 0.0, 1.0], [1.0, 1.0, 1.0], envelope=(2.0, 1.0, 2.0))


def test_generalized_gaussian_rejects_bad_p():
    with pytest.raises(KernelError):
        GeneralizedGaussianKernel(1, k=1.0, p=1.0)


def test_validate_report(gauss1):
    report = gauss1.validate()
    assert report["ok"]
    assert abs(report["normalization"] - 1.0) < 1e-8
    assert report["c0_certificate"] > 0.4
