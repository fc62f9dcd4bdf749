
import math

import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad

from ldjump.environment import RateField
from ldjump.hamiltonian import Hamiltonian
from ldjump.path_rate import (
    Path,
    effective_flow,
    path_distance,
    rate,
    velocity_bound,
)

# dense grid-search conjugate of the unit-rate Gaussian Hamiltonian
_LAM_GRID = np.arange(-6.0, 6.0, 2e-5)
_EXP_GRID = np.exp(_LAM_GRID**2 / 2) - 1.0


def oracle_l(zeta, scale=1.0):
    """Grid-search conjugate of scale*(e^{lam^2/2}-1), independent of the library."""
    return float(np.max(_LAM_GRID * zeta - scale * _EXP_GRID))


@pytest.fixture(scope="module")
def ham_gauss(gauss1):
    return Hamiltonian(gauss1, RateField.constant(1.0))


def test_path_validation():
    with pytest.raises(ValueError):
        Path(np.array([0.0, 0.0, 1.0]), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        Path(np.array([0.0, 1.0]), np.array([[0.0], [np.inf]]))


def test_rate_zero_at_drift_velocity(ham_gauss):
    p = Path(np.array([0.0, 1.0]), np.array([[0.0], [0.0]]))
    assert rate(p, ham_gauss).value < 1e-10


def test_rate_unit_line(ham_gauss):
    p = Path(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]))
    assert abs(rate(p, ham_gauss).value - oracle_l(1.0)) < 1e-4


def test_rate_slow_regime_against_quadrature_oracle(gauss1):
    # straight path 0 -> 1 in unit time through the rate 1 + x^2
    fld = RateField.slow(
        lambda x, y: 1.0
        + 0.5 * (np.asarray(x)[..., 0] ** 2 + np.asarray(y)[..., 0] ** 2),
        0.9,
        5.0,
        name="1+x^2",
    )
    ham = Hamiltonian(gauss1, fld)
    p = Path(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]))
    got = rate(p, ham).value

    def integrand(x):
        return oracle_l(1.0, scale=1.0 + x * x)

    oracle, err = scipy_quad(integrand, 0.0, 1.0, limit=100)
    assert err < 1e-6
    assert abs(got - oracle) < 1e-4


def test_rate_invariant_under_refinement(ham_gauss, gauss1, slow_field):
    p = Path(np.array([0.0, 0.5, 1.0]), np.array([[0.0], [0.8], [1.0]]))
    base = rate(p, ham_gauss).value
    refined = rate(p.refined(3), ham_gauss).value
    assert abs(refined - base) < 1e-12  # exact up to breakpoint round-off
    ham_slow = Hamiltonian(gauss1, slow_field)
    v1 = rate(p, ham_slow).value
    v2 = rate(p.refined(2), ham_slow).value
    assert abs(v1 - v2) < 1e-6 * max(1.0, abs(v1))


def test_rate_positive_iff_off_drift(ham_gauss):
    p = Path(np.array([0.0, 1.0, 2.0]), np.array([[0.0], [0.0], [0.5]]))
    rep = rate(p, ham_gauss)
    assert rep.segment_values[0] < 1e-12
    assert rep.segment_values[1] > 1e-3


def test_velocity_bound_certificate(ham_gauss):
    level = 2.0
    vbound = velocity_bound(ham_gauss, level)
    # any unit-time straight segment with rate below the level is slower
    rng = np.random.default_rng(41)
    for _ in range(20):
        v = rng.uniform(-vbound * 1.5, vbound * 1.5, size=1)
        p = Path(np.array([0.0, 1.0]), np.stack([np.zeros(1), v]))
        if rate(p, ham_gauss).value <= level:
            assert abs(v[0]) <= vbound


def test_distance_identical_paths_zero():
    p = Path(np.array([0.0, 0.3, 1.0]), np.array([[0.0], [0.4], [1.0]]))
    assert path_distance(p, p).value == 0.0


def test_distance_bounded_by_sup():
    f = Path(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]))
    g = Path(np.array([0.0, 0.5, 1.0]), np.array([[0.0], [0.7], [1.0]]))
    rep = path_distance(f, g)
    assert rep.value <= rep.sup_identity + 1e-12


def test_distance_two_knot_instance_matches_exhaustive():
    # time-shifted step-like pair; a time change genuinely beats the sup norm
    f = Path(np.array([0.0, 0.45, 0.55, 1.0]), np.array([[0.0], [0.0], [1.0], [1.0]]))
    g = Path(np.array([0.0, 0.35, 0.45, 1.0]), np.array([[0.0], [0.0], [1.0], [1.0]]))
    rep = path_distance(f, g, knots=2, value_grid=201)

    # independent exhaustive oracle over the identical two-knot family:
    # pi piecewise linear through (0.5, s) with s on the same value grid
    sv = np.union1d(np.linspace(0.0, 1.0, 201), g.times)

    def cost(s):
        knots = np.array([0.0, 0.5, 1.0])
        vals = np.array([0.0, s, 1.0])
        slopes = np.diff(vals) / np.diff(knots)
        if np.any(slopes <= 0):
            return math.inf
        fine = np.union1d(
            np.union1d(f.times, np.interp(g.times, vals, knots)),
            np.linspace(0.0, 1.0, 4001),
        )
        pi = np.interp(fine, knots, vals)
        sup = np.max(np.abs(f.eval(fine)[:, 0] - g.eval(pi)[:, 0]))
        return max(sup, np.max(np.abs(np.log(slopes))))

    best = min(cost(s) for s in sv if 0.0 < s < 1.0)
    assert abs(rep.value - best) < 1e-9
    assert rep.value < rep.sup_identity  # the time change genuinely helps


def test_distance_requires_equal_horizons():
    f = Path(np.array([0.0, 1.0]), np.zeros((2, 1)))
    g = Path(np.array([0.0, 2.0]), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        path_distance(f, g)


def test_flow_constant_symmetric_is_still(ham_gauss):
    p = effective_flow(ham_gauss, np.array([0.7]), 1.0, steps=64)
    assert np.abs(p.points - 0.7).max() < 1e-12


def test_flow_constant_rate_linear_motion(shifted_table):
    ham = Hamiltonian(shifted_table, RateField.constant(2.0))
    m = shifted_table.mean()[0]
    p = effective_flow(ham, np.array([0.5]), 1.0, steps=128)
    target = 0.5 - 2.0 * m * p.times
    assert np.abs(p.points[:, 0] - target).max() < 1e-8


def test_flow_slow_self_convergence(shifted_table, slow_field):
    ham = Hamiltonian(shifted_table, slow_field)
    coarse = effective_flow(ham, np.zeros(1), 1.0, steps=64)
    fine = effective_flow(ham, np.zeros(1), 1.0, steps=512)
    err = np.abs(coarse.eval(coarse.times) - fine.eval(coarse.times)).max()
    assert err < 1e-6


def test_path_file_roundtrip(tmp_path):
    p = Path(np.array([0.0, 0.25, 1.0]), np.array([[0.0, 1.0], [0.5, 0.25], [1.0, -1.0]]))
    fname = tmp_path / "path.txt"
    p.to_file(fname)
    q = Path.from_file(fname)
    assert np.array_equal(p.times, q.times)
    assert np.array_equal(p.points, q.points)
