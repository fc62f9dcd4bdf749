import numpy as np
import pytest

from ldjump.environment import RateField
from ldjump.torus import (
    SkewedOperatorMatrix,
    TorusGrid,
    assemble,
    effective_coeffs,
    principal_eig,
    theta_grad,
    theta_grad_fd,
    theta_hess,
    theta_hess_fd,
)


def direct_killing_oracle(kernel, frozen, x, n_quad=100001):
    """G(x) by an independent line quadrature over the real axis."""
    lo, hi = kernel.quad_bounds(0.0)
    y = np.linspace(x - hi, x - lo, n_quad)
    dens = kernel.density((x - y)[:, None])
    lam = frozen(np.full((n_quad, 1), x), y[:, None] % 1.0)
    return np.trapezoid(dens * lam, y)


def test_rowsums_constant_field_at_zero(gauss1, const_field):
    grid = TorusGrid(1, 32)
    op = assemble(grid, gauss1, const_field.freeze(), np.zeros(1))
    rows = op.K.sum(axis=1)
    assert np.abs(rows - 1.0).max() < 1e-8
    assert np.abs(op.G - 1.0).max() < 1e-8


def test_rowsums_match_exp_moment(gauss1):
    fld = RateField.constant(2.5)
    grid = TorusGrid(1, 32)
    for lam in ([0.7], [-1.3]):
        op = assemble(grid, gauss1, fld.freeze(), np.array(lam))
        rows = op.K.sum(axis=1)
        target = 2.5 * gauss1.exp_moment(np.array(lam))
        assert np.abs(rows - target).max() < 1e-8


def test_killing_two_ways(gauss1, cosine_field):
    # matrix row sums against the direct quadrature of the killing integral
    grid = TorusGrid(1, 8)
    op = assemble(grid, gauss1, cosine_field.freeze(), np.zeros(1))
    frozen = cosine_field.freeze()
    for i, x in enumerate(np.arange(8) / 8):
        oracle = direct_killing_oracle(gauss1, frozen, x)
        assert abs(op.G[i] - oracle) < 1e-8


def test_matrix_nonnegative(gauss1, cosine_field):
    grid = TorusGrid(1, 16)
    op = assemble(grid, gauss1, cosine_field.freeze(), np.array([1.5]))
    assert op.K.min() >= 0.0


def test_principal_constant_field_closed_form(gauss1, const_field):
    grid = TorusGrid(1, 64)
    for lam in (-2.0, -1.0, 1.0, 2.0):
        op = assemble(grid, gauss1, const_field.freeze(), np.array([lam]))
        res = principal_eig(op)
        assert res.in_gamma
        assert abs(res.theta - (np.exp(lam**2 / 2) - 1.0)) < 1e-6
        assert np.abs(res.u - 1.0).max() < 1e-8
        assert np.abs(res.u_star - 1.0).max() < 1e-8


def test_theta_zero_and_flat_eigenfunction(gauss1, periodic_fields):
    grid = TorusGrid(1, 32)
    for fld in periodic_fields:
        op = assemble(grid, gauss1, fld.freeze(), np.zeros(1))
        res = principal_eig(op)
        assert res.in_gamma
        assert abs(res.theta) < 1e-10
        assert np.abs(res.u - 1.0).max() < 1e-8


def test_positivity_of_iteration_matrix(gauss1, cosine_field):
    grid = TorusGrid(1, 16)
    op = assemble(grid, gauss1, cosine_field.freeze(), np.array([0.8]))
    rng = np.random.default_rng(4)
    v = rng.uniform(0.1, 1.0, size=16)
    out = op.K @ v + (op.g_max - op.G) * v
    assert out.min() > 0.0


def test_normalizations(gauss1, cosine_field):
    grid = TorusGrid(1, 32)
    op = assemble(grid, gauss1, cosine_field.freeze(), np.array([0.9]))
    res = principal_eig(op)
    assert abs(op.cellvol * res.u.sum() - 1.0) < 1e-12
    assert abs(op.cellvol * float(res.u @ res.u_star) - 1.0) < 1e-12
    assert res.u.min() > 0
    assert res.u_star.min() > 0


def test_spectral_gap_proxy_inside(gauss1, cosine_field):
    grid = TorusGrid(1, 32)
    op = assemble(grid, gauss1, cosine_field.freeze(), np.array([0.5]))
    res = principal_eig(op)
    assert res.conv_ratio < 0.9


def test_grid_convergence_box_kernel(box1, cosine_field):
    thetas = {}
    for n in (16, 32, 64):
        op = assemble(TorusGrid(1, n), box1, cosine_field.freeze(), np.array([1.0]))
        thetas[n] = principal_eig(op).theta
    assert abs(thetas[64] - thetas[32]) < abs(thetas[32] - thetas[16])


def test_gamma_gap_membership(gap_scenario):
    sc = gap_scenario
    assert sc.report["in_gamma_at_zero"]
    assert not sc.report["in_gamma_at_lambda0"]
    assert np.linalg.norm(sc.lambda0) <= 20.0


def test_theta_grad_zero_for_symmetric(gauss1, const_field):
    grid = TorusGrid(1, 32)
    op = assemble(grid, gauss1, const_field.freeze(), np.zeros(1))
    res = principal_eig(op)
    assert np.abs(theta_grad(op, res)).max() < 1e-8


def test_theta_grad_constant_matches_moment(gauss1):
    fld = RateField.constant(2.0)
    grid = TorusGrid(1, 64)
    lam = np.array([1.0])
    op = assemble(grid, gauss1, fld.freeze(), lam)
    res = principal_eig(op)
    assert np.allclose(theta_grad(op, res), 2.0 * gauss1.exp_moment_grad(lam), atol=1e-6)


def test_theta_grad_matches_fd(gauss1, cosine_field):
    grid = TorusGrid(1, 32)
    lam = np.array([0.6])
    op = assemble(grid, gauss1, cosine_field.freeze(), lam)
    res = principal_eig(op)
    g = theta_grad(op, res)
    g_fd = theta_grad_fd(grid, gauss1, cosine_field.freeze(), lam, h=1e-4)
    assert np.abs(g - g_fd).max() < 1e-5


def test_theta_grad_refuses_flat_branch(gap_scenario):
    grid = TorusGrid(1, 64)
    op = assemble(grid, gap_scenario.kernel, gap_scenario.field.freeze(), gap_scenario.lambda0)
    res = principal_eig(op)
    with pytest.raises(ValueError):
        theta_grad(op, res)


def test_hessian_gaussian_2d_identity(gauss2, const_field):
    grid = TorusGrid(2, 16)
    op = assemble(grid, gauss2, const_field.freeze(), np.zeros(2))
    res = principal_eig(op)
    hess = theta_hess(op, res)
    assert np.abs(hess - np.eye(2)).max() < 1e-5


def test_hessian_positive_definite_at_zero(gauss1, periodic_fields):
    grid = TorusGrid(1, 32)
    for fld in periodic_fields:
        op = assemble(grid, gauss1, fld.freeze(), np.zeros(1))
        res = principal_eig(op)
        eig = np.linalg.eigvalsh(theta_hess(op, res))
        assert eig.min() > 0


def test_hessian_matches_fd(gauss1, cosine_field):
    grid = TorusGrid(1, 32)
    lam = np.array([0.4])
    op = assemble(grid, gauss1, cosine_field.freeze(), lam)
    res = principal_eig(op)
    h = theta_hess(op, res)
    h_fd = theta_hess_fd(grid, gauss1, cosine_field.freeze(), lam, h=1e-3)
    assert np.abs(h - h_fd).max() / np.abs(h_fd).max() < 1e-4


def test_effective_drift_zero_for_symmetric(gauss1, cosine_field):
    grid = TorusGrid(1, 32)
    op = assemble(grid, gauss1, cosine_field.freeze(), np.zeros(1))
    res = principal_eig(op)
    eff = effective_coeffs(op, res)
    # difference-kernel field with a symmetric kernel has no drift
    assert np.abs(eff.b).max() < 1e-8


def test_effective_drift_asymmetric_kernel(shifted_table):
    # constant rate, kernel mean m: the gradient at zero is -Lambda*m, so the
    # reported drift coefficient is +Lambda*m (the first-moment oracle)
    fld = RateField.constant(1.5)
    grid = TorusGrid(1, 64)
    op = assemble(grid, shifted_table, fld.freeze(), np.zeros(1))
    res = principal_eig(op)
    eff = effective_coeffs(op, res)
    m = shifted_table.mean()[0]
    assert abs(eff.b[0] - 1.5 * m) < 1e-6
    assert np.allclose(eff.b, -theta_grad(op, res), atol=1e-12)


def test_effective_diffusion_identity(gauss1, periodic_fields):
    grid = TorusGrid(1, 32)
    for fld in periodic_fields[:3]:
        op = assemble(grid, gauss1, fld.freeze(), np.zeros(1))
        res = principal_eig(op)
        eff = effective_coeffs(op, res)
        gap = np.abs(eff.theta_matrix + eff.theta_matrix.T - eff.hessian).max()
        assert gap < 1e-4


def test_exponential_growth_along_rays(gauss2, periodic_fields):
    # log(theta + g_max) grows linearly in the tilt radius with positive slope
    grid = TorusGrid(2, 12)

    def two_d(xi, eta):
        s = np.sum(xi - eta, axis=-1)
        return 1.5 + 0.5 * np.cos(2 * np.pi * s)

    fld = RateField.periodic(two_d, 1.0, 2.0, name="2d-cos")
    rng = np.random.default_rng(6)
    radii = np.array([4.0, 6.0, 8.0])
    for _ in range(4):
        a = rng.normal(size=2)
        a /= np.linalg.norm(a)
        logs = []
        for r in radii:
            op = assemble(grid, gauss2, fld.freeze(), r * a)
            res = principal_eig(op)
            logs.append(np.log(res.theta + res.g_max))
        slope = np.polyfit(radii, logs, 1)[0]
        assert slope > 0


def test_similarity_invariance(gauss1, cosine_field):
    """Conjugating the field by the principal eigenfunction while keeping the
    original killing term is an exact matrix similarity: theta is unchanged."""
    grid = TorusGrid(1, 32)
    lam0 = np.array([0.8])
    frozen = cosine_field.freeze()
    op = assemble(grid, gauss1, frozen, lam0)
    res = principal_eig(op)
    u = res.u

    def tilted(xi, eta):
        ui = np.interp(xi[..., 0] % 1.0, np.arange(32) / 32, u, period=1.0)
        uj = np.interp(eta[..., 0] % 1.0, np.arange(32) / 32, u, period=1.0)
        return frozen(xi, eta) * uj / ui

    tilted_field = RateField.periodic(
        tilted, 1e-6, 1e6, name="similarity-tilted"
    ).freeze()
    op_t = assemble(grid, gauss1, tilted_field, lam0)
    # same integral part conjugated, original killing term
    op_sim = SkewedOperatorMatrix(
        grid=grid,
        lam=lam0,
        K=op_t.K,
        G=op.G,
        field_matrix=op_t.field_matrix,
        diffidx=op_t.diffidx,
        S1=op_t.S1,
        S2=op_t.S2,
    )
    res_sim = principal_eig(op_sim)
    assert abs(res_sim.theta - res.theta) < 1e-6
    # the conjugated row sums absorb the eigenvalue shift
    rows = op_t.K.sum(axis=1)
    assert np.abs(rows - (op.G + res.theta)).max() < 1e-8


def test_lattice_cutoff_overflow():
    from ldjump.kernels import standard_gaussian
    from ldjump.torus import AssemblyError, lattice_cutoff

    with pytest.raises(AssemblyError):
        lattice_cutoff(standard_gaussian(1), np.array([500.0]), max_shift=16)


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(1, 3)
