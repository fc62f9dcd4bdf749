"""Generator for environments whose Hamiltonian develops a flat branch.

Construction: box kernel, separable pair field b(xi) * profile(xi - eta) with
a normalized single-peak profile off the origin, and a multiplier b with a
sharp (sub-linear cusp) minimum.  The peak pushes the tilted kernel mass far
from the origin, so for a band of tilts pointing along the peak no principal
eigenvalue survives above the continuous-spectrum edge; the cusp keeps the
bounded-multiplier norm finite while the edge stays at the minimum of b.

The free parameters are exposed and the generator reports which of the
sufficient inequalities hold numerically rather than guaranteeing them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import (
    cusp_profile,
    peak_product_field,
    single_peak_profile,
)
from .kernels import BoxKernel
from .torus import TorusGrid, assemble, principal_eig


@dataclass
class GapScenario:
    kernel: object
    field: object
    lambda0: np.ndarray
    params: dict
    report: dict


def build_peak_scenario(
    alpha1=5e-4,
    c=0.05,
    z0=0.3,
    b_floor=0.2,
    b_amp=0.75,
    b_center=0.5,
    b_power=0.25,
    dim=1,
):
    """Assemble the kernel/field pair of the flat-branch construction."""
    z0v = np.full(dim, z0, dtype=float)
    profile, alpha2 = single_peak_profile(alpha1, c, z0v)
    b_fn = cusp_profile(b_floor, b_amp, x0=np.full(dim, b_center), power=b_power)
    b_max = b_floor + b_amp * 0.5 ** (b_power * 1.0) * dim ** (b_power / 2.0)
    field = peak_product_field(
        b_fn,
        profile,
        lambda_minus=0.999 * b_floor * alpha1,
        lambda_plus=1.001 * b_max * alpha2,
        name=f"peak-product(a1={alpha1},c={c},z0={z0},b=({b_floor},{b_amp},{b_power}))",
    )
    kernel = BoxKernel(dim)
    params = {
        "alpha1": alpha1,
        "alpha2": alpha2,
        "c": c,
        "z0": z0,
        "b_floor": b_floor,
        "b_amp": b_amp,
        "b_power": b_power,
        "dim": dim,
    }
    return kernel, field, b_fn, profile, params


def inequality_report(kernel, b_fn, profile, params, lambda0, mesh=4096):
    """Numeric status of the sufficient conditions behind the construction."""
    dim = params["dim"]
    if dim != 1:
        zg = np.random.default_rng(5).uniform(-0.5, 0.5, size=(mesh, dim))
        weights = None
    else:
        zg = ((np.arange(mesh) + 0.5) / mesh - 0.5)[:, None]
        weights = 1.0 / mesh
    prof_vals = np.asarray(profile(zg))
    norm_val = float(prof_vals.mean()) if weights else float(prof_vals.mean())
    tilt_vals = prof_vals * np.exp(-zg @ np.asarray(lambda0, dtype=float))
    # bounded-multiplier norm with the floor as the spectral threshold
    xg = ((np.arange(mesh) + 0.5) / mesh)[:, None] if dim == 1 else zg + 0.5
    b_vals = np.asarray(b_fn(xg))
    ratio = b_vals / (b_vals - params["b_floor"])
    l2_norm = float(np.sqrt(np.mean(ratio**2)))
    return {
        "profile_unit_mass": norm_val,
        "tilted_kernel_max": float(tilt_vals.max()),
        "tilted_kernel_below_half": bool(tilt_vals.max() < 0.5),
        "multiplier_l2_norm": l2_norm,
        "multiplier_norm_below_two": bool(l2_norm < 2.0),
    }


def find_gamma_gap(
    n=64,
    lam_max=20.0,
    lam_step=1.0,
    dim=1,
    scan_sign=1.0,
    **build_kw,
):
    """Search tilts along the peak direction until membership fails.

    Returns a GapScenario whose report records the membership flags at zero
    and at the found tilt plus the sufficient-inequality status there.
    """
    kernel, field, b_fn, profile, params = build_peak_scenario(dim=dim, **build_kw)
    grid = TorusGrid(dim, n)
    frozen = field.freeze()
    direction = np.zeros(dim)
    direction[0] = scan_sign
    res0 = principal_eig(assemble(grid, kernel, frozen, np.zeros(dim)))
    if not res0.in_gamma:
        raise RuntimeError("zero tilt left the discrete region; bad parameters")
    lam_found = None
    res_found = None
    lam = lam_step
    while lam <= lam_max + 1e-9:
        vec = lam * direction
        res = principal_eig(assemble(grid, kernel, frozen, vec))
        if not res.in_gamma:
            if lam_found is None:
                lam_found, res_found = vec, res
            # prefer a tilt where the sufficient pointwise bound also holds
            if inequality_report(kernel, b_fn, profile, params, vec)[
                "tilted_kernel_below_half"
            ]:
                lam_found, res_found = vec, res
                break
        lam += lam_step
    if lam_found is None:
        raise RuntimeError(
            f"no flat-branch tilt found along the scan up to |lambda|={lam_max}"
        )
    report = inequality_report(kernel, b_fn, profile, params, lam_found)
    report.update(
        {
            "in_gamma_at_zero": res0.in_gamma,
            "theta_at_zero": res0.theta,
            "in_gamma_at_lambda0": res_found.in_gamma,
            "theta_raw_at_lambda0": res_found.theta_raw,
            "edge_at_lambda0": -res_found.g_min,
            "grid_n": n,
        }
    )
    return GapScenario(
        kernel=kernel,
        field=field,
        lambda0=lam_found,
        params=params,
        report=report,
    )
