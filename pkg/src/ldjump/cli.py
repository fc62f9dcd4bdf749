"""Command-line harness: config-driven experiments with CSV artifacts.

Every output starts with '# key: value' metadata lines (config hash, seed,
version; no timestamps) followed by a CSV body, so identical config and seed
reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    apply_overrides,
    build_event,
    build_field,
    build_kernel,
    build_sim_config,
    config_hash,
    epsilons,
    grid_n,
    load_config,
    scan_points,
    tilt_mode,
)
from .environment import FieldBoundError
from .hamiltonian import Hamiltonian
from .kernels import KernelError
from .legendre import l_t, lagrangian
from .path_rate import Path, effective_flow, path_distance, rate
from .simulate import (
    AlwaysEvent,
    SimConfig,
    TubeEvent,
    default_tilt,
    estimate_event,
    simulate,
    theory_decay,
)
from .torus import PowerIterationError

ENV_PREFIX = "LDJUMP_"


def _metadata(cfg, extra=None):
    meta = {
        "version": __version__,
        "config_hash": config_hash(cfg),
    }
    seed = cfg.get("simulation", {}).get("seed")
    if seed is not None:
        meta["seed"] = seed
    if extra:
        meta.update(extra)
    return meta


def write_csv(path, meta, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}: {meta[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _pmap(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- subcommands ------------------------------------------------------------------


def cmd_validate(cfg, args):
    kernel = build_kernel(cfg)
    field = build_field(cfg)
    lines = []
    report = kernel.validate()
    lines.append(("kernel normalization", abs(report["normalization"] - 1.0) < 1e-8))
    lines.append(("kernel nonnegative", report["min_density"] >= 0.0))
    lines.append(("kernel decay envelope", report["max_envelope_violation"] <= 1e-9))
    lines.append(("halfspace mass certificate", report["c0_certificate"] > 0.0))
    m0 = kernel.exp_moment(np.zeros(kernel.dim))
    lines.append(("exp moment at zero", abs(m0 - 1.0) < 1e-8))
    rng = np.random.default_rng(3)
    ok_bounds = True
    try:
        for _ in range(200):
            x = rng.normal(size=kernel.dim)
            y = rng.normal(size=kernel.dim)
            field.eval_scaled(x, y, eps=0.1)
    except FieldBoundError:
        ok_bounds = False
    lines.append(("field bounds", ok_bounds))
    if field.regime in ("periodic", "locally-periodic"):
        frozen = field.freeze(np.zeros(kernel.dim))
        shift_ok = True
        for _ in range(50):
            xi = rng.uniform(size=kernel.dim)
            eta = rng.uniform(size=kernel.dim)
            j1 = rng.integers(-3, 4, size=kernel.dim).astype(float)
            j2 = rng.integers(-3, 4, size=kernel.dim).astype(float)
            a = frozen(xi, eta)
            b = frozen(xi + j1, eta + j2)
            if abs(a - b) > 1e-9 * max(1.0, abs(a)):
                shift_ok = False
        lines.append(("field periodicity", shift_ok))
    if field.regime in ("slow", "locally-periodic"):
        probe = field.continuity_probe(np.zeros(kernel.dim))
        worst = max(probe.values())
        lines.append((f"slow-variable modulus (max {worst:.3g})", True))
    rows = [(name, "pass" if ok else "FAIL") for name, ok in lines]
    out = write_csv(
        os.path.join(args.out, "validate.csv"),
        _metadata(cfg, {"c0": report["c0_certificate"]}),
        ["check", "status"],
        rows,
    )
    for name, ok in lines:
        print(f"{'pass' if ok else 'FAIL'}: {name}")
    if not all(ok for _, ok in lines):
        raise KernelError("validation failed")
    return [out]


def _hamiltonian(cfg, args):
    return Hamiltonian(
        build_kernel(cfg),
        build_field(cfg),
        grid_n=grid_n(cfg),
        cache_dir=args.cache,
    )


def cmd_hamiltonian_scan(cfg, args):
    ham = _hamiltonian(cfg, args)
    pts = scan_points(cfg, "lambda", ham.dim)

    def job(lam):
        val, ing = ham.value(lam)
        return val, ing

    vals = _pmap(job, list(pts), args.workers)
    header = [f"lambda_{i+1}" for i in range(ham.dim)] + ["H", "in_gamma"]
    rows = [
        [_fmt(v) for v in (*lam, val, ing)] for lam, (val, ing) in zip(pts, vals)
    ]
    out = write_csv(
        os.path.join(args.out, "hamiltonian_scan.csv"), _metadata(cfg), header, rows
    )
    return [out]


def cmd_lagrangian_scan(cfg, args):
    ham = _hamiltonian(cfg, args)
    pts = scan_points(cfg, "zeta", ham.dim)

    def job(z):
        return lagrangian(ham, z)

    sols = _pmap(job, list(pts), args.workers)
    header = (
        [f"zeta_{i+1}" for i in range(ham.dim)]
        + ["L"]
        + [f"argmax_lambda_{i+1}" for i in range(ham.dim)]
        + ["exposed", "on_linear_segment"]
    )
    rows = [
        [_fmt(v) for v in (*z, s.value, *s.argmax, s.exposed, s.on_linear_segment)]
        for z, s in zip(pts, sols)
    ]
    out = write_csv(
        os.path.join(args.out, "lagrangian_scan.csv"), _metadata(cfg), header, rows
    )
    return [out]


def cmd_gamma_region(cfg, args):
    ham = _hamiltonian(cfg, args)
    pts = scan_points(cfg, "lambda", ham.dim)

    def job(lam):
        try:
            res = ham.spectral_result(lam)
            return res.theta, res.theta_raw, res.g_min, res.in_gamma
        except PowerIterationError:
            # non-convergence signals the continuous-spectrum edge
            return float("nan"), float("nan"), float("nan"), False

    vals = _pmap(job, list(pts), args.workers)
    header = [f"lambda_{i+1}" for i in range(ham.dim)] + [
        "theta",
        "theta_raw",
        "g_min",
        "in_gamma",
    ]
    rows = [[_fmt(v) for v in (*lam, *tup)] for lam, tup in zip(pts, vals)]
    out = write_csv(
        os.path.join(args.out, "gamma_region.csv"), _metadata(cfg), header, rows
    )
    return [out]


def cmd_effective_coeffs(cfg, args):
    from .torus import TorusGrid, assemble, effective_coeffs, principal_eig

    kernel = build_kernel(cfg)
    field = build_field(cfg)
    grid = TorusGrid(kernel.dim, grid_n(cfg))
    x0 = np.asarray(cfg.get("flow", {}).get("x0", np.zeros(kernel.dim)), dtype=float)
    frozen = field.freeze(x0 if field.regime != "periodic" else None)
    op = assemble(grid, kernel, frozen, np.zeros(kernel.dim))
    res = principal_eig(op)
    eff = effective_coeffs(op, res)
    d = kernel.dim
    rows = []
    for i in range(d):
        rows.append(["b", i, _fmt(eff.b[i])] + [""] * (d - 1))
    for i in range(d):
        rows.append(
            ["Theta", i] + [_fmt(eff.theta_matrix[i, j]) for j in range(d)]
        )
    for i in range(d):
        rows.append(["hess", i] + [_fmt(eff.hessian[i, j]) for j in range(d)])
    header = ["quantity", "row"] + [f"col_{j+1}" for j in range(d)]
    out1 = write_csv(
        os.path.join(args.out, "effective_coeffs.csv"), _metadata(cfg), header, rows
    )
    kout = write_csv(
        os.path.join(args.out, "correctors.csv"),
        _metadata(cfg),
        ["node"] + [f"kappa_{i+1}" for i in range(d)],
        [
            [j] + [_fmt(eff.kappa[i][j]) for i in range(d)]
            for j in range(grid.size)
        ],
    )
    sym_gap = np.abs(
        eff.theta_matrix + eff.theta_matrix.T - eff.hessian
    ).max()
    print(f"symmetrization identity gap: {sym_gap:.3e}")
    return [out1, kout]


def cmd_rate(cfg, args):
    if not args.path_file:
        raise ConfigError("rate needs --path-file")
    ham = _hamiltonian(cfg, args)
    path = Path.from_file(args.path_file)
    report = rate(path, ham)
    rows = [
        [j, _fmt(v), int(nq)]
        for j, (v, nq) in enumerate(zip(report.segment_values, report.nodes_per_segment))
    ]
    rows.append(["total", _fmt(report.value), ""])
    out = write_csv(
        os.path.join(args.out, "rate.csv"),
        _metadata(cfg, {"path_file": os.path.basename(args.path_file)}),
        ["segment", "contribution", "quad_nodes"],
        rows,
    )
    print(f"rate: {report.value!r}")
    return [out]


def cmd_flow(cfg, args):
    ham = _hamiltonian(cfg, args)
    block = cfg.get("flow", {})
    x0 = np.asarray(block.get("x0", np.zeros(ham.dim)), dtype=float)
    horizon = float(block.get("horizon", 1.0))
    steps = int(block.get("steps", 512))
    path = effective_flow(ham, x0, horizon, steps=steps)
    out = os.path.join(args.out, "flow_path.txt")
    os.makedirs(args.out, exist_ok=True)
    path.to_file(out)
    print(f"flow path written: {out}")
    return [out]


def cmd_simulate(cfg, args):
    kernel = build_kernel(cfg)
    field = build_field(cfg)
    sim = build_sim_config(cfg, seed_override=args.seed)
    os.makedirs(args.out, exist_ok=True)
    outs = []
    for i in range(sim.replications):
        one = SimConfig(
            epsilon=sim.epsilon,
            horizon=sim.horizon,
            x0=sim.x0,
            seed=sim.seed,
            replications=1,
            tilt=sim.tilt,
        )
        from .simulate import make_rng

        traj = simulate(one, kernel, field, rng=make_rng([sim.seed, i]))
        fname = os.path.join(args.out, f"trajectory_{i:04d}.txt")
        traj.to_file(fname)
        outs.append(fname)
    print(f"wrote {len(outs)} trajectories to {args.out}")
    return outs


def cmd_ldp_verify(cfg, args):
    kernel = build_kernel(cfg)
    field = build_field(cfg)
    event = build_event(cfg)
    if event is None:
        raise ConfigError("ldp-verify needs an event block")
    ham = Hamiltonian(build_kernel(cfg), field, grid_n=grid_n(cfg), cache_dir=args.cache)
    base = build_sim_config(cfg, seed_override=args.seed)
    theory = -theory_decay(event, ham, base)
    tilt = base.tilt
    if tilt is None and tilt_mode(cfg) == "auto" and not isinstance(event, AlwaysEvent):
        tilt = default_tilt(event, ham, base)
    rows = []
    for i, eps in enumerate(epsilons(cfg)):
        sim = SimConfig(
            epsilon=eps,
            horizon=base.horizon,
            x0=base.x0,
            seed=base.seed + i,
            replications=base.replications,
            tilt=tilt,
        )
        est = estimate_event(sim, kernel, field, event, theory=theory)
        rows.append(
            [
                _fmt(eps),
                _fmt(est.p_hat),
                _fmt(est.stderr),
                _fmt(est.eps_ln_p),
                _fmt(theory),
                est.hits,
            ]
        )
    meta = _metadata(
        cfg,
        {
            "event": event.describe(),
            "tilt": "none" if tilt is None else np.asarray(tilt).tolist(),
            "rng": "philox4x64",
        },
    )
    out = write_csv(
        os.path.join(args.out, "ldp_verify.csv"),
        meta,
        ["epsilon", "p_hat", "stderr", "eps_ln_p", "theory", "hits"],
        rows,
    )
    for row in rows:
        print(
            f"eps={row[0]} p_hat={row[1]} eps_ln_p={row[3]} theory={row[4]}"
        )
    return [out]


COMMANDS = {
    "validate": cmd_validate,
    "hamiltonian-scan": cmd_hamiltonian_scan,
    "lagrangian-scan": cmd_lagrangian_scan,
    "gamma-region": cmd_gamma_region,
    "effective-coeffs": cmd_effective_coeffs,
    "rate": cmd_rate,
    "flow": cmd_flow,
    "simulate": cmd_simulate,
    "ldp-verify": cmd_ldp_verify,
}


def _env_default(name, cast, fallback):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return fallback
    return cast(raw)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ldjump",
        description="Rate functions and rare-event experiments for periodic jump media",
    )
    parser.add_argument(
        "command", choices=sorted(COMMANDS), help="experiment subcommand"
    )
    parser.add_argument(
        "--config",
        default=_env_default("CONFIG", str, None),
        help="experiment config (YAML)",
    )
    parser.add_argument(
        "--out", default=_env_default("OUT", str, "out"), help="output directory"
    )
    parser.add_argument(
        "--cache",
        default=_env_default("CACHE", str, None),
        help="spectral cache directory",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=_env_default("SEED", int, None),
        help="seed override",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=_env_default("WORKERS", int, 1),
        help="worker threads for scan points",
    )
    parser.add_argument(
        "--override",
        action="append",
        default=None,
        help="KEY.PATH=VALUE config override (repeatable)",
    )
    parser.add_argument("--path-file", default=None, help="path file for 'rate'")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        apply_overrides(cfg, args.override)
        COMMANDS[args.command](cfg, args)
    except Exception as exc:  # noqa: BLE001 - single funnel to the error record
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
            "command": args.command,
        }
        print(json.dumps(record), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
