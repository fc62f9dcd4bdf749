"""Experiment configuration: YAML blocks mapped onto library objects."""

from __future__ import annotations

import hashlib
import json

import numpy as np
import yaml

from .environment import (
    RateField,
    cosine_pair_field,
    cusp_profile,
    peak_product_field,
    single_peak_profile,
    trig_pair_field,
)
from .kernels import (
    BoxKernel,
    GeneralizedGaussianKernel,
    TabulatedKernel,
    standard_gaussian,
)
from .path_rate import Path
from .simulate import AlwaysEvent, BallEvent, HalfspaceEvent, SimConfig, TubeEvent


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def load_config(path):
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    return cfg


def apply_overrides(cfg, overrides):
    """Apply KEY.PATH=VALUE overrides; values parse as YAML scalars."""
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a scalar")
        node[parts[-1]] = yaml.safe_load(raw)
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _need(block, key, where):
    if key not in block:
        raise ConfigError(f"missing {key!r} in {where} block")
    return block[key]


def build_kernel(cfg):
    block = _need(cfg, "kernel", "top-level")
    family = _need(block, "family", "kernel")
    dim = int(block.get("dim", 1))
    if family == "gaussian":
        return standard_gaussian(dim)
    if family == "generalized-gaussian":
        return GeneralizedGaussianKernel(
            dim, k=float(_need(block, "k", "kernel")), p=float(_need(block, "p", "kernel"))
        )
    if family == "box":
        return BoxKernel(dim)
    if family == "table":
        if dim != 1:
            raise ConfigError("tabulated kernels are one-dimensional")
        table_path = _need(block, "table", "kernel")
        env = _need(block, "envelope", "kernel")
        data = np.loadtxt(table_path)
        if data.ndim != 2 or data.shape[1] != 2:
            raise ConfigError("kernel table must have two whitespace columns")
        return TabulatedKernel(
            data[:, 0],
            data[:, 1],
            envelope=(float(env["C"]), float(env["k"]), float(env["p"])),
        )
    raise ConfigError(f"unknown kernel family {family!r}")


def _build_periodic(block, dim):
    field = block.get("field", "cosine-pair")
    if field == "cosine-pair":
        return cosine_pair_field(
            float(_need(block, "base", "environment")),
            float(_need(block, "amp", "environment")),
            dim=dim,
            freq=int(block.get("freq", 1)),
        )
    if field == "trig":
        return trig_pair_field(
            float(_need(block, "c0", "environment")),
            [tuple(t) for t in _need(block, "terms", "environment")],
            dim=dim,
        )
    if field == "peak-product":
        b = block.get("b", {})
        profile, alpha2 = single_peak_profile(
            float(_need(block, "alpha1", "environment")),
            float(_need(block, "c", "environment")),
            np.full(dim, float(_need(block, "z0", "environment"))),
            alpha2=block.get("alpha2"),
        )
        floor = float(b.get("floor", 0.2))
        amp = float(b.get("amp", 0.75))
        power = float(b.get("power", 0.25))
        center = float(b.get("center", 0.5))
        b_fn = cusp_profile(floor, amp, x0=np.full(dim, center), power=power)
        alpha1 = float(block["alpha1"])
        b_max = floor + amp * (np.sqrt(dim) / 2) ** power
        return peak_product_field(
            b_fn,
            profile,
            lambda_minus=0.999 * floor * alpha1,
            lambda_plus=1.001 * b_max * alpha2,
            name=f"peak-product(cfg)",
        )
    raise ConfigError(f"unknown periodic field {field!r}")


def _build_slow(block, dim):
    field = block.get("field", "cosine-slow")
    if field == "cosine-slow":
        base = float(_need(block, "base", "environment"))
        amp = float(_need(block, "amp", "environment"))
        wave = float(block.get("wave", 1.0))
        if not 0 < amp < base:
            raise ConfigError("need 0 < amp < base for a positive slow field")

        def fn(x, y):
            s = 0.5 * np.sum(np.asarray(x) + np.asarray(y), axis=-1)
            return base + amp * np.cos(wave * s)

        return RateField.slow(
            fn, base - amp, base + amp, name=f"cosine-slow({base},{amp},{wave})"
        )
    raise ConfigError(f"unknown slow field {field!r}")


def build_field(cfg):
    block = _need(cfg, "environment", "top-level")
    regime = _need(block, "regime", "environment")
    dim = int(cfg.get("kernel", {}).get("dim", 1))
    if regime == "constant":
        return RateField.constant(float(_need(block, "value", "environment")))
    if regime == "periodic":
        return _build_periodic(block, dim)
    if regime == "slow":
        return _build_slow(block, dim)
    if regime == "locally-periodic":
        slow = _build_slow(_need(block, "slow", "environment"), dim)
        per = _build_periodic(_need(block, "periodic", "environment"), dim)
        sfn = slow._fn
        pfn = per._fn

        def fn(x, y, xi, eta):
            return np.asarray(sfn(x, y)) * np.asarray(pfn(xi, eta))

        return RateField.locally_periodic(
            fn,
            slow.lambda_minus * per.lambda_minus,
            slow.lambda_plus * per.lambda_plus,
            name=f"product({slow.name},{per.name})",
        )
    raise ConfigError(f"unknown regime {regime!r}")


def grid_n(cfg, default=32):
    return int(cfg.get("grid", {}).get("n", default))


def scan_points(cfg, which, dim):
    """Scan grid for 'lambda' or 'zeta': axis grid or explicit point list."""
    block = cfg.get("scan", {}).get(which)
    if block is None:
        raise ConfigError(f"missing scan.{which} block")
    if "points" in block:
        pts = np.asarray(block["points"], dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != dim:
            raise ConfigError(f"scan.{which} points have wrong dimension")
        return pts
    start = float(_need(block, "start", f"scan.{which}"))
    stop = float(_need(block, "stop", f"scan.{which}"))
    num = int(_need(block, "num", f"scan.{which}"))
    axis = int(block.get("axis", 0))
    pts = np.zeros((num, dim))
    pts[:, axis] = np.linspace(start, stop, num)
    return pts


def build_sim_config(cfg, seed_override=None, eps_override=None):
    block = _need(cfg, "simulation", "top-level")
    tilt = block.get("tilt")
    if tilt in ("auto", "none", None):
        tilt_vec = None
    else:
        tilt_vec = np.asarray(tilt, dtype=float)
    seed = seed_override if seed_override is not None else int(
        _need(block, "seed", "simulation")
    )
    eps = eps_override if eps_override is not None else float(
        _need(block, "epsilon", "simulation")
    )
    return SimConfig(
        epsilon=eps,
        horizon=float(_need(block, "horizon", "simulation")),
        x0=np.asarray(_need(block, "x0", "simulation"), dtype=float),
        seed=seed,
        replications=int(block.get("replications", 1)),
        tilt=tilt_vec,
    )


def tilt_mode(cfg):
    return cfg.get("simulation", {}).get("tilt")


def build_event(cfg):
    block = cfg.get("event")
    if block is None:
        return None
    etype = _need(block, "type", "event")
    if etype == "halfspace":
        return HalfspaceEvent(
            alpha=np.asarray(_need(block, "alpha", "event"), dtype=float),
            level=float(_need(block, "level", "event")),
        )
    if etype == "ball":
        return BallEvent(
            center=np.asarray(_need(block, "center", "event"), dtype=float),
            radius=float(_need(block, "radius", "event")),
        )
    if etype == "tube":
        ref = Path.from_file(_need(block, "path", "event"))
        return TubeEvent(reference=ref, delta=float(_need(block, "delta", "event")))
    if etype == "always":
        return AlwaysEvent()
    raise ConfigError(f"unknown event type {etype!r}")


def epsilons(cfg):
    eps = cfg.get("scan", {}).get("epsilons")
    if not eps:
        raise ConfigError("missing scan.epsilons list")
    return [float(e) for e in eps]
