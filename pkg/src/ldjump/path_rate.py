"""Piecewise-linear paths: rate functionals, a path metric, effective flow.

Only polygonal paths are first-class, so inputs that would carry an infinite
rate (non-absolutely-continuous curves) cannot be expressed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .legendre import lagrangian


@dataclass
class Path:
    """Polygonal curve: breakpoints (t_j, x_j), linear in between."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.times.size != self.points.shape[0]:
            raise ValueError("one point per breakpoint required")
        if self.times.size < 2:
            raise ValueError("a path needs at least two breakpoints")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.points))):
            raise ValueError("breakpoints must be finite")

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def start(self):
        return self.points[0]

    def velocity(self, j):
        dt = self.times[j + 1] - self.times[j]
        return (self.points[j + 1] - self.points[j]) / dt

    def eval(self, t):
        """Linear interpolation; accepts scalars or arrays of times."""
        t = np.asarray(t, dtype=float)
        out = np.stack(
            [np.interp(t, self.times, self.points[:, a]) for a in range(self.dim)],
            axis=-1,
        )
        return out

    def refined(self, factor=2):
        """Same polygonal curve with each segment split ``factor`` times."""
        ts = [self.times[0]]
        for j in range(self.times.size - 1):
            seg = np.linspace(self.times[j], self.times[j + 1], factor + 1)[1:]
            ts.extend(seg)
        ts = np.array(ts)
        return Path(ts, self.eval(ts))

    @classmethod
    def from_function(cls, fn, horizon, n=64, t0=0.0):
        ts = np.linspace(t0, horizon, n + 1)
        pts = np.array([np.atleast_1d(fn(t)) for t in ts], dtype=float)
        return cls(ts, pts)

    @classmethod
    def from_file(cls, path):
        """Plain text, one line per breakpoint: t x1 ... xd."""
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                rows.append([float(v) for v in line.split()])
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise ValueError("path file needs columns: t x1 ... xd")
        return cls(arr[:, 0], arr[:, 1:])

    def to_file(self, path):
        with open(path, "w") as fh:
            for t, x in zip(self.times, self.points):
                fh.write(" ".join(repr(float(v)) for v in (t, *x)) + "\n")


@dataclass
class RateReport:
    """Total rate of a path with its per-segment contributions."""

    value: float
    segment_values: np.ndarray
    nodes_per_segment: np.ndarray


_GL_CACHE = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def rate(path, ham, quad_nodes=4, quad_tol=1e-6, max_nodes=64):
    """Integral of the Lagrangian along the path.

    Velocity-only regimes pay (t_{j+1}-t_j) L(v_j) per segment; x-dependent
    regimes integrate L(gamma(t), v_j) with Gauss-Legendre nodes, doubling the
    order until two levels agree.
    """
    if path.dim != ham.dim:
        raise ValueError("path and Hamiltonian dimensions differ")
    x_dependent = ham.regime in ("slow", "locally-periodic")
    nseg = path.times.size - 1
    seg_vals = np.empty(nseg)
    nodes_used = np.empty(nseg, dtype=int)
    lag_cache = {}

    def l_of(v, x=None):
        key = (None if x is None else tuple(np.round(x, 12)), tuple(np.round(v, 12)))
        if key not in lag_cache:
            lag_cache[key] = lagrangian(ham, v, x=x).value
        return lag_cache[key]

    for j in range(nseg):
        dt = path.times[j + 1] - path.times[j]
        v = path.velocity(j)
        if not x_dependent:
            seg_vals[j] = dt * l_of(v)
            nodes_used[j] = 1
            continue
        n = quad_nodes
        prev = None
        while True:
            xs, ws = _gauss_legendre(n)
            mid = 0.5 * (path.times[j] + path.times[j + 1])
            half = 0.5 * dt
            val = 0.0
            for xi, wi in zip(xs, ws):
                t = mid + half * xi
                val += wi * l_of(v, x=path.eval(t))
            val *= half
            if prev is not None and (
                abs(val - prev) <= quad_tol * max(1.0, abs(val)) or 2 * n > max_nodes
            ):
                break
            prev = val
            n *= 2
        seg_vals[j] = val
        nodes_used[j] = n
    return RateReport(
        value=float(seg_vals.sum()),
        segment_values=seg_vals,
        nodes_per_segment=nodes_used,
    )


def velocity_bound(ham, level, r_hi=1e3):
    """Radius V with L(v) > level for |v| > V, from super-linear growth.

    Certifies the compact-sublevel-set property at a given rate level: any
    unit-time segment of a path with rate below ``level`` moves slower than V.
    """
    dirs = np.eye(ham.dim)
    dirs = np.vstack([dirs, -dirs])
    r = 1.0
    while r <= r_hi:
        vals = [lagrangian(ham, r * a).value for a in dirs]
        if min(vals) > level:
            return r
        r *= 2.0
    raise RuntimeError(f"no velocity bound below {r_hi} for level {level}")


@dataclass
class DistanceReport:
    value: float
    sup_identity: float


def _sup_between(f, g):
    """Exact sup norm between two polygonal paths (union of breakpoints)."""
    ts = np.union1d(f.times, g.times)
    diff = f.eval(ts) - g.eval(ts)
    return float(np.linalg.norm(diff, axis=-1).max())


def path_distance(f, g, knots=64, value_grid=None):
    """Upper bound of the time-change path metric by minimax programming.

    Candidate reparametrizations are piecewise linear over ``knots`` uniform
    time intervals with values on a fixed grid; the cost of a candidate is the
    larger of its worst log-slope and the exact sup distance along it, so the
    optimum over the grid upper-bounds the metric.  The identity candidate is
    on the grid, hence the result never exceeds the sup distance.
    """
    if abs(f.horizon - g.horizon) > 1e-12 * max(1.0, f.horizon):
        raise ValueError("paths must share a horizon")
    if f.dim != g.dim:
        raise ValueError("paths must share a dimension")
    horizon = f.horizon
    tk = np.linspace(0.0, horizon, knots + 1)
    if value_grid is None:
        value_grid = 2 * knots + 1
    sv = np.union1d(np.linspace(0.0, horizon, value_grid), g.times)
    sv = sv[(sv >= 0.0) & (sv <= horizon)]
    nv = sv.size
    g_at_sv = g.eval(sv)  # (nv, d)

    dp = np.full(nv, math.inf)
    dp[np.searchsorted(sv, 0.0)] = 0.0

    for k in range(knots):
        t0, t1 = tk[k], tk[k + 1]
        dtk = t1 - t0
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (sv[None, :] - sv[:, None]) / dtk
            lcost = np.abs(np.log(slope))
        lcost[~(slope > 0)] = math.inf

        f0 = f.eval(t0)
        f1 = f.eval(t1)
        end0 = np.linalg.norm(f0[None, :] - g_at_sv, axis=1)  # depends on u
        end1 = np.linalg.norm(f1[None, :] - g_at_sv, axis=1)  # depends on v
        sup = np.maximum(end0[:, None], end1[None, :])

        # interior breakpoints of f inside (t0, t1): g is evaluated along pi
        inner_f = f.times[(f.times > t0 + 1e-15) & (f.times < t1 - 1e-15)]
        for tstar in inner_f:
            tau = (tstar - t0) / dtk
            pos = sv[:, None] + tau * (sv[None, :] - sv[:, None])
            gval = np.stack(
                [
                    np.interp(pos.ravel(), g.times, g.points[:, a]).reshape(pos.shape)
                    for a in range(g.dim)
                ],
                axis=-1,
            )
            dv = np.linalg.norm(f.eval(tstar)[None, None, :] - gval, axis=-1)
            sup = np.maximum(sup, dv)

        # preimages of g's breakpoints under pi: one pass per knot
        for s_idx, sstar in enumerate(g.times):
            if sstar <= 0.0 or sstar >= horizon:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = (sstar - sv[:, None]) / (sv[None, :] - sv[:, None])
            inside = (tau > 0.0) & (tau < 1.0)
            if not inside.any():
                continue
            tstar = t0 + tau * dtk
            fv = np.stack(
                [
                    np.interp(tstar.ravel(), f.times, f.points[:, a]).reshape(
                        tstar.shape
                    )
                    for a in range(f.dim)
                ],
                axis=-1,
            )
            dv = np.linalg.norm(fv - g.points[s_idx][None, None, :], axis=-1)
            sup = np.maximum(sup, np.where(inside, dv, 0.0))

        cost = np.maximum(lcost, sup)
        dp = np.min(np.maximum(dp[:, None], cost), axis=0)

    value = float(dp[np.searchsorted(sv, horizon)])
    return DistanceReport(value=value, sup_identity=_sup_between(f, g))


def effective_flow(ham, x0, horizon, steps=512):
    """Classical RK4 integration of the zero-tilt gradient flow."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if steps < 1:
        raise ValueError("need at least one step")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    h = horizon / steps
    x_dependent = ham.regime in ("slow", "locally-periodic")
    if not x_dependent:
        v0 = ham.drift()

        def f(x):
            return v0

    else:

        def f(x):
            return ham.drift(x=x)

    xs = np.empty((steps + 1, x0.size))
    xs[0] = x0
    x = x0.copy()
    for i in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[i + 1] = x
    return Path(np.linspace(0.0, horizon, steps + 1), xs)
