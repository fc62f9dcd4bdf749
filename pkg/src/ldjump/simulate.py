"""Exact simulation of the scaled jump process and rare-event estimation.

Thinning against the constant dominating rate Lambda+/eps is exact because
the kernel has unit mass.  Exponential tilting changes the proposal law to
a(z)exp(-lam.z)/M(lam) and accumulates the exact path likelihood ratio, so
tilted estimators stay unbiased.  Replications use a counter-based Philox
stream, reproducible from one 64-bit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import optimize

from .legendre import lagrangian
from .path_rate import Path, rate as path_rate_of

RNG_ALGORITHM = "philox4x64"


def make_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class SimConfig:
    """One simulation experiment: scale, horizon, start, randomness, tilt."""

    epsilon: float
    horizon: float
    x0: np.ndarray
    seed: int
    replications: int = 1
    tilt: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (0 < self.epsilon <= 1):
            raise ValueError("epsilon must lie in (0, 1]")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.tilt is not None:
            self.tilt = np.asarray(self.tilt, dtype=float).reshape(-1)
            if self.tilt.shape != self.x0.shape:
                raise ValueError("tilt dimension must match the start point")


@dataclass
class Trajectory:
    """Sample path: jump times and post-jump states, with its log weight."""

    x0: np.ndarray
    horizon: float
    times: np.ndarray
    states: np.ndarray
    log_weight: float = 0.0

    def position(self, t):
        """Piecewise-constant position at times t."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        full = np.vstack([self.x0[None, :], self.states])
        return full[idx]

    @property
    def terminal(self):
        return self.states[-1] if len(self.states) else self.x0

    def to_file(self, path):
        """Plain text dump, one line per event: t x1 ... xd."""
        with open(path, "w") as fh:
            fh.write(" ".join(repr(float(v)) for v in (0.0, *self.x0)) + "\n")
            for t, x in zip(self.times, self.states):
                fh.write(" ".join(repr(float(v)) for v in (t, *x)) + "\n")


def _rate_gap(kernel, field, x, eps, tilt):
    """(tilted - untilted) total jump rate at state x, by kernel quadrature."""
    zs, ws = kernel.quad_nodes(float(np.linalg.norm(tilt)))
    if kernel.dim == 1:
        pts = zs[:, None]
        w = ws
    else:
        grids = np.meshgrid(*([zs] * kernel.dim), indexing="ij")
        pts = np.stack(grids, axis=-1).reshape(-1, kernel.dim)
        w = np.prod(
            np.stack(np.meshgrid(*([ws] * kernel.dim), indexing="ij"), axis=-1),
            axis=-1,
        ).reshape(-1)
    dens = kernel.density(pts)
    lamvals = field.eval_scaled(
        np.broadcast_to(x, pts.shape).copy(), x - eps * pts, eps
    )
    integrand = dens * (np.exp(-pts @ tilt) - 1.0) * lamvals
    return float((w * integrand).sum()) / eps


def simulate(cfg, kernel, field, rng=None):
    """One exact trajectory (thinning), optionally tilted with exact weight."""
    if rng is None:
        rng = make_rng(cfg.seed)
    eps = cfg.epsilon
    lam_plus = field.lambda_plus
    tilt = cfg.tilt
    tilted = tilt is not None and np.any(tilt != 0.0)
    m_tilt = kernel.exp_moment(tilt) if tilted else 1.0
    rate_dom = lam_plus * m_tilt / eps

    x = cfg.x0.copy()
    t = 0.0
    times = []
    states = []
    log_jumps = 0.0
    hold_states = [x.copy()]
    hold_times = [0.0]
    while True:
        t += rng.exponential(1.0 / rate_dom)
        if t > cfg.horizon:
            break
        z = (
            kernel.sample_tilted(rng, tilt, 1)[0]
            if tilted
            else kernel.sample(rng, 1)[0]
        )
        y = x - eps * z
        if rng.uniform() * lam_plus < field.eval_scaled(x, y, eps):
            if tilted:
                log_jumps += float(tilt @ z)
            x = y
            times.append(t)
            states.append(x.copy())
            hold_states.append(x.copy())
            hold_times.append(t)

    log_weight = 0.0
    if tilted:
        if field.regime == "constant":
            gap = field.lambda_minus * (m_tilt - 1.0) / eps
            log_weight = log_jumps + cfg.horizon * gap
        else:
            hold_times.append(cfg.horizon)
            acc = 0.0
            for i, xs in enumerate(hold_states):
                acc += (hold_times[i + 1] - hold_times[i]) * _rate_gap(
                    kernel, field, xs, eps, tilt
                )
            log_weight = log_jumps + acc
    return Trajectory(
        x0=cfg.x0.copy(),
        horizon=cfg.horizon,
        times=np.asarray(times),
        states=np.asarray(states).reshape(len(states), -1),
        log_weight=log_weight,
    )


@dataclass
class BatchResult:
    terminal: np.ndarray          # (n, d) positions at the horizon
    log_weights: np.ndarray       # (n,) exact log likelihood ratios
    jump_counts: np.ndarray       # (n,)
    sup_distance: Optional[np.ndarray]  # (n,) sup distance to a reference path
    proposals: int
    accepted: int


def simulate_batch(cfg, kernel, field, reference=None, rng=None):
    """All replications at once: one vectorized thinning clock per event index.

    Tilted runs are restricted to constant fields here (the likelihood ratio
    then needs no per-state quadrature); other regimes go through
    ``simulate`` one trajectory at a time.
    """
    if rng is None:
        rng = make_rng(cfg.seed)
    n = cfg.replications
    d = cfg.x0.size
    eps = cfg.epsilon
    horizon = cfg.horizon
    lam_plus = field.lambda_plus
    tilt = cfg.tilt
    tilted = tilt is not None and np.any(tilt != 0.0)
    if tilted and field.regime != "constant":
        trajs = [
            simulate(cfg, kernel, field, rng=make_rng([cfg.seed, i]))
            for i in range(n)
        ]
        term = np.array([tr.terminal for tr in trajs])
        logw = np.array([tr.log_weight for tr in trajs])
        counts = np.array([len(tr.times) for tr in trajs])
        sup = None
        if reference is not None:
            sup = np.array([_sup_traj_to_path(tr, reference) for tr in trajs])
        return BatchResult(term, logw, counts, sup, -1, int(counts.sum()))

    m_tilt = kernel.exp_moment(tilt) if tilted else 1.0
    rate_dom = lam_plus * m_tilt / eps

    x = np.tile(cfg.x0, (n, 1))
    t = np.zeros(n)
    active = np.ones(n, dtype=bool)
    logw = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    sup = None
    if reference is not None:
        sup = np.linalg.norm(x - reference.eval(np.zeros(n)), axis=1)
    proposals = 0
    accepted = 0
    while active.any():
        t_new = t + rng.exponential(1.0 / rate_dom, size=n)
        if reference is not None:
            # exact for straight references; quarter points cover curvature of
            # polygonal ones between the endpoints of each holding interval
            tend = np.minimum(t_new, horizon)
            live = active
            worst = np.zeros(n)
            for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
                tq = t + frac * (tend - t)
                worst = np.maximum(
                    worst, np.linalg.norm(x - reference.eval(tq), axis=1)
                )
            sup = np.where(live, np.maximum(sup, worst), sup)
        t = np.where(active, t_new, t)
        active = active & (t_new <= horizon)
        if not active.any():
            break
        z = (
            kernel.sample_tilted(rng, tilt, n)
            if tilted
            else kernel.sample(rng, n)
        )
        y = x - eps * z
        acc_prob = np.asarray(field.eval_scaled(x, y, eps), dtype=float) / lam_plus
        u = rng.uniform(size=n)
        acc = active & (u < acc_prob)
        if tilted:
            logw = np.where(acc, logw + z @ tilt, logw)
        x = np.where(acc[:, None], y, x)
        counts += acc
        proposals += int(active.sum())
        accepted += int(acc.sum())
    if tilted:
        gap = field.lambda_minus * (m_tilt - 1.0) / eps
        logw = logw + horizon * gap
    return BatchResult(x, logw, counts, sup, proposals, accepted)


def _sup_traj_to_path(traj, ref):
    """sup_t |xi(t) - gamma(t)| for a piecewise-constant trajectory."""
    ts = np.concatenate([[0.0], traj.times, [traj.horizon]])
    best = 0.0
    pos = np.vstack([traj.x0[None, :], traj.states]) if len(traj.states) else traj.x0[
        None, :
    ]
    for i in range(len(ts) - 1):
        xi = pos[min(i, len(pos) - 1)]
        for tq in (ts[i], ts[i + 1]):
            best = max(best, float(np.linalg.norm(xi - ref.eval(tq))))
    return best


# -- events ---------------------------------------------------------------------


@dataclass
class HalfspaceEvent:
    """{alpha . xi(T) >= level}."""

    alpha: np.ndarray
    level: float

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)

    def indicator(self, batch, cfg):
        return batch.terminal @ self.alpha >= self.level

    def describe(self):
        return f"halfspace(alpha={self.alpha.tolist()}, level={self.level})"


@dataclass
class BallEvent:
    """{|xi(T) - center| <= radius}."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(-1)

    def indicator(self, batch, cfg):
        return np.linalg.norm(batch.terminal - self.center, axis=1) <= self.radius

    def describe(self):
        return f"ball(center={self.center.tolist()}, radius={self.radius})"


@dataclass
class TubeEvent:
    """{sup_t |xi(t) - gamma(t)| <= delta} around a reference path."""

    reference: Path
    delta: float

    def indicator(self, batch, cfg):
        if batch.sup_distance is None:
            raise ValueError("batch was run without tube tracking")
        return batch.sup_distance <= self.delta

    def describe(self):
        return f"tube(delta={self.delta}, T={self.reference.horizon})"


@dataclass
class AlwaysEvent:
    """The whole space; sanity anchor with probability one."""

    def indicator(self, batch, cfg):
        return np.ones(batch.terminal.shape[0], dtype=bool)

    def describe(self):
        return "always"


@dataclass
class EventEstimate:
    p_hat: float
    stderr: float
    n: int
    hits: int
    eps_ln_p: float
    theory: Optional[float]
    tilt: Optional[np.ndarray]
    zero_hit_bound: Optional[float] = None
    diagnostics: dict = dc_field(default_factory=dict)


def _terminal_rate_inf(event, ham, cfg):
    """inf of the fixed-time rate over a terminal event (velocity regimes)."""
    t = cfg.horizon
    d = cfg.x0.size
    zstar = ham.grad(np.zeros(d))

    def cost(zeta):
        return t * lagrangian(ham, np.asarray(zeta) / t).value

    if isinstance(event, HalfspaceEvent):
        a = event.alpha
        c = event.level - float(a @ cfg.x0)
        if float(a @ (t * zstar)) >= c:
            return 0.0, t * zstar
        if d == 1:
            zeta = np.array([c / a[0]])
            return cost(zeta), zeta
        res = optimize.minimize(
            cost,
            x0=(c / float(a @ a)) * a,
            constraints=[{"type": "ineq", "fun": lambda z: float(a @ z) - c}],
            method="SLSQP",
        )
        return float(res.fun), np.asarray(res.x)
    if isinstance(event, BallEvent):
        ctr = event.center - cfg.x0
        if np.linalg.norm(t * zstar - ctr) <= event.radius:
            return 0.0, t * zstar
        if d == 1:
            cands = [ctr - event.radius, ctr + event.radius]
            vals = [cost(np.atleast_1d(z)) for z in cands]
            i = int(np.argmin(vals))
            return vals[i], np.atleast_1d(cands[i])
        res = optimize.minimize(
            cost,
            x0=ctr,
            constraints=[
                {
                    "type": "ineq",
                    "fun": lambda z: event.radius**2 - float((z - ctr) @ (z - ctr)),
                }
            ],
            method="SLSQP",
        )
        return float(res.fun), np.asarray(res.x)
    raise TypeError(f"no terminal rate for {type(event).__name__}")


def theory_decay(event, ham, cfg):
    """Predicted decay rate: -lim eps ln P, from the rate function.

    Terminal events use the fixed-time rate infimum; tube events use the rate
    of the reference path (exact in the vanishing-radius limit, biased for a
    finite tube).  Velocity-only regimes for terminal sets; path minimization
    over x-dependent Lagrangians is out of scope.
    """
    if isinstance(event, AlwaysEvent):
        return 0.0
    if isinstance(event, TubeEvent):
        return path_rate_of(event.reference, ham).value
    if ham.regime in ("slow", "locally-periodic"):
        raise ValueError(
            "terminal-event theory needs a velocity-only regime; "
            "x-dependent path minimization is not provided"
        )
    return _terminal_rate_inf(event, ham, cfg)[0]


def default_tilt(event, ham, cfg):
    """Dual optimizer at the event's dominant point (the default tilt)."""
    if isinstance(event, AlwaysEvent):
        return None
    if isinstance(event, TubeEvent):
        ref = event.reference
        zeta = (ref.points[-1] - ref.points[0]) / ref.horizon
    else:
        _, dominant = _terminal_rate_inf(event, ham, cfg)
        zeta = dominant / cfg.horizon
    sol = lagrangian(ham, zeta)
    return sol.argmax


def estimate_event(cfg, kernel, field, event, ham=None, theory=None, rng=None):
    """Monte Carlo probability of the event with its decay-rate comparison."""
    reference = event.reference if isinstance(event, TubeEvent) else None
    batch = simulate_batch(cfg, kernel, field, reference=reference, rng=rng)
    ind = event.indicator(batch, cfg).astype(float)
    w = np.exp(batch.log_weights)
    vals = w * ind
    n = cfg.replications
    p_hat = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    hits = int(ind.sum())
    zero_bound = None
    if hits == 0:
        p_hat = 0.0
        zero_bound = 3.0 * float(w.max()) / n  # one-sided ~95% upper bound
    eps_ln = cfg.epsilon * math.log(p_hat) if p_hat > 0 else -math.inf
    if theory is None and ham is not None:
        theory = -theory_decay(event, ham, cfg)
    acc_frac = (
        batch.accepted / batch.proposals if batch.proposals > 0 else float("nan")
    )
    return EventEstimate(
        p_hat=p_hat,
        stderr=stderr,
        n=n,
        hits=hits,
        eps_ln_p=eps_ln,
        theory=theory,
        tilt=cfg.tilt,
        zero_hit_bound=zero_bound,
        diagnostics={
            "acceptance_fraction": acc_frac,
            "mean_jumps": float(batch.jump_counts.mean()),
            "rng": RNG_ALGORITHM,
        },
    )
