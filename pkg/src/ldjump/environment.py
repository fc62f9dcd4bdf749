"""Rate fields: the positive bounded environment coefficient in four regimes.

Regimes: constant, periodic in the fast pair (xi, eta), slow in (x, y), and
locally periodic in all four arguments.  Freezing the slow variables at a
point yields the pure-periodic pair field consumed by the torus solver.
"""

from __future__ import annotations

import numpy as np

REGIMES = ("constant", "periodic", "slow", "locally-periodic")


class FieldBoundError(ValueError):
    """An evaluation left the declared [lambda_minus, lambda_plus] band."""


def torus_dist(z):
    """Componentwise distance to the nearest integer lattice point."""
    return np.abs((np.asarray(z) + 0.5) % 1.0 - 0.5)


class FrozenPairField:
    """Pure-periodic pair field (xi, eta) -> value, with its bounds.

    This is what the torus assembly consumes; constant fields short-circuit.
    """

    def __init__(self, fn, lambda_minus, lambda_plus, key, constant_value=None):
        self._fn = fn
        self.lambda_minus = float(lambda_minus)
        self.lambda_plus = float(lambda_plus)
        self.key = key
        self.constant_value = constant_value

    @property
    def is_constant(self):
        return self.constant_value is not None

    def __call__(self, xi, eta):
        if self.is_constant:
            shape = np.broadcast_shapes(np.shape(xi)[:-1], np.shape(eta)[:-1])
            return np.full(shape, self.constant_value)
        vals = np.asarray(self._fn(np.asarray(xi, float), np.asarray(eta, float)), float)
        _check_bounds(vals, self.lambda_minus, self.lambda_plus)
        return vals

    def pair_matrix(self, coords):
        """Matrix of values on all ordered node pairs of a torus grid."""
        n = coords.shape[0]
        if self.is_constant:
            return np.full((n, n), self.constant_value)
        return np.asarray(self(coords[:, None, :], coords[None, :, :]), float)

    def spec_key(self):
        return self.key


def _check_bounds(vals, lo, hi, tol=1e-9):
    if np.any(vals < lo - tol) or np.any(vals > hi + tol):
        bad_lo = float(np.min(vals))
        bad_hi = float(np.max(vals))
        raise FieldBoundError(
            f"field value range [{bad_lo}, {bad_hi}] leaves [{lo}, {hi}]"
        )


class RateField:
    """Environment coefficient with regime dispatch and two-sided bounds."""

    def __init__(self, regime, fn, lambda_minus, lambda_plus, name="custom"):
        if regime not in REGIMES:
            raise ValueError(f"unknown regime {regime!r}; one of {REGIMES}")
        if not (0 < lambda_minus <= lambda_plus):
            raise ValueError("bounds must satisfy 0 < lambda_minus <= lambda_plus")
        self.regime = regime
        self._fn = fn
        self.lambda_minus = float(lambda_minus)
        self.lambda_plus = float(lambda_plus)
        self.name = name

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, value):
        if value <= 0:
            raise ValueError("constant rate must be positive")
        return cls("constant", None, value, value, name=f"constant({value!r})")

    @classmethod
    def periodic(cls, fn, lambda_minus, lambda_plus, name="periodic"):
        """fn(xi, eta) with xi, eta shaped (..., d), periodic in both."""
        return cls("periodic", fn, lambda_minus, lambda_plus, name)

    @classmethod
    def slow(cls, fn, lambda_minus, lambda_plus, name="slow"):
        """fn(x, y) continuous in the slow variables."""
        return cls("slow", fn, lambda_minus, lambda_plus, name)

    @classmethod
    def locally_periodic(cls, fn, lambda_minus, lambda_plus, name="locally-periodic"):
        """fn(x, y, xi, eta), periodic in the last two arguments."""
        return cls("locally-periodic", fn, lambda_minus, lambda_plus, name)

    # -- evaluation ----------------------------------------------------------

    def eval_scaled(self, x, y, eps):
        """Physical-space value at scale eps: dispatches on the regime."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.regime == "constant":
            shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
            return (
                self.lambda_minus
                if shape == ()
                else np.full(shape, self.lambda_minus)
            )
        if self.regime == "periodic":
            vals = self._fn((x / eps) % 1.0, (y / eps) % 1.0)
        elif self.regime == "slow":
            vals = self._fn(x, y)
        else:
            vals = self._fn(x, y, (x / eps) % 1.0, (y / eps) % 1.0)
        vals = np.asarray(vals, dtype=float)
        _check_bounds(vals, self.lambda_minus, self.lambda_plus)
        return float(vals) if vals.ndim == 0 else vals

    def diagonal(self, x):
        """Lambda(x, x) with the fast variables frozen on the diagonal."""
        x = np.asarray(x, dtype=float)
        if self.regime == "constant":
            return self.lambda_minus
        if self.regime == "periodic":
            raise ValueError("diagonal value of a fast-periodic field is not scalar")
        if self.regime == "slow":
            v = float(np.asarray(self._fn(x, x)))
        else:
            z = np.zeros_like(x)
            v = float(np.asarray(self._fn(x, x, z, z)))
        _check_bounds(np.asarray(v), self.lambda_minus, self.lambda_plus)
        return v

    def freeze(self, x=None):
        """Pure-periodic pair field at frozen slow point x.

        Constant and slow regimes freeze to a constant field Lambda(x, x).
        """
        if self.regime == "constant":
            return FrozenPairField(
                None,
                self.lambda_minus,
                self.lambda_plus,
                key=self.name,
                constant_value=self.lambda_minus,
            )
        if self.regime == "periodic":
            return FrozenPairField(
                self._fn, self.lambda_minus, self.lambda_plus, key=self.name
            )
        if x is None:
            raise ValueError(f"{self.regime} regime requires a freeze point")
        x = np.asarray(x, dtype=float)
        xk = np.round(x, 12)
        if self.regime == "slow":
            val = self.diagonal(x)
            return FrozenPairField(
                None,
                self.lambda_minus,
                self.lambda_plus,
                key=f"{self.name}@x={xk.tolist()}",
                constant_value=val,
            )
        fn = self._fn

        def frozen(xi, eta):
            return fn(x, x, xi, eta)

        return FrozenPairField(
            frozen,
            self.lambda_minus,
            self.lambda_plus,
            key=f"{self.name}@x={xk.tolist()}",
        )

    # -- diagnostics ---------------------------------------------------------

    def continuity_probe(self, x0, scales=(0.1, 0.01, 0.001), rng=None, samples=64):
        """Estimated modulus of continuity in the slow variables near x0.

        Uniform continuity is assumed of user closures, not enforced; this
        probe only reports how fast diagonal values move at a few scales.
        """
        if self.regime in ("constant", "periodic"):
            return {s: 0.0 for s in scales}
        if rng is None:
            rng = np.random.default_rng(7)
        x0 = np.asarray(x0, dtype=float)
        base = self.diagonal(x0)
        out = {}
        for s in scales:
            deltas = rng.normal(size=(samples, x0.size))
            deltas *= s / np.linalg.norm(deltas, axis=1, keepdims=True)
            vals = [self.diagonal(x0 + d) for d in deltas]
            out[s] = float(np.max(np.abs(np.asarray(vals) - base)))
        return out

    def spec_key(self):
        return f"{self.regime}:{self.name}:[{self.lambda_minus},{self.lambda_plus}]"

    def __repr__(self):
        return f"RateField({self.spec_key()})"


# -- built-in field library ---------------------------------------------------


def cosine_pair_field(base, amp, dim=1, freq=1):
    """base + amp*cos(2 pi freq sum_i (xi_i - eta_i)); bounds base -/+ amp."""
    if not (0 < amp < base):
        raise ValueError("need 0 < amp < base for positivity")

    def fn(xi, eta):
        s = np.sum(np.asarray(xi) - np.asarray(eta), axis=-1)
        return base + amp * np.cos(2 * np.pi * freq * s)

    return RateField.periodic(
        fn, base - amp, base + amp, name=f"cosine-pair({base},{amp},f={freq})"
    )


def trig_pair_field(c0, terms, dim=1):
    """Trigonometric pair polynomial c0 + sum amp*cos(2 pi (kxi.xi - keta.eta) + phase).

    ``terms`` is a list of (amp, kxi, keta, phase) with integer wave vectors.
    Bounds are the conservative c0 -/+ sum |amp|.
    """
    total = sum(abs(t[0]) for t in terms)
    if total >= c0:
        raise ValueError("amplitudes must sum below the constant term")
    parsed = [
        (float(a), np.asarray(kx, float).reshape(-1), np.asarray(ke, float).reshape(-1), float(ph))
        for a, kx, ke, ph in terms
    ]

    def fn(xi, eta):
        xi = np.asarray(xi, float)
        eta = np.asarray(eta, float)
        out = np.full(np.broadcast_shapes(xi.shape[:-1], eta.shape[:-1]), c0)
        for a, kx, ke, ph in parsed:
            out = out + a * np.cos(2 * np.pi * (xi @ kx - eta @ ke) + ph)
        return out

    return RateField.periodic(
        fn, c0 - total, c0 + total, name=f"trig({c0},{len(terms)} terms)"
    )


def smoothstep(t):
    """C^1 monotone ramp on [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def single_peak_profile(alpha1, c, z0, alpha2=None):
    """Periodic single-peak profile: plateau alpha2 within c/2 of z0, floor
    alpha1 beyond c, C^1 smoothstep blend in the annulus.

    With ``alpha2=None`` the plateau height is set so the profile integrates
    to one over the unit cell (matching a unit-mass box kernel).
    Returns (profile_fn, alpha2).
    """
    if not (0 < alpha1):
        raise ValueError("floor must be positive")
    if not (0 < c < 0.5):
        raise ValueError("peak radius must sit inside the cell")
    z0 = np.atleast_1d(np.asarray(z0, float))
    d = z0.size
    if alpha2 is None:
        # cell integral of the blend shape: plateau ball + smoothstep annulus
        if d == 1:
            vol = 2 * (c / 2) + 2 * (c / 2) * 0.5  # = 1.5 c
        else:
            # Monte Carlo once, deterministic seed; adequate for a scenario tool
            rng = np.random.default_rng(2024)
            pts = rng.uniform(-0.5, 0.5, size=(200_000, d))
            r = np.linalg.norm(pts, axis=1)
            vol = float(np.mean(smoothstep((c - r) / (c / 2))))
        alpha2 = (1.0 - alpha1 * (1.0 - vol)) / vol
        if alpha2 <= alpha1:
            raise ValueError("normalization produced no peak; shrink alpha1 or c")

    def profile(z):
        z = np.asarray(z, float)
        if z.ndim == 0 or z.shape[-1:] != (d,):
            z = z[..., None] if d == 1 else z
        r = np.linalg.norm(torus_dist(z - z0), axis=-1)
        return alpha1 + (alpha2 - alpha1) * smoothstep((c - r) / (c / 2.0))

    return profile, float(alpha2)


def cusp_profile(floor, amp, x0=0.5, power=0.25):
    """floor + amp*dist(x, x0)^power, a sharp-minimum periodic profile.

    The sub-linear power keeps 1/(profile - floor)^2 integrable, which is what
    the bounded-multiplier construction for a nontrivial flat Hamiltonian
    branch requires.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))

    def fn(x):
        x = np.asarray(x, float)
        if x.ndim == 0 or x.shape[-1:] != x0.shape:
            x = x[..., None] if x0.size == 1 else x
        r = np.linalg.norm(torus_dist(x - x0), axis=-1)
        return floor + amp * r**power

    return fn


def peak_product_field(b_fn, profile, lambda_minus, lambda_plus, name="peak-product"):
    """Separable pair field b(xi) * profile(xi - eta)."""

    def fn(xi, eta):
        xi = np.asarray(xi, float)
        eta = np.asarray(eta, float)
        return np.asarray(b_fn(xi)) * np.asarray(profile(xi - eta))

    return RateField.periodic(fn, lambda_minus, lambda_plus, name=name)
