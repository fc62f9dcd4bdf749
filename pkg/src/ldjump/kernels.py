"""Convolution jump kernels: densities, exponential moments, exact samplers.

Every kernel is a probability density a(z) on R^d lying under a
super-exponential envelope C*exp(-k|z|^p), p > 1, which makes all exponential
moments finite and truncated quadrature certifiable.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy.special import gamma as gamma_fn


class KernelError(ValueError):
    """Invalid kernel definition or an operation outside its contract."""


class EnvelopeError(KernelError):
    """Density exceeds its declared decay envelope."""


class SamplerError(RuntimeError):
    """Rejection sampler exhausted its attempt budget (envelope misconfigured)."""


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def _max_axis_points(dim):
    # keeps tensor grids below ~2M nodes
    return {1: 1 << 15, 2: 1 << 10, 3: (1 << 7)}.get(dim, 65)


def _tensor_trapezoid(fn, lo, hi, dim, tol=1e-12, n0=65, nmax=None):
    """Composite trapezoid on a box with doubling and one Richardson step.

    ``fn`` maps an (m, dim) array of points to (m,) values.
    """
    if nmax is None:
        nmax = _max_axis_points(dim)
    n = n0
    prev = None
    while True:
        axes = [np.linspace(lo[a], hi[a], n) for a in range(dim)]
        if dim == 1:
            pts = axes[0][:, None]
        else:
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        vals = fn(pts).reshape([n] * dim)
        acc = vals
        for a in range(dim):
            h = (hi[a] - lo[a]) / (n - 1)
            acc = np.trapezoid(acc, dx=h, axis=0)
        cur = float(acc)
        if prev is not None:
            extrap = cur + (cur - prev) / 3.0
            if abs(cur - prev) <= tol * max(1.0, abs(cur)) or 2 * n - 1 > nmax:
                return extrap
        prev = cur
        n = 2 * n - 1


class JumpKernel:
    """Base class: nonnegative density with unit mass and decay envelope.

    Subclasses provide ``density`` and the exact samplers; the quadrature
    machinery (exponential moments and half-space masses) lives here.
    """

    family = "abstract"

    def __init__(self, dim, decay_c, decay_k, decay_p):
        if dim < 1:
            raise KernelError("dimension must be >= 1")
        if decay_c <= 0 or decay_k <= 0:
            raise KernelError("envelope constants C, k must be positive")
        if decay_p <= 1:
            raise KernelError("envelope exponent p must exceed 1")
        self.dim = int(dim)
        self.decay_c = float(decay_c)
        self.decay_k = float(decay_k)
        self.decay_p = float(decay_p)

    # -- density ---------------------------------------------------------

    def density(self, pts):
        raise NotImplementedError

    def log_density(self, pts):
        """log a(z), -inf on zero density; keeps tilted products NaN-free."""
        with np.errstate(divide="ignore"):
            return np.log(self.density(pts))

    def tilted_density(self, pts, lam):
        """a(z) exp(-lam.z) evaluated in log space (no 0*inf artifacts)."""
        with np.errstate(over="ignore"):
            return np.exp(self.log_density(pts) - pts @ lam)

    def eval(self, z):
        """a(z) for a single point (d,) or a batch (n, d)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.ndim == 1:
            return float(self.density(z[None, :])[0])
        return self.density(z)

    # -- truncation ------------------------------------------------------

    def support_radius(self):
        """Radius beyond which the density is exactly zero, or None."""
        return None

    def envelope_log(self, r, lam_norm=0.0):
        """log of C*exp(-k r^p + |lam| r), the tilted envelope at radius r."""
        return (
            math.log(self.decay_c)
            - self.decay_k * r**self.decay_p
            + lam_norm * r
        )

    def truncation_radius(self, lam_norm=0.0, log_target=None):
        """Box half-width R so the tilted envelope tail is negligible.

        The envelope decays super-exponentially, so the exponential tilt is
        always beaten and R is finite.
        """
        sup = self.support_radius()
        if sup is not None:
            return sup
        rpk = (lam_norm / (self.decay_k * self.decay_p)) ** (
            1.0 / (self.decay_p - 1.0)
        ) if lam_norm > 0 else 0.0
        if log_target is None:
            # relative to the tilted peak so large tilts stay accurate
            log_target = self.envelope_log(rpk, lam_norm) + math.log(1e-15)
        r = max(1.0, rpk + 1.0)  # start past the peak, where the tail decays
        while True:
            if self.envelope_log(r, lam_norm) + self.dim * math.log(2 * r + 1) < log_target:
                return r
            r *= 1.25
            if r > 1e4:
                raise KernelError("truncation radius overflow; tilt too large")

    def quad_bounds(self, lam_norm=0.0):
        """Per-axis integration interval; aligned with the exact support when
        the density is compactly supported (its edge jumps stay endpoints)."""
        r = self.truncation_radius(lam_norm)
        return -r, r

    def quad_nodes(self, lam_norm=0.0, n=None):
        """1D trapezoid nodes/weights per axis on the truncated interval."""
        lo, hi = self.quad_bounds(lam_norm)
        if n is None:
            n = min(_max_axis_points(self.dim), 1 + (1 << 12) // (4 ** (self.dim - 1)))
        x = np.linspace(lo, hi, n)
        w = np.full(n, x[1] - x[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return x, w

    # -- exponential moments ---------------------------------------------

    def exp_moment(self, lam):
        """M(lam) = integral of a(z) exp(-lam.z) dz."""
        return self._moments(lam, order=0)[0]

    def exp_moment_grad(self, lam):
        """Gradient of M: integral of a(z) (-z) exp(-lam.z) dz."""
        return self._moments(lam, order=1)[1]

    def exp_moment_hess(self, lam):
        """Hessian of M: integral of a(z) z z^T exp(-lam.z) dz."""
        return self._moments(lam, order=2)[2]

    def exp_moment_all(self, lam):
        """(M, grad M, hess M) in one pass."""
        return self._moments(lam, order=2)

    def _moments(self, lam, order):
        lam = _check_lam(lam, self.dim)
        lo, hi = self.quad_bounds(float(np.linalg.norm(lam)))

        m0 = _tensor_trapezoid(
            lambda p: self.tilted_density(p, lam),
            [lo] * self.dim,
            [hi] * self.dim,
            self.dim,
        )
        grad = None
        hess = None
        if order >= 1:
            grad = np.array(
                [
                    _tensor_trapezoid(
                        lambda p, i=i: -p[:, i] * self.tilted_density(p, lam),
                        [lo] * self.dim,
                        [hi] * self.dim,
                        self.dim,
                    )
                    for i in range(self.dim)
                ]
            )
        if order >= 2:
            hess = np.empty((self.dim, self.dim))
            for i in range(self.dim):
                for j in range(i + 1):
                    v = _tensor_trapezoid(
                        lambda p, i=i, j=j: p[:, i]
                        * p[:, j]
                        * self.tilted_density(p, lam),
                        [lo] * self.dim,
                        [hi] * self.dim,
                        self.dim,
                    )
                    hess[i, j] = hess[j, i] = v
        return m0, grad, hess

    def mean(self):
        """First moment of a."""
        return -self.exp_moment_grad(np.zeros(self.dim))

    def covariance(self):
        """Second-moment matrix of a."""
        return self.exp_moment_hess(np.zeros(self.dim))

    # -- half-space masses -------------------------------------------------

    def halfspace_mass(self, alpha):
        """Mass of {z.alpha > 0}; points on the hyperplane count half."""
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if alpha.shape != (self.dim,):
            raise KernelError("direction has wrong dimension")
        nrm = np.linalg.norm(alpha)
        if nrm < 1e-12:
            raise KernelError("zero direction vector")
        if abs(nrm - 1.0) > 1e-6:
            raise KernelError("direction must be a unit vector")
        alpha = alpha / nrm
        lo, hi = self.quad_bounds(0.0)
        plane_tol = 1e-12 * max(1.0, hi - lo)

        def f(pts):
            s = pts @ alpha
            side = np.where(s > plane_tol, 1.0, np.where(s < -plane_tol, 0.0, 0.5))
            return self.density(pts) * side

        return _tensor_trapezoid(
            f, [lo] * self.dim, [hi] * self.dim, self.dim, tol=1e-10
        )

    def min_halfspace_mass(self, rng=None, extra_directions=None):
        """Certificate for the uniform half-space mass bound on a sphere mesh.

        Mesh: the 2d axis directions plus 100*d random ones; the reported
        minimum is a certificate over the mesh, not a proof.
        """
        if rng is None:
            rng = np.random.default_rng(0)
        if extra_directions is None:
            extra_directions = 100 * self.dim
        dirs = []
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            dirs.append(e.copy())
            dirs.append(-e)
        if self.dim == 1:
            extra = []
        else:
            g = rng.normal(size=(extra_directions, self.dim))
            extra = list(g / np.linalg.norm(g, axis=1, keepdims=True))
        vals = [self.halfspace_mass(a) for a in dirs + extra]
        return float(min(vals))

    # -- sampling ----------------------------------------------------------

    def sample(self, rng, size=1):
        raise NotImplementedError

    def sample_tilted(self, rng, lam, size=1):
        """Exact draws from a(z) exp(-lam.z)/M(lam)."""
        raise NotImplementedError

    # -- validation / identity ----------------------------------------------

    def validate(self, rng=None, mesh_points=512):
        """Invariant report: normalization, envelope, half-space certificate."""
        if rng is None:
            rng = np.random.default_rng(1)
        lo, hi = self.quad_bounds(0.0)
        pts = rng.uniform(lo, hi, size=(mesh_points, self.dim))
        dens = self.density(pts)
        env = self.decay_c * np.exp(
            -self.decay_k * np.linalg.norm(pts, axis=1) ** self.decay_p
        )
        report = {
            "normalization": self.exp_moment(np.zeros(self.dim)),
            "min_density": float(dens.min()),
            "max_envelope_violation": float(np.max(dens - env)),
            "c0_certificate": self.min_halfspace_mass(rng=rng),
        }
        report["ok"] = (
            abs(report["normalization"] - 1.0) < 1e-6
            and report["min_density"] >= 0.0
            and report["max_envelope_violation"] <= 1e-9
            and report["c0_certificate"] > 0.0
        )
        return report

    def _check_basic(self):
        m0 = self.exp_moment(np.zeros(self.dim))
        if abs(m0 - 1.0) > 1e-6:
            raise KernelError(f"kernel mass is {m0!r}, not 1")
        rng = np.random.default_rng(12345)
        lo, hi = self.quad_bounds(0.0)
        pts = rng.uniform(lo, hi, size=(256, self.dim))
        dens = self.density(pts)
        if np.any(dens < -1e-15):
            raise KernelError("negative density values")
        env = self.decay_c * np.exp(
            -self.decay_k * np.linalg.norm(pts, axis=1) ** self.decay_p
        )
        if np.max(dens - env) > 1e-9:
            raise EnvelopeError("density exceeds its decay envelope")

    def spec_key(self):
        raise NotImplementedError

    def __repr__(self):
        return self.spec_key()


def _check_lam(lam, dim):
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape != (dim,):
        raise KernelError(f"tilt vector must have dimension {dim}")
    if not np.all(np.isfinite(lam)):
        raise KernelError("tilt vector must be finite")
    return lam


def _unit_directions(rng, n, dim):
    if dim == 1:
        return np.where(rng.uniform(size=(n, 1)) < 0.5, -1.0, 1.0)
    g = rng.normal(size=(n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class GeneralizedGaussianKernel(JumpKernel):
    """a(z) = c exp(-k |z|^p) with c chosen so the mass is one.

    ``k=1/2, p=2, dim=1`` is the standard Gaussian.
    """

    family = "generalized-gaussian"

    def __init__(self, dim, k, p):
        if p <= 1:
            raise KernelError("p must exceed 1")
        norm = 1.0 / (
            sphere_area(dim) * gamma_fn(dim / p) / (p * k ** (dim / p))
        )
        super().__init__(dim, decay_c=norm, decay_k=k, decay_p=p)
        self.norm_const = norm
        self._check_basic()

    def density(self, pts):
        r = np.linalg.norm(pts, axis=-1)
        return self.norm_const * np.exp(-self.decay_k * r**self.decay_p)

    def log_density(self, pts):
        r = np.linalg.norm(pts, axis=-1)
        return math.log(self.norm_const) - self.decay_k * r**self.decay_p

    def sample(self, rng, size=1):
        # |z|^p is Gamma(d/p)-distributed up to the 1/k scale
        s = rng.gamma(self.dim / self.decay_p, 1.0, size=size)
        r = (s / self.decay_k) ** (1.0 / self.decay_p)
        return r[:, None] * _unit_directions(rng, size, self.dim)

    def sample_tilted(self, rng, lam, size=1, max_attempts=1000):
        lam = _check_lam(lam, self.dim)
        if np.all(lam == 0.0):
            return self.sample(rng, size)
        if self.decay_p == 2.0:
            # the tilt of a Gaussian is the shifted Gaussian, no rejection
            sd = 1.0 / math.sqrt(2.0 * self.decay_k)
            mean = -lam / (2.0 * self.decay_k)
            return mean[None, :] + sd * rng.normal(size=(size, self.dim))
        # envelope with half the decay rate keeps the acceptance ratio bounded
        k2 = 0.5 * self.decay_k
        proposal = GeneralizedGaussianKernel(self.dim, k2, self.decay_p)
        ln = float(np.linalg.norm(lam))
        rstar = (ln / (self.decay_p * k2)) ** (1.0 / (self.decay_p - 1.0))
        log_bound = ln * rstar - k2 * rstar**self.decay_p
        out = np.empty((size, self.dim))
        filled = 0
        attempts = 0
        while filled < size:
            m = size - filled
            z = proposal.sample(rng, m)
            log_ratio = (
                -k2 * np.linalg.norm(z, axis=1) ** self.decay_p - z @ lam - log_bound
            )
            acc = np.log(rng.uniform(size=m)) < log_ratio
            na = int(acc.sum())
            out[filled : filled + na] = z[acc]
            filled += na
            attempts += m
            if attempts > max_attempts * size:
                raise SamplerError("tilted rejection sampler exceeded its budget")
        return out

    def spec_key(self):
        return f"gg(d={self.dim},k={self.decay_k!r},p={self.decay_p!r})"


class BoxKernel(JumpKernel):
    """Indicator of the centered unit box [-1/2, 1/2]^d (height 1)."""

    family = "box"

    def __init__(self, dim):
        # an inclusive envelope: C e^{-k|z|^p} >= 1 on the whole support
        super().__init__(dim, decay_c=math.exp(dim / 4.0), decay_k=1.0, decay_p=2.0)
        self.norm_const = 1.0
        self._check_basic()

    def support_radius(self):
        return 0.5

    def density(self, pts):
        return np.all(np.abs(pts) <= 0.5 + 1e-15, axis=-1).astype(float)

    def sample(self, rng, size=1):
        return rng.uniform(-0.5, 0.5, size=(size, self.dim))

    def sample_tilted(self, rng, lam, size=1, max_attempts=None):
        lam = _check_lam(lam, self.dim)
        out = np.empty((size, self.dim))
        u = rng.uniform(size=(size, self.dim))
        for i, li in enumerate(lam):
            if abs(li) < 1e-12:
                out[:, i] = u[:, i] - 0.5
            else:
                # inverse transform of the exponential density on [-1/2, 1/2]
                out[:, i] = -(li / 2 + np.log1p(-u[:, i] * (1 - math.exp(-li)))) / li
        return out

    def spec_key(self):
        return f"box(d={self.dim})"


class TabulatedKernel(JumpKernel):
    """One-dimensional kernel given by a (z, value) table, linearly interpolated.

    The table is normalized at construction; the caller must supply the decay
    envelope (C, k, p), which is enforced pointwise on the normalized table.
    """

    family = "tabulated"

    def __init__(self, z, values, envelope):
        z = np.asarray(z, dtype=float)
        values = np.asarray(values, dtype=float)
        if z.ndim != 1 or z.shape != values.shape or z.size < 2:
            raise KernelError("table must be two equal 1D columns")
        if np.any(np.diff(z) <= 0):
            raise KernelError("table abscissae must be strictly increasing")
        if np.any(values < 0):
            raise KernelError("table values must be nonnegative")
        c, k, p = envelope
        super().__init__(1, decay_c=c, decay_k=k, decay_p=p)
        mass = np.trapezoid(values, z)
        if mass <= 0:
            raise KernelError("table has zero mass")
        self.z = z
        self.values = values / mass
        env = self.decay_c * np.exp(-self.decay_k * np.abs(z) ** self.decay_p)
        if np.max(self.values - env) > 1e-9:
            raise EnvelopeError("normalized table exceeds the supplied envelope")
        self.norm_const = 1.0 / mass
        self._check_basic()

    def support_radius(self):
        return float(max(abs(self.z[0]), abs(self.z[-1])))

    def quad_bounds(self, lam_norm=0.0):
        return float(self.z[0]), float(self.z[-1])

    def density(self, pts):
        x = np.asarray(pts)[..., 0]
        return np.interp(x, self.z, self.values, left=0.0, right=0.0)

    def _envelope_proposal(self):
        return GeneralizedGaussianKernel(1, self.decay_k, self.decay_p)

    def sample(self, rng, size=1, max_attempts=1000):
        prop = self._envelope_proposal()
        out = np.empty((size, 1))
        filled = 0
        attempts = 0
        while filled < size:
            m = size - filled
            zc = prop.sample(rng, m)
            env = self.decay_c * np.exp(
                -self.decay_k * np.abs(zc[:, 0]) ** self.decay_p
            )
            acc = rng.uniform(size=m) * env < self.density(zc)
            na = int(acc.sum())
            out[filled : filled + na] = zc[acc]
            filled += na
            attempts += m
            if attempts > max_attempts * size:
                raise SamplerError("rejection sampler exceeded its budget")
        return out

    def sample_tilted(self, rng, lam, size=1, max_attempts=1000):
        lam = _check_lam(lam, 1)
        if lam[0] == 0.0:
            return self.sample(rng, size, max_attempts)
        prop = self._envelope_proposal()
        out = np.empty((size, 1))
        filled = 0
        attempts = 0
        while filled < size:
            m = size - filled
            zc = prop.sample_tilted(rng, lam, m)
            env = self.decay_c * np.exp(
                -self.decay_k * np.abs(zc[:, 0]) ** self.decay_p
            )
            acc = rng.uniform(size=m) * env < self.density(zc)
            na = int(acc.sum())
            out[filled : filled + na] = zc[acc]
            filled += na
            attempts += m
            if attempts > max_attempts * size:
                raise SamplerError("tilted rejection sampler exceeded its budget")
        return out

    def spec_key(self):
        h = hashlib.sha256()
        h.update(self.z.tobytes())
        h.update(self.values.tobytes())
        return (
            f"table(sha={h.hexdigest()[:12]},C={self.decay_c!r},"
            f"k={self.decay_k!r},p={self.decay_p!r})"
        )


def standard_gaussian(dim=1):
    """The k=1/2, p=2 member: the standard normal density."""
    return GeneralizedGaussianKernel(dim, k=0.5, p=2.0)
