"""The Hamiltonian surface H(lambda), or H(x, lambda), over all field regimes.

Constant and slow fields use the closed compound-Poisson form built on the
kernel's exponential moment; periodic and locally periodic fields dispatch to
the torus eigensolver, reporting the flat continuous-spectrum branch outside
the discrete region.  Values are memoized on rounded query points because the
Legendre solves re-query nearby tilts heavily.
"""

from __future__ import annotations

import threading

import numpy as np

from . import torus
from .cache import SpectralCache, result_key


class FlatBranchError(RuntimeError):
    """Gradient requested on the flat branch, where it is a subgradient set."""


def _key(arr):
    return np.round(np.asarray(arr, dtype=float), 12).tobytes()


class Hamiltonian:
    """Callable facade: value/gradient/Hessian of H with membership flags."""

    def __init__(
        self,
        kernel,
        rate_field,
        grid_n=32,
        cache_dir=None,
        edge_fraction=torus.EDGE_FRACTION,
        power_tol=1e-12,
        max_iter=20000,
    ):
        self.kernel = kernel
        self.field = rate_field
        self.grid_n = int(grid_n)
        self.edge_fraction = edge_fraction
        self.power_tol = power_tol
        self.max_iter = max_iter
        self.dim = kernel.dim
        self.regime = rate_field.regime
        self._spectral = {}
        self._values = {}
        self._last_op = (None, None)  # one-slot operator cache; matrices are big
        self._lock = threading.Lock()
        self._disk = SpectralCache(cache_dir) if cache_dir else None
        self.solve_count = 0
        if self.regime == "periodic":
            self._grid = torus.TorusGrid(self.dim, self.grid_n)
            self._frozen = rate_field.freeze()
        elif self.regime == "locally-periodic":
            self._grid = torus.TorusGrid(self.dim, self.grid_n)
            self._frozen = None
        else:
            self._grid = None
            self._frozen = None

    # -- spectral plumbing ---------------------------------------------------

    def _frozen_at(self, x):
        if self.regime == "periodic":
            return self._frozen
        if x is None:
            raise ValueError("locally periodic regime needs an evaluation point x")
        return self.field.freeze(np.asarray(x, dtype=float))

    def spectral_result(self, lam, x=None):
        """The SpectralResult backing H at (x, lam); spectral regimes only."""
        if self.regime in ("constant", "slow"):
            raise ValueError("closed-form regimes have no spectral backing")
        lam = np.asarray(lam, dtype=float).reshape(-1)
        xk = b"" if x is None else _key(x)
        key = (xk, _key(lam))
        with self._lock:
            hit = self._spectral.get(key)
        if hit is not None:
            return hit
        frozen = self._frozen_at(x)
        disk_key = None
        if self._disk is not None:
            disk_key = result_key(
                self.kernel.spec_key(), frozen.spec_key(), self.grid_n, lam
            )
            res = self._disk.get(disk_key)
            if res is not None:
                with self._lock:
                    self._spectral[key] = res
                return res
        op = self._operator(lam, x, frozen=frozen)
        res = torus.principal_eig(
            op,
            tol=self.power_tol,
            max_iter=self.max_iter,
            edge_fraction=self.edge_fraction,
        )
        with self._lock:
            self._spectral[key] = res
            self.solve_count += 1
        if self._disk is not None:
            self._disk.put(disk_key, res)
        return res

    def _operator(self, lam, x=None, frozen=None):
        lam = np.asarray(lam, dtype=float).reshape(-1)
        key = (b"" if x is None else _key(x), _key(lam))
        with self._lock:
            last_key, last_op = self._last_op
        if last_key == key:
            return last_op
        if frozen is None:
            frozen = self._frozen_at(x)
        op = torus.assemble(self._grid, self.kernel, frozen, lam)
        with self._lock:
            self._last_op = (key, op)
        return op

    def _scale(self, x):
        if self.regime == "constant":
            return self.field.lambda_minus
        return self.field.diagonal(np.asarray(x, dtype=float))

    # -- public surface --------------------------------------------------------

    def value(self, lam, x=None):
        """H at the tilt; returns (value, in_gamma)."""
        lam = np.asarray(lam, dtype=float).reshape(-1)
        if lam.shape != (self.dim,):
            raise ValueError(f"tilt must have dimension {self.dim}")
        if self.regime in ("constant", "slow"):
            lk = _key(lam)
            with self._lock:
                m = self._values.get(("moment", lk))
            if m is None:
                m = self.kernel.exp_moment(lam)
                with self._lock:
                    self._values[("moment", lk)] = m
            return (float(self._scale(x) * (m - 1.0)), True)
        res = self.spectral_result(lam, x)
        return (res.theta, res.in_gamma)

    def grad(self, lam, x=None):
        """Gradient of the active branch; errors on the flat branch."""
        lam = np.asarray(lam, dtype=float).reshape(-1)
        if self.regime in ("constant", "slow"):
            lk = _key(lam)
            with self._lock:
                mg = self._values.get(("grad", lk))
            if mg is None:
                mg = self.kernel.exp_moment_grad(lam)
                with self._lock:
                    self._values[("grad", lk)] = mg
            return self._scale(x) * mg
        res = self.spectral_result(lam, x)
        if not res.in_gamma:
            raise FlatBranchError(
                "gradient undefined on the flat branch; the subdifferential "
                "there is not a single point"
            )
        op = self._operator(lam, x)
        return torus.theta_grad(op, res)

    def hess(self, lam, x=None):
        """Hessian of the active branch; errors on the flat branch."""
        lam = np.asarray(lam, dtype=float).reshape(-1)
        if self.regime in ("constant", "slow"):
            lk = _key(lam)
            with self._lock:
                mh = self._values.get(("hess", lk))
            if mh is None:
                mh = self.kernel.exp_moment_hess(lam)
                with self._lock:
                    self._values[("hess", lk)] = mh
            return self._scale(x) * mh
        res = self.spectral_result(lam, x)
        if not res.in_gamma:
            raise FlatBranchError("Hessian undefined on the flat branch")
        op = self._operator(lam, x)
        return torus.theta_hess(op, res)

    def in_gamma(self, lam, x=None):
        return self.value(lam, x)[1]

    def drift(self, x=None):
        """The gradient at zero tilt: the velocity of the effective flow."""
        return self.grad(np.zeros(self.dim), x=x)
