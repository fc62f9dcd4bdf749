"""Optional on-disk cache for spectral results, keyed by content hash."""

from __future__ import annotations

import hashlib
import os

import numpy as np

from .torus import SpectralResult


def result_key(kernel_key, field_key, n, lam):
    lam = np.round(np.asarray(lam, dtype=float), 12)
    payload = f"{kernel_key}|{field_key}|n={n}|lam={lam.tolist()}"
    return hashlib.sha256(payload.encode()).hexdigest()


class SpectralCache:
    """File-per-result store of SpectralResult records as structured text."""

    def __init__(self, directory):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)

    def _path(self, key):
        return os.path.join(self.directory, key + ".txt")

    def get(self, key):
        path = self._path(key)
        if not os.path.exists(path):
            return None
        fields = {}
        with open(path) as fh:
            for line in fh:
                name, _, value = line.partition(":")
                fields[name.strip()] = value.strip()
        try:
            return SpectralResult(
                theta=float(fields["theta"]),
                theta_raw=float(fields["theta_raw"]),
                u=np.array(fields["u"].split(), dtype=float),
                u_star=np.array(fields["u_star"].split(), dtype=float),
                g_min=float(fields["g_min"]),
                g_max=float(fields["g_max"]),
                in_gamma=fields["in_gamma"] == "true",
                residual=float(fields["residual"]),
                iterations=int(fields["iterations"]),
                conv_ratio=float(fields["conv_ratio"]),
            )
        except (KeyError, ValueError):
            return None

    def put(self, key, result):
        lines = [
            f"theta: {float(result.theta)!r}",
            f"theta_raw: {float(result.theta_raw)!r}",
            f"g_min: {float(result.g_min)!r}",
            f"g_max: {float(result.g_max)!r}",
            f"in_gamma: {'true' if result.in_gamma else 'false'}",
            f"residual: {float(result.residual)!r}",
            f"iterations: {int(result.iterations)}",
            f"conv_ratio: {float(result.conv_ratio)!r}",
            "u: " + " ".join(repr(float(v)) for v in result.u),
            "u_star: " + " ".join(repr(float(v)) for v in result.u_star),
        ]
        tmp = self._path(key) + ".tmp"
        with open(tmp, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, self._path(key))
