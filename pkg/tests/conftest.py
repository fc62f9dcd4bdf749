import numpy as np
import pytest

from ldjump.environment import RateField, cosine_pair_field, trig_pair_field
from ldjump.kernels import BoxKernel, TabulatedKernel, standard_gaussian
from ldjump.scenarios import find_gamma_gap


@pytest.fixture(scope="session")
def gauss1():
    return standard_gaussian(1)


@pytest.fixture(scope="session")
def gauss2():
    return standard_gaussian(2)


@pytest.fixture(scope="session")
def box1():
    return BoxKernel(1)


@pytest.fixture(scope="session")
def box2():
    return BoxKernel(2)


@pytest.fixture(scope="session")
def shifted_table():
    """Asymmetric tabulated kernel: unit-variance Gaussian shifted to mean 1."""
    z = np.linspace(-5.0, 7.0, 1201)
    return TabulatedKernel(z, np.exp(-0.5 * (z - 1.0) ** 2), envelope=(2.0, 0.04, 2.0))


@pytest.fixture(scope="session")
def const_field():
    return RateField.constant(1.0)


@pytest.fixture(scope="session")
def cosine_field():
    return cosine_pair_field(1.5, 0.5)


@pytest.fixture(scope="session")
def periodic_fields():
    """Five 1d periodic test fields of varied shape."""

    def two_mode(xi, eta):
        s = np.sum(xi - eta, axis=-1)
        t = np.sum(xi + eta, axis=-1)
        return 2.0 + 0.4 * np.cos(2 * np.pi * s) + 0.3 * np.sin(2 * np.pi * t)

    return [
        cosine_pair_field(1.5, 0.5),
        cosine_pair_field(2.0, 0.25, freq=2),
        trig_pair_field(1.2, [(0.3, [1], [0], 0.0), (0.2, [0], [1], 0.5)]),
        RateField.periodic(two_mode, 1.3, 2.7, name="two-mode"),
        trig_pair_field(3.0, [(0.5, [1], [1], 0.0), (0.25, [2], [1], 1.0)]),
    ]


@pytest.fixture(scope="session")
def slow_field():
    def fn(x, y):
        s = 0.5 * (np.sum(np.asarray(x), axis=-1) + np.sum(np.asarray(y), axis=-1))
        return 1.25 + 0.25 * np.cos(0.5 * s)

    return RateField.slow(fn, 1.0, 1.5, name="cos-slow")


@pytest.fixture(scope="session")
def gap_scenario():
    return find_gamma_gap(n=64, lam_step=1.0)
