import numpy as np
import pytest

from fgslab.arrays import SeededRng
from fgslab.diffusion import NoiseSchedule, make_schedule
from fgslab.mixture import MixtureModel


@pytest.fixture
def rng():
    return SeededRng(1234)


@pytest.fixture(scope="session")
def sched100():
    return make_schedule("linear-beta", 100)


@pytest.fixture(scope="session")
def sched_small():
    """Hand-picked alphas so single steps have easy closed-form values."""
    return NoiseSchedule(kind="manual", T=3, alpha=np.array([1.0, 0.8, 0.5, 0.04]))


@pytest.fixture(scope="session")
def unit_gaussian():
    return MixtureModel(weights=[1.0], means=[[0.0]], variances=[1.0])


@pytest.fixture(scope="session")
def two_wells():
    """Equal-weight 1-D pair at +-2 with tight spread."""
    return MixtureModel(weights=[0.5, 0.5], means=[[-2.0], [2.0]], variances=[0.01, 0.01])


def unit_gaussian_eps(sched):
    """Exact denoiser for N(0, I) data: eps*(z, t) = sqrt(1 - alpha_t) z."""

    def eps(value, t, cond):
        return np.sqrt(1.0 - sched.alpha[t]) * np.asarray(value)

    return eps
