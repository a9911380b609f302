import numpy as np
import pytest

from grushin_lab.spectral_core import OscillatorSpec, eigenpairs


@pytest.fixture(scope="session")
def gaussian_kernel_solution():
    """h=1, c1=-1: vanishing ground eigenvalue with Gaussian kernel."""
    spec = OscillatorSpec.auto(1, 1.0, -1.0)
    return eigenpairs(spec, 2)


@pytest.fixture(scope="session")
def quartic_kernel_solution():
    """h=3, c1=-3: vanishing ground eigenvalue with exp(-t^4/4) kernel."""
    spec = OscillatorSpec.auto(3, 1.0, -3.0)
    return eigenpairs(spec, 2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240613)
