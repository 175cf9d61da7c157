import numpy as np
import pytest

from stokes_ctm.domain import build_domain, control_mask
from stokes_ctm.stokesop import eig_modes


@pytest.fixture(scope="session")
def dom32():
    return build_domain(0.5, 0.15, 32)


@pytest.fixture(scope="session")
def modes32(dom32):
    return eig_modes(dom32, 200)


@pytest.fixture(scope="session")
def mask32(dom32):
    return control_mask(dom32)


@pytest.fixture(scope="session")
def dom16():
    return build_domain(0.5, 0.15, 16)


@pytest.fixture(scope="session")
def modes16(dom16):
    return eig_modes(dom16, 60)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
