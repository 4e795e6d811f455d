import numpy as np
import pytest

from discert.bellops import chsh
from discert.extract import GridSpec, xi_lower_bound

RT2 = np.sqrt(2.0)
ETA_Q = 2.0 * RT2


@pytest.fixture(scope="session")
def chsh_f():
    return chsh()


@pytest.fixture(scope="session")
def curve_01(chsh_f):
    """Moderate-resolution sweep shared by extract/security/envelope tests."""
    return xi_lower_bound(chsh_f, GridSpec(delta=0.1, mode="paper"), workers=1)


@pytest.fixture(scope="session")
def curve_02(chsh_f):
    """Coarse sweep; exactly double the spacing of curve_01 for refinement checks."""
    return xi_lower_bound(chsh_f, GridSpec(delta=0.2, mode="paper"), workers=1)
