import warnings

import pytest

from hallfem.experiments import get_preset
from hallfem.feec import TraceViolationWarning
from hallfem.scheme import Discretization, SchemeConfig, initialize_state


@pytest.fixture(scope="session")
def abc_initial_16():
    """Initial state of the ABC setup on the n=16 cube (shared, slow to build)."""
    cfg = SchemeConfig.from_preset("abc3d", n=16)
    disc = Discretization.build(16, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TraceViolationWarning)
        state = initialize_state(cfg, get_preset("abc3d").data, disc)
    return cfg, disc, state
