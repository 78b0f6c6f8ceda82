import numpy as np
import pytest

from slowtorus.experiments import (
    UNTWISTED_DESK,
    VANISHING_DESK,
    build_systems,
    wm_desk_profile,
)


@pytest.fixture(scope="session")
def untwisted_built():
    return build_systems("untwisted", UNTWISTED_DESK, 3)


@pytest.fixture(scope="session")
def untwisted_sys2(untwisted_built):
    return untwisted_built.system(2)


@pytest.fixture(scope="session")
def untwisted_sys3(untwisted_built):
    return untwisted_built.system(3)


@pytest.fixture(scope="session")
def vanishing_built():
    return build_systems("untwisted", VANISHING_DESK, 4)


@pytest.fixture(scope="session")
def wm_systems():
    out = {}
    for q2 in (8, 16):
        built = build_systems("weak_mixing", wm_desk_profile(q2), 2, seed=101)
        out[q2] = built.system(2)
    return out


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.Philox(20240814))
