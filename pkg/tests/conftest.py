import numpy as np
import pytest

from lucidlab.scene import default_scene, make_workspace_scene


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture(scope="session")
def workspace_scene():
    return make_workspace_scene()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
