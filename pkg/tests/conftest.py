import numpy as np
import pytest

from stillsim import data
from stillsim.thermo import ComponentSpec
from stillsim.vle import ChemSystem, NrtlParams


@pytest.fixture(scope="session")
def components():
    return data.load_components()


@pytest.fixture(scope="session")
def mix1_ref():
    return data.load_system("mixture1", "ref")


@pytest.fixture(scope="session")
def mix1_alt1():
    """alt_1 parameter setting: only pair {1,2} alternative."""
    return data.load_system("mixture1", {(0, 1): "alt"})


@pytest.fixture(scope="session")
def mix1_altprime():
    return data.load_system("mixture1", "alt")


def make_component(name="synthetic", antoine=(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
                   dippr=(1.0, 0.0, 0.0, 0.0, 0.0), validity=(1.0, 1e4)):
    return ComponentSpec(name, tuple(antoine), tuple(dippr), validity)


def binary_system(c1, c2, theta, alpha=0.3):
    return ChemSystem([c1, c2], NrtlParams(2, {(0, 1): tuple(theta)}, alpha))


@pytest.fixture(scope="session")
def acetone_methanol(components):
    return binary_system(components["acetone"], components["methanol"],
                         data.pair_params("mixture1", (0, 1), "ref"))


@pytest.fixture(scope="session")
def acetone_butanol(components):
    return binary_system(components["acetone"], components["butanol"],
                         data.pair_params("mixture1", (0, 2), "ref"))
