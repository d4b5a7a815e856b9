import pytest

import apl

from helpers import TIGER_TRUE


@pytest.fixture(scope="session")
def tiger_template():
    return apl.tiger_template()


@pytest.fixture(scope="session")
def tiger_model(tiger_template):
    return apl.instantiate(tiger_template, TIGER_TRUE)


@pytest.fixture(scope="session")
def tiger_vf(tiger_model):
    return apl.solve(tiger_model, apl.SolverConfig())


@pytest.fixture(scope="session")
def expert_cfg():
    return apl.PolicyConfig(0.3)


@pytest.fixture(scope="session")
def tiger_demo(tiger_model, tiger_vf, expert_cfg):
    """A fixed 100-step expert demonstration."""
    return apl.generate_demo(tiger_model, tiger_vf, expert_cfg, 100, 42)
