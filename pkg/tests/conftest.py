import numpy as np
import pytest

from coarseflow.config import TOY_TABLE, config_from_document
from coarseflow.elements import ZINC_TABLE


@pytest.fixture(scope="session")
def zinc_table():
    return ZINC_TABLE


@pytest.fixture(scope="session")
def toy_table():
    return TOY_TABLE


@pytest.fixture(scope="session")
def toy_cfg():
    return config_from_document({"preset": "toy"})


@pytest.fixture(scope="session")
def tiny_cfg():
    # smallest config that still exercises coarsening and both split kinds
    return config_from_document({
        "preset": "toy",
        "n": 8,
        "atom": {"num_blocks": 2, "coarsen_factors": [2], "steps": 1,
                 "rgcn_layers": 1, "hidden": 8},
        "bond": {"num_blocks": 2, "steps": 1, "hidden": 8},
        "batch_size": 8,
    })


@pytest.fixture()
def rng64():
    return np.random.default_rng(1234)
