import numpy as np
import pytest

from mdtsim.config import AppConfig
from mdtsim.domain import PatientCase, default_treatments
from mdtsim.sim import generate_case


@pytest.fixture
def config():
    return AppConfig()


@pytest.fixture
def treatments():
    return default_treatments()


@pytest.fixture
def case():
    return generate_case(4242, difficulty=0.5, case_id="case-fixture")


def toy_case(features, hidden_label=None):
    """Small hand-built case: one block per quarter of the vector."""
    d = len(features)
    q = d // 4
    blocks = {
        "demographics": (0, q),
        "vitals": (q, 2 * q),
        "labs": (2 * q, 3 * q),
        "comorbidities": (3 * q, d),
    }
    return PatientCase(id="toy", features=np.asarray(features, dtype=float),
                       feature_blocks=blocks, hidden_label=hidden_label)


@pytest.fixture
def neutral_case():
    return toy_case(np.full(28, 0.5))
