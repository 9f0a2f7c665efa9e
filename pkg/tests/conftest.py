import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridcascade.caseio import parse_case, to_grid

CASES = Path(__file__).resolve().parent.parent / "cases"


@pytest.fixture(scope="session")
def case118_path() -> Path:
    return CASES / "case118.m"


@pytest.fixture(scope="session")
def case2383_path() -> Path:
    return CASES / "case2383.m"


@pytest.fixture(scope="session")
def case118(case118_path):
    return parse_case(case118_path)


@pytest.fixture(scope="session")
def grid118(case118):
    """Pristine IEEE-118 grid; tests must copy before mutating."""
    return to_grid(case118)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
