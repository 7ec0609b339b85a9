import os
import sys

import pytest

from cbrgda.cases import build_case, read_records

DATA = os.path.join(os.path.dirname(__file__), "data")
sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def fixture_cases():
    with open(os.path.join(DATA, "maintenance.cases"), encoding="utf-8") as fh:
        return [build_case(raw, i) for i, (_, raw) in enumerate(read_records(fh))]
