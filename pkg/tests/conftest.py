# conftest.py

import os
import sys

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_collection_modifyitems(config, items):
    if os.getenv("EHD_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="canonical-scale run; set EHD_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def no_ledger():
    import database
    database.configure_database(None)
    yield
    database.configure_database(None)
