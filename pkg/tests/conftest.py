import numpy as np
import pytest

from allograph.inventory import load_feature_table
from allograph.wfst import MappingTable


@pytest.fixture(scope="session")
def universal():
    return load_feature_table()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def table(inventory, pairs, language="x", phonemes=None):
    return MappingTable.from_symbols(language, inventory, pairs, phonemes)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
