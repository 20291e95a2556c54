import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from loglin.table import ContingencyTable, FactorSpec, load_czech  # noqa: E402


def binary_table(names, counts):
    return ContingencyTable(tuple(FactorSpec(n, ("0", "1")) for n in names),
                            np.asarray(counts))


@pytest.fixture(scope="session")
def czech():
    return load_czech()


@pytest.fixture
def table2x2():
    return binary_table("ab", [1, 2, 3, 4])
