import numpy as np
import pytest

from voxeldiff.mesh import CartesianMesh, SubstrateParams


@pytest.fixture
def rng():
    return np.random.default_rng(20211015)


@pytest.fixture
def mesh8():
    return CartesianMesh.from_counts(8, 8, 8, 20.0)


@pytest.fixture
def two_substrates():
    return [SubstrateParams("oxygen", 1000.0, 0.1, 38.0),
            SubstrateParams("signal", 250.0, 0.0, 0.0)]


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one pass/fail line per acceptance criterion."""
    def record(number, name, passed, detail="", skipped=False):
        status = "FAIL" if not passed else ("SKIP" if skipped else "PASS")
        line = f"criterion {number:>2} {status}  {name}"
        if detail:
            line += f"  [{detail}]"
        _ACCEPTANCE.append((number, line))
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
