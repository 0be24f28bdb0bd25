import numpy as np
import pytest

from sqdrift.hamiltonian import build_hubbard, load_fixture, random_hamiltonian

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {status}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


# external references from PySCF full CI (STO-3G, geometries in scripts/make_fixtures.py)
PYSCF_FCI = {
    "h2_sto3g": -1.137283834489,
    "h4_chain_sto3g": -2.166387448635,
    "h6_chain_sto3g": -3.236066279892,
}
PYSCF_HF = {
    "h2_sto3g": -1.116759307396,
    "h4_chain_sto3g": -2.098545936998,
    "h6_chain_sto3g": -3.135532213966,
}


@pytest.fixture(scope="session")
def h2():
    return load_fixture("h2_sto3g")


@pytest.fixture(scope="session")
def h4():
    return load_fixture("h4_chain_sto3g")


@pytest.fixture(scope="session")
def hub2():
    return build_hubbard(2, 1.0, 4.0, 1, 1)


@pytest.fixture(scope="session")
def hub4():
    return build_hubbard(4, 1.0, 2.0, 2, 2)


def small_systems():
    """Systems of at most 8 qubits, for dense checks."""
    return {
        "hubbard2": build_hubbard(2, 1.0, 4.0, 1, 1),
        "hubbard3_open": build_hubbard(3, 1.0, 2.5, 2, 1),
        "hubbard4": build_hubbard(4, 1.0, 2.0, 2, 2),
        "h2": load_fixture("h2_sto3g"),
        "h4": load_fixture("h4_chain_sto3g"),
        "random3": random_hamiltonian(3, 2, 1, seed=11),
        "random4": random_hamiltonian(4, 2, 2, seed=5),
    }


@pytest.fixture(scope="session")
def systems():
    return small_systems()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
