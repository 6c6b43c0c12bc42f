import numpy as np
import pytest

from wfens.lzmodel import LZParams, lz_hamiltonian, lz_protocol
from wfens.statespace import linear_hamiltonian


def random_hermitian(rng, n, scale=1.0):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = 0.5 * (A + A.conj().T)
    return scale * H / np.linalg.norm(H, 2)


def random_linear_hamiltonian(rng, n, n_params=1):
    return linear_hamiltonian(random_hermitian(rng, n, 2.0), [random_hermitian(rng, n) for _ in range(n_params)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def lz():
    return lz_hamiltonian(1.0)


@pytest.fixture(scope="session")
def fig1_protocol():
    return lz_protocol(LZParams())[1]


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
