import numpy as np
import pytest

from eigensteer.controllability import BilinearSystem

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)

_ACCEPTANCE: list[tuple[str, bool]] = []


def record_acceptance(name: str, ok: bool) -> None:
    _ACCEPTANCE.append((name, ok))
    print(f"[{'PASS' if ok else 'FAIL'}] {name}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}")


@pytest.fixture
def su2_system():
    return BilinearSystem(-1j * SZ, (-1j * SX,))


@pytest.fixture
def u2_system():
    return BilinearSystem(-1j * SZ, (-1j * SX, -1j * np.eye(2)))


@pytest.fixture
def diagonal_system():
    return BilinearSystem(-1j * np.diag([0.0, 1.0]), (-1j * np.diag([1.0, 2.0]),))


@pytest.fixture
def rabi_system():
    # equal drift eigenvalues: the drift only contributes a global phase
    return BilinearSystem(-1j * 0.7 * np.eye(2), (-1j * SX,))


def block_system(n: int) -> BilinearSystem:
    """Non-degenerate drift, one control coupling levels 1 and 2 only."""
    energies = np.arange(n, dtype=float) * 1.3
    B = np.zeros((n, n), dtype=complex)
    B[0, 1] = B[1, 0] = 1.0
    return BilinearSystem(-1j * np.diag(energies), (-1j * B,))


def rng_state(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    return z / np.linalg.norm(z)
