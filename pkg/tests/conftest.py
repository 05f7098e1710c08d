import itertools

import numpy as np
import pytest
from scipy.linalg import expm

from qaoa_depth.maxcut import diagonal_energies, load_builtin
from qaoa_depth.optimizer import EnergyEvaluator

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def kron_on(op, site, n):
    """``op`` on qubit ``site`` of ``n``; qubit 0 is the least significant index bit."""
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n)):
        out = np.kron(out, op if q == site else np.eye(2))
    return out


def dense_hamiltonians(graph):
    n = graph.num_nodes
    h_o = np.zeros((1 << n, 1 << n), dtype=complex)
    for i, j, w in graph.edges:
        h_o += w * kron_on(PAULI_Z, i, n) @ kron_on(PAULI_Z, j, n)
    h_c = sum(kron_on(PAULI_X, q, n) for q in range(n))
    return h_o, h_c


def dense_expectation(graph, x):
    """Reference energy built from full matrix exponentials."""
    h_o, h_c = dense_hamiltonians(graph)
    n = graph.num_nodes
    p = len(x) // 2
    psi = np.full(1 << n, 2 ** (-n / 2), dtype=complex)
    for layer in range(p):
        psi = expm(-1j * x[p + layer] * h_o) @ psi
        psi = expm(-1j * x[layer] * h_c) @ psi
    return float(np.real(np.vdot(psi, h_o @ psi)))


def brute_energies(graph):
    """Per-bitstring summation, independent of the vectorized builder."""
    n = graph.num_nodes
    out = []
    for z in range(1 << n):
        spins = [1 if not (z >> k) & 1 else -1 for k in range(n)]
        out.append(sum(w * spins[i] * spins[j] for i, j, w in graph.edges))
    return out


def all_bitstrings(n):
    return itertools.product((0, 1), repeat=n)


@pytest.fixture(scope="session")
def graph7():
    return load_builtin("7node")


@pytest.fixture(scope="session")
def graph10():
    return load_builtin("10node")


@pytest.fixture(scope="session")
def obs7(graph7):
    return diagonal_energies(graph7)


@pytest.fixture(scope="session")
def obs10(graph10):
    return diagonal_energies(graph10)


@pytest.fixture
def ev7(obs7):
    return EnergyEvaluator(obs7)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
