"""Shared fixtures and independent oracles (explicit O(N^2) constructions)."""

import numpy as np
import pytest

from mimo_afdm.daft import make_params

# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def oracle_daft_matrix(N, c1, c2):
    """``A[m, n] = exp(-j 2 pi (c2 m^2 + m n / N + c1 n^2)) / sqrt(N)``, entry by entry."""
    A = np.empty((N, N), dtype=np.complex128)
    for m in range(N):
        for n in range(N):
            A[m, n] = np.exp(-2j * np.pi * (c2 * m * m + m * n / N + c1 * n * n)) / np.sqrt(N)
    return A


def oracle_time_operator(N, delay, doppler):
    """``Delta_nu Pi^l``: cyclic delay by ``l`` then Doppler phase ``exp(-j 2 pi nu n / N)``."""
    Pi = np.zeros((N, N))
    for n in range(N):
        Pi[n, (n - delay) % N] = 1.0
    Delta = np.diag(np.exp(-2j * np.pi * doppler * np.arange(N) / N))
    return Delta @ Pi


def oracle_subchannel(params, delay, doppler):
    A = oracle_daft_matrix(params.N, params.c1, params.c2)
    return A @ oracle_time_operator(params.N, delay, doppler) @ A.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def params64():
    return make_params(64, 2, 2, 1)


@pytest.fixture(scope="session")
def params1024():
    return make_params(1024, 2, 2, 1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
