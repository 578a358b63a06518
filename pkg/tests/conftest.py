import numpy as np
import pytest

from advfl import datagen


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quad20(rng):
    return datagen.quadratic_family(20, 1.0, 1.0, 0.5, rng)


@pytest.fixture(scope="session")
def synth():
    return datagen.synthetic_ab(1.0, 1.0, 6, np.random.default_rng(7), volumes=[30] * 6)


def fd_gradient(f, x, h=1e-5):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


ACCEPTANCE = {}


def record(number, title, ok, detail, seconds):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail} ({seconds:.1f}s)"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
