import numpy as np
import pytest

from supercompliers.data import Group, ObservationTable
from supercompliers.dgp import DiscreteLaw, ObservedDistribution, StratificationDGP

# filled by tests/test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


EXAMPLE_ARM0 = {(1, 1): 0.2, (0, 1): 0.1, (1, 0): 0.3, (0, 0): 0.4}
EXAMPLE_ARM1 = {(1, 1): 0.5, (0, 1): 0.15, (1, 0): 0.2, (0, 0): 0.15}

EXAMPLE_SHARES = {
    Group.aa: 0.1, Group.ac: 0.1, Group.an: 0.1, Group.na: 0.2, Group.nn: 0.075,
    Group.nc: 0.075, Group.ca: 0.1, Group.cn: 0.05, Group.cc: 0.2,
}

# group-specific laws of x on {0,...,5}; the cc CDF is
# 0.05, 0.15, 0.30, 0.65, 0.85, 1 (median 3, never exactly 0.5)
X_PROBS = {
    Group.cc: [0.05, 0.10, 0.15, 0.35, 0.20, 0.15],
    Group.ca: [0.30, 0.25, 0.20, 0.10, 0.10, 0.05],
    Group.cn: [0.10, 0.10, 0.30, 0.30, 0.10, 0.10],
    Group.aa: [0.20, 0.20, 0.20, 0.20, 0.10, 0.10],
    Group.ac: [0.05, 0.05, 0.10, 0.20, 0.30, 0.30],
    Group.an: [0.40, 0.30, 0.10, 0.10, 0.05, 0.05],
    Group.na: [0.10, 0.30, 0.30, 0.10, 0.10, 0.10],
    Group.nn: [0.25, 0.15, 0.15, 0.15, 0.15, 0.15],
    Group.nc: [1 / 6] * 6,
}
FEMALE_P = {Group.cc: 0.7, Group.ca: 0.4, Group.cn: 0.2, Group.aa: 0.5, Group.ac: 0.6,
            Group.an: 0.3, Group.na: 0.45, Group.nn: 0.55, Group.nc: 0.35}


def product_law(px, p_female) -> DiscreteLaw:
    """Independent (x, female) law: x on 0..len(px)-1, female Bernoulli."""
    support, probs = [], []
    for xv, p in enumerate(px):
        for f, q in ((0.0, 1 - p_female), (1.0, p_female)):
            support.append([float(xv), f])
            probs.append(p * q)
    probs = np.array(probs)
    return DiscreteLaw(np.array(support), probs / probs.sum())


def make_example_dgp(tau: float = 0.5) -> StratificationDGP:
    laws = {g: product_law(X_PROBS[g], FEMALE_P[g]) for g in EXAMPLE_SHARES}
    return StratificationDGP(EXAMPLE_SHARES, tau, laws, ("x", "female"))


@pytest.fixture
def example_observed():
    return ObservedDistribution.from_cells(EXAMPLE_ARM0, EXAMPLE_ARM1)


@pytest.fixture
def example_dgp():
    return make_example_dgp()


def random_table(rng: np.random.Generator, n: int, n_cov: int = 2, y_binary: bool = True) -> ObservationTable:
    """Random table with both arms present and arbitrary (possibly violating) cell probabilities."""
    z = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(float)
    z[0], z[1] = 0.0, 1.0
    cum = np.cumsum(rng.dirichlet(np.ones(4), size=2), axis=1)
    cells = np.minimum((rng.random(n)[:, None] > cum[z.astype(int)]).sum(axis=1), 3)
    d = (cells // 2).astype(float)
    y = (cells % 2).astype(float)
    if not y_binary:
        y = y * rng.normal(1.0, 1.0, n) + rng.normal(0, 0.1, n)
    x = rng.normal(size=(n, n_cov)) * rng.uniform(0.5, 3, n_cov) + rng.uniform(-2, 2, n_cov)
    return ObservationTable(z, d, y, x, tuple(f"x{j + 1}" for j in range(n_cov)), y_binary=y_binary)
