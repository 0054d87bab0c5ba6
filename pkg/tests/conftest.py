import numpy as np
import pytest

from ctpower import NetworkInstance

EXAMPLE_G = [[0.42, 0.89], [0.63, 0.15]]


def random_instance(rng, M, *, L=10.0, Tmax=None):
    """Gains U[0.05, 1], unit noise and power caps."""
    G = rng.uniform(0.05, 1.0, (M, M))
    return NetworkInstance(G=G, N=np.ones(M), Pmax=np.ones(M), L=np.full(M, L), Tmax=Tmax)


@pytest.fixture
def example():
    return NetworkInstance(G=EXAMPLE_G, N=[1.0, 1.0], Pmax=[1.0, 1.0], L=[10.0, 10.0])


@pytest.fixture
def example_capped():
    return NetworkInstance(G=EXAMPLE_G, N=[1.0, 1.0], Pmax=[1.0, 1.0], L=[10.0, 10.0], Tmax=[1000.0, 1000.0])


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call":
                continue
            lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
