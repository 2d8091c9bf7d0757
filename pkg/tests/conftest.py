import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kerrlod.fem import CoefficientField
from kerrlod.mesh import build_hierarchy

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")


def random_fields(hier, seed=0, eps_max=2.0):
    """Rough A, n, eps on the fine level of ``hier`` (constant on coefficient cells)."""
    rng = np.random.default_rng(seed)
    ne = hier.coeff.num_elements
    idx = np.empty(hier.fine.num_elements, dtype=int)
    for c, kids in enumerate(hier.coeff_to_fine_elements):
        idx[kids] = c
    A = CoefficientField(rng.uniform(0.5, 3.0, ne)[idx], hier.fine)
    n = CoefficientField(rng.uniform(0.5, 1.0, ne)[idx], hier.fine)
    eps = CoefficientField(rng.uniform(0.0, eps_max, ne)[idx], hier.fine)
    return A, n, eps


@pytest.fixture
def small_hier():
    return build_hierarchy(2, 3, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
