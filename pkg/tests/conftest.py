from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from gensmooth.measure import Distribution, DistributionFamily

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance criterion number -> (passed, one-line detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def pair_family() -> DistributionFamily:
    return DistributionFamily.of([0.7, 0.1, 0.1, 0.1], [0.1, 0.7, 0.1, 0.1])


@pytest.fixture
def uniform4() -> Distribution:
    return Distribution.uniform(4)


def random_family(rng: np.random.Generator, n: int, m: int, conc: float = 0.5) -> DistributionFamily:
    return DistributionFamily.of(*[rng.dirichlet(np.full(n, conc)) for _ in range(m)])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
