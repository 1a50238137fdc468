import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fwl.data import Dataset

settings.register_profile("fwl", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fwl")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    def log(criterion: str, passed, detail: str = ""):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"{criterion:<4} {status}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dataset(n, dim, num_classes, seed, prefix="ex"):
    rng = np.random.default_rng(seed)
    return Dataset(
        np.array([f"{prefix}-{i}" for i in range(n)], dtype=object),
        rng.normal(size=(n, dim)),
        rng.integers(0, num_classes, n),
        num_classes,
    )
