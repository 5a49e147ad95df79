import numpy as np
import pytest

from secjscc.cumfn import CumulativeFn

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    label = getattr(report, "criterion", None)
    if label is None or report.when not in ("setup", "call"):
        return
    if report.failed or report.when == "call":
        prev = _criteria.get(label, "PASS")
        _criteria[label] = "FAIL" if (report.failed or prev == "FAIL") else "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s.split()[0][2:])):
        terminalreporter.write_line(f"{_criteria[label]}  {label}")


def random_step(rng, grid=None, max_knots=6, scale=1.0, allow_inf=False):
    """Random regular step function; breakpoints on ``grid`` if given."""
    if grid is not None:
        inner = np.arange(1, grid) / grid
        pick = rng.choice(inner, size=min(rng.integers(0, max_knots), inner.size), replace=False)
    else:
        pick = rng.uniform(0.0, 1.0, rng.integers(0, max_knots))
    b = np.unique(np.concatenate([[0.0, 1.0], pick]))
    inc = rng.exponential(scale, b.size - 1) * (rng.random(b.size - 1) < 0.8)
    v = np.concatenate([[0.0], np.cumsum(inc)])
    if allow_inf and rng.random() < 0.3:
        v[rng.integers(1, b.size):] = np.inf
    return CumulativeFn.step(b, v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
