import importlib
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "sdp", max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "sdp"))

# The package re-exports a ``robustness`` function, so submodules are fetched
# explicitly rather than through attribute access on the package.
povm = importlib.import_module("incompat.povm")
noise = importlib.import_module("incompat.noise")
robustness = importlib.import_module("incompat.robustness")
bounds = importlib.import_module("incompat.bounds")


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    failed = report.failed
    if report.when == "call" or failed:
        prev = _ACCEPTANCE.get(name)
        _ACCEPTANCE[name] = "FAIL" if failed or prev == "FAIL" else ("SKIP" if report.skipped else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]} {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def assert_valid_povm(elements, tol=1e-9):
    el = np.asarray(elements)
    d = el.shape[-1]
    assert np.allclose(el, el.conj().transpose(0, 2, 1), atol=tol)
    assert np.linalg.eigvalsh(el)[:, 0].min() >= -tol
    assert np.linalg.norm(el.sum(axis=0) - np.eye(d)) <= tol
