import os

import numpy as np
import pytest

from lutgemm import Codebook, QuantParams

_CRITERIA: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2]
        _CRITERIA.append((status, marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _CRITERIA:
        terminalreporter.write_line(f"[{status}] {name}" + (f" :: {detail}" if detail else ""))


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement summary to the acceptance line."""
    return lambda text: record_property("detail", text)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# value maps shared by several modules
SIGNED2 = QuantParams(scale=1.0, zero_point=0.0, bits=2, signed=True)
UNSIGNED2 = QuantParams(scale=1.0, zero_point=0.0, bits=2, signed=False)
VALUE_MAP_FIXTURES = {
    "signed2": SIGNED2,
    "unsigned2": UNSIGNED2,
    "signed2_scaled": QuantParams(scale=0.5, zero_point=0.0, bits=2, signed=True),
    "unsigned2_zp": QuantParams(scale=2.0, zero_point=1.0, bits=2, signed=False),
    "ternary_codebook": Codebook([-1, 0, 1, 0]),
    "pow2_codebook": Codebook([-2, -1, 1, 2]),
    "real_codebook": Codebook([-0.75, -0.25, 0.25, 0.75]),
}

FORCE_SCALAR_KEY = "LUTGEMM_FORCE_SCALAR"


@pytest.fixture(autouse=True)
def _clear_force_scalar(monkeypatch):
    if FORCE_SCALAR_KEY in os.environ:
        monkeypatch.delenv(FORCE_SCALAR_KEY)
