import numpy as np
import pytest

from psclab.scenarios import baseline
from psclab.synth import synthesize_traces

FIPS_KEY = "2b7e151628aed2a6abf7158809cf4f3c"


@pytest.fixture(scope="session")
def fips_key():
    return np.frombuffer(bytes.fromhex(FIPS_KEY), dtype=np.uint8).copy()


@pytest.fixture(scope="session")
def noiseless_sets(fips_key):
    """2000 noiseless baseline traces, both sensors."""
    return synthesize_traces(baseline().noiseless(), fips_key, 2000, 42)


@pytest.fixture(scope="session")
def noisy_sets(fips_key):
    return synthesize_traces(baseline(), fips_key, 3000, 7)


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[mark.args[0]] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
