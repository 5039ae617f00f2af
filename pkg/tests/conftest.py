import sys

import numpy as np
import pytest
from hypothesis import settings

from fdisac.array_channel import ArrayConfig, OfdmParams

settings.register_profile("fdisac", max_examples=40, deadline=None)
settings.load_profile("fdisac")


@pytest.fixture
def small_array():
    return ArrayConfig(n_tx_rf=2, n_rx_rf=2, subarray_size=4)


@pytest.fixture
def ofdm():
    return OfdmParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        ok, detail = results[key]
        terminalreporter.write_line(f"ACCEPTANCE {key} {'PASS' if ok else 'FAIL'}: {detail}")
