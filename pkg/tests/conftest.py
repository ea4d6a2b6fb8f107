import sys

import numpy as np
import pytest

from sada import kernels

BACKENDS = kernels.available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def structured_image(h=24, w=20, c=3):
    """Non-wrapping diagonal ramps per channel; every geometric op visibly moves it."""
    yy, xx = np.mgrid[0:h, 0:w]
    chans = [(4 * xx + 6 * yy) % 256, (7 * xx + 3 * yy + 40) % 256, (2 * xx + 3 * yy + 90) % 256]
    return np.stack(chans[:c], axis=-1).astype(np.uint8)


def random_simplex(rng, k, size=None):
    return rng.dirichlet(np.ones(k), size=size)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
