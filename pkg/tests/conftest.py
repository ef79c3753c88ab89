import importlib

import numpy as np
import pytest

from ogtt import _pykernels
from ogtt.model import FixedSettings, PatientParams

try:
    _ckernels = importlib.import_module("ogtt._ckernels")
except ImportError:  # pure-Python install
    _ckernels = None

requires_compiled = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")

HEALTHY = PatientParams(theta0=2.0, theta1=0.5, theta2=0.5, g0=100.0)
RESISTANT = PatientParams(theta0=0.5, theta1=0.5, theta2=0.5, g0=100.0)


@pytest.fixture
def fs():
    return FixedSettings()


@pytest.fixture(params=["python", "compiled"])
def kern(request):
    if request.param == "compiled":
        if _ckernels is None:
            pytest.skip("compiled kernels not built")
        return _ckernels
    return _pykernels


@pytest.fixture
def rng():
    return np.random.default_rng(20160101)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.REPORT_LINES,
                           key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
