import math
import time
from importlib import resources

import numpy as np
import pytest

from harbordock.geometry import Footprint, HarborMap
from harbordock.scenario import load_scenario
from harbordock.sim import run
from harbordock.vessel import ModelParams

DATA = resources.files("harbordock") / "data"


def data_path(name):
    return str(DATA / name)


@pytest.fixture(scope="session")
def params():
    return ModelParams.load()


@pytest.fixture(scope="session")
def footprint(params):
    return Footprint.rectangle(params.footprint_length, params.footprint_width)


@pytest.fixture(scope="session")
def harbor():
    return HarborMap.load(data_path("harbor.json"))


@pytest.fixture(scope="session")
def nominal_scenario():
    return load_scenario(data_path("nominal.json"))


@pytest.fixture(scope="session")
def timed_nominal(nominal_scenario):
    """One closed-loop nominal run shared by the whole session, with its wall time."""
    t0 = time.perf_counter()
    log = run(nominal_scenario)
    return log, time.perf_counter() - t0


@pytest.fixture(scope="session")
def nominal_log(timed_nominal):
    return timed_nominal[0]


# acceptance verdicts collected by tests/test_acceptance.py, printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


def deg(x):
    return math.radians(x)


def as_array(x):
    return np.asarray(x, dtype=float)
