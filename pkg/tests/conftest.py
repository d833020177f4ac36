"""Shared fixtures: seeds and traces are expensive, so each is computed once per session."""

from __future__ import annotations

import time

import numpy as np
import pytest

from gaitlocus.locus import LocusOptions, trace_locus
from gaitlocus.seed import find_max_efficiency_gait
from gaitlocus.swimmer import SwimmerGeometry, SwimmerModel
from gaitlocus.toy import ToyModel

LEVELS = (0.75, 0.5, 0.25)
ACCEPTANCE_LINES: list = []


def record_criterion(number, passed: bool, detail: str):
    ACCEPTANCE_LINES.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")


class Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return Timed(out, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def toy_model():
    return ToyModel()


@pytest.fixture(scope="session")
def toy_seed(toy_model):
    return _timed(find_max_efficiency_gait, toy_model, toy_model.initial_guess())


@pytest.fixture(scope="session")
def toy_trace(toy_model, toy_seed):
    g0 = toy_seed.value.g
    opts = LocusOptions(min_displacement=0.1 * g0, levels=[f * g0 for f in LEVELS])
    return _timed(trace_locus, toy_model, toy_seed.value.p, opts)


@pytest.fixture(scope="session")
def three_link():
    return SwimmerModel(SwimmerGeometry(3))


@pytest.fixture(scope="session")
def four_link():
    return SwimmerModel(SwimmerGeometry(4))


@pytest.fixture(scope="session")
def three_link_seed(three_link):
    return _timed(find_max_efficiency_gait, three_link, three_link.initial_guess())


@pytest.fixture(scope="session")
def four_link_seed(four_link):
    return _timed(find_max_efficiency_gait, four_link, four_link.initial_guess())


@pytest.fixture(scope="session")
def three_link_trace(three_link, three_link_seed):
    """Default step; stops on the quarter level."""
    g0 = three_link_seed.value.g
    opts = LocusOptions(min_displacement=0.25 * g0, levels=[f * g0 for f in LEVELS])
    return _timed(trace_locus, three_link, three_link_seed.value.p, opts)


@pytest.fixture(scope="session")
def four_link_trace(four_link, four_link_seed):
    g0 = four_link_seed.value.g
    opts = LocusOptions(rk_step=2e-2, min_displacement=0.25 * g0, levels=[f * g0 for f in LEVELS])
    return _timed(trace_locus, four_link, four_link_seed.value.p, opts)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
