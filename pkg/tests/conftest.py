import json
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from wormhole_waves.harmonic import solve_Q
from wormhole_waves.model import ModelParams, make_grid

GOLDEN = Path(__file__).parent / "golden"


@lru_cache(maxsize=None)
def harmonic(ell, n, X=12.0, N=2401):
    return solve_Q(ModelParams(ell, n), make_grid(X, N))


@pytest.fixture(scope="session")
def golden_harmonic():
    return json.loads((GOLDEN / "harmonic.json").read_text())["maps"]


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records one acceptance line and returns ``ok``."""

    def record(k, ok, detail):
        _CRITERIA[k] = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
