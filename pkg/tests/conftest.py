import json
from pathlib import Path

import numpy as np
import pytest

from l1cert.model import NoiseModel, NuNormParams, SensingMatrix, UncertaintySet, make_rng

ORACLES = Path(__file__).resolve().parent / "oracles"


@pytest.fixture(scope="session")
def derived():
    """Frozen constants produced by ``oracles/recompute_constants.py``."""
    raw = json.loads((ORACLES / "derived_constants.json").read_text())
    return {k: (json.loads(v) if v.startswith("[") else float(v)) for k, v in raw.items()}


def gaussian_matrix(m, n, seed):
    G = make_rng(seed).standard_normal((m, n))
    return SensingMatrix(G / np.linalg.norm(G, axis=0), label=f"gauss{m}x{n}/{seed}")


def zero_params(A, sigma=0.1, eps=0.01):
    return NuNormParams(UncertaintySet.zero(A.m), NoiseModel(sigma, eps), A.n)


def sparse_signal(rng, n, s, scale=1.0):
    x = np.zeros(n)
    idx = rng.choice(n, size=s, replace=False)
    x[idx] = rng.choice([-1.0, 1.0], size=s) * rng.uniform(0.5, 1.5, size=s) * scale
    return x


# --- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _ACCEPTANCE[num] = (title, "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {title}")
