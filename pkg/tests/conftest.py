import math

import numpy as np
import pytest

from blockradau.operators import SparseSym, build_problem, desk_diffusion_spec
from blockradau.smallmat import qr_thin

SQRT_HALF = 1.0 / math.sqrt(2.0)


def random_spd(n, rng, lo=1e-2, hi=10.0):
    """Dense s.p.d. matrix with log-uniform spectrum in [lo, hi]."""
    lam = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


def spd_instances(count=50, seed=2024):
    """``(A, B, m)`` with n <= 200, p cycling through 1, 2, 3 and m <= 15.

    ``B`` is already orthonormal (with the package's sign convention), so
    the quadrature targets ``B^T phi(A) B`` directly.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(40, 201))
        p = (1, 2, 3)[k % 3]
        m = int(rng.integers(2, 16))
        A = random_spd(n, rng)
        B, _ = qr_thin(rng.standard_normal((n, p)))
        out.append((A, B, m))
    return out


@pytest.fixture(scope="session")
def instance_set():
    return spd_instances()


@pytest.fixture
def worked():
    """A = diag(1, 3), B = [1, 1]^T / sqrt(2)."""
    A = SparseSym.from_dense(np.diag([1.0, 3.0]))
    B = np.array([[SQRT_HALF], [SQRT_HALF]])
    return A, B


@pytest.fixture(scope="session")
def desk_problem():
    return build_problem(desk_diffusion_spec())


# one pass/fail line per acceptance criterion at the end of the run
_criteria: dict = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker
        _, outcome, duration = _criteria.get(number, (title, "passed", 0.0))
        if report.outcome != "passed":
            outcome = report.outcome
        _criteria[number] = (title, outcome, duration + report.duration)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome, duration = _criteria[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title} ({duration:.2f} s)")
