import contextlib
import types

import numpy as np
import pytest

from ouchaos.gaussian import SpectralGaussian
from ouchaos.secondquant import CMContraction


def random_measure(rng, d, degenerate=False):
    lam = rng.uniform(0.3, 3.0, size=d)
    if degenerate:
        lam[rng.integers(d)] = 0.0
    return SpectralGaussian(lam)


def random_contraction(rng, mu, nu, norm_cap=1.0):
    m = rng.standard_normal((nu.dim, mu.dim))
    top = np.linalg.norm(m, 2)
    if top > 0:
        m *= norm_cap / top * rng.uniform(0.5, 1.0)
    return CMContraction(mu, nu, m)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, printed in a
    dedicated section after the run."""
    @contextlib.contextmanager
    def run(num, name):
        record = types.SimpleNamespace(detail="")
        try:
            yield record
        except BaseException:
            _ACCEPTANCE_LINES.append(
                (num, "[%02d] %-32s FAIL  %s" % (num, name, record.detail)))
            raise
        _ACCEPTANCE_LINES.append(
            (num, "[%02d] %-32s PASS  %s" % (num, name, record.detail)))
    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line.rstrip())
