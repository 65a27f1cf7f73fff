import numpy as np
import pytest

from lureobs.config import bundled, load_gains, load_system
from lureobs.design import box_samples


@pytest.fixture(scope="session")
def ex2():
    """Bundled three-state relay plant with its observer gains."""
    spec = load_system(bundled("example2_system.toml"))
    gspec = load_gains(bundled("example2_gains.toml"))
    d = spec.system.dims
    samples = box_samples(d.n, d.r, spec.state_box, spec.input_box,
                          spec.n_samples, spec.seed)
    return spec, gspec, samples


@pytest.fixture(scope="session")
def reduced():
    spec = load_system(bundled("reduced_system.toml"))
    gspec = load_gains(bundled("reduced_gains.toml"))
    d = spec.system.dims
    samples = box_samples(d.n, d.r, spec.state_box, spec.input_box,
                          spec.n_samples, spec.seed)
    return spec, gspec, samples


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
