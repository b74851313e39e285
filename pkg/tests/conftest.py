import pytest

from splidar.model import AcquisitionConfig, scene_from_background, scene_from_constraints

PRESET_ACQ = AcquisitionConfig(t_r=10.0, n_r=1000, eta=1.0)


def preset(sbr=1.0, n_r=1000, **overrides):
    kw = dict(photon_level=10.0, alpha=0.5, tau=4.0, sigma_t=0.2)
    kw.update(overrides)
    return scene_from_constraints(sbr=sbr, acq=AcquisitionConfig(10.0, n_r, 1.0), **kw)


def noiseless(**overrides):
    kw = dict(photon_level=10.0, alpha=0.5, tau=4.0, sigma_t=0.2)
    kw.update(overrides)
    return scene_from_background(b_lambda=0.0, acq=PRESET_ACQ, **kw)


@pytest.fixture
def scene():
    return preset(1.0)


# lines from tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
