import sys

import pytest

from mfgchain import backward_solve, picard_flow, preset_section5


@pytest.fixture(scope="session")
def preset():
    return preset_section5()


@pytest.fixture(scope="session")
def solved_h01(preset):
    """Preset queue-control model at h=0.1 solved against the first image of the Dirac flow at 0.5."""
    disc = preset.discretize(0.1)
    nu = picard_flow(preset, disc, 0.5, 1)
    table, policy = backward_solve(preset, disc, nu)
    return disc, nu, table, policy


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
