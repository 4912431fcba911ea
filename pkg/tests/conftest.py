import numpy as np
import pytest

from mmshare import ScenarioConfig, sample_network_channels, sample_topology

# acceptance criteria report one line each: (number, passed, detail)
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def small_config():
    return ScenarioConfig(area_side=120.0, n_bs_antennas=8, n_ue_antennas=4,
                          n_fading_samples=4, n_topologies=1)


@pytest.fixture
def small_network(small_config):
    topo = sample_topology(small_config, 3)
    return topo, sample_network_channels(topo, small_config, 3)

