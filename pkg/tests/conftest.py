import numpy as np
import pytest

from dcebhm.studyio import SimulationSpec, simulate_study

# (name, passed, detail) lines recorded by the acceptance suite
ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_study():
    """Two patients, a handful of voxels, short curves; fast enough for chain tests."""
    spec = SimulationSpec(n_patients=2, n_voxels=[[3, 4], [2, 3]], n_times=12, n_pre_injection=2)
    return simulate_study(spec, seed=3)


@pytest.fixture(scope="session")
def ragged_study():
    """Different time grids per (scan, patient) via a round trip through StudyData."""
    from dcebhm.kinetics import TimeGrid
    from dcebhm.studyio import StudyData

    data, truth = simulate_study(SimulationSpec(n_patients=2, n_voxels=2, n_times=10), seed=5)
    grids = [[data.grids[0][0], TimeGrid.regular(8, 15.0)],
             [TimeGrid.regular(12, 10.0, n_pre=1), data.grids[1][1]]]
    rng = np.random.default_rng(0)
    curves = [[rng.normal(0.1, 0.02, (2, len(g))) for g in row] for row in grids]
    return StudyData(data.layout, data.aif, grids, curves, study_id="ragged")
