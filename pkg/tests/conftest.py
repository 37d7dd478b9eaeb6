from pathlib import Path

from prtrack.blochcore import resonance_fluorescence, to_bloch
from prtrack.config import SimConfig, SolverConfig
from prtrack.monitor import rf_branch_scheme
from prtrack.polysolve import parse_system
import pytest


DATA = Path(__file__).parent.joinpath('data')


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="Run the exact three-state and Monte Carlo acceptance tests.",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture()
def rf_model():
    """Prepare the resonance fluorescence model at epsilon = 0.1."""
    return resonance_fluorescence(0.1)


@pytest.fixture()
def rf_affine(rf_model):
    """Prepare the Bloch form of the resonance fluorescence model."""
    return to_bloch(rf_model)


@pytest.fixture()
def half_scheme():
    """Prepare the mu_1 = 1/2 scheme at epsilon = 0.1."""
    return rf_branch_scheme(0.1, "half")


@pytest.fixture()
def nu_minus_scheme():
    """Prepare the nu- scheme at epsilon = 0.1."""
    return rf_branch_scheme(0.1, "nu-")


@pytest.fixture()
def worked_system():
    """Prepare the two-variable worked Groebner example."""
    text = DATA.joinpath('worked_system.txt').read_text()
    return parse_system(text)


@pytest.fixture()
def solver_config():
    """Prepare a seeded solver configuration."""
    return SolverConfig(seed=7)


@pytest.fixture()
def sim_config():
    """Prepare a small, single-threaded simulation configuration."""
    return SimConfig(seed=11, n_trajectories=200, max_jumps=50, threads=2)


@pytest.fixture()
def render_golden():
    """Prepare a renderer of rows in the checked-in golden CSV layout."""
    text_columns = ("branch", "stage1", "stage2")

    def render(rows, columns):
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(
                str(row[c]) if c in text_columns else f"{float(row[c]):.10g}"
                for c in columns
            ))
        return "\n".join(lines) + "\n"

    return render
