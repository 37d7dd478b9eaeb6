import math
from pathlib import Path

from prtrack.config import (
    ConfigException,
    SimConfig,
    SolverConfig,
    default_seed,
    load_config_file,
)
import pytest


DATA = Path(__file__).parent.joinpath('data')


@pytest.mark.parametrize(
    'config_path', (
        DATA.joinpath('prtrack.json'),
        DATA.joinpath('prtrack.yml'),
        str(DATA.joinpath('prtrack.yml')),
    ))
def test_from_config(config_path):
    """Ensure that `from_config()` reads both sections."""
    solver = SolverConfig.from_config(config_path)
    sim = SimConfig.from_config(config_path)
    assert solver.seed == 3
    assert solver.max_pairs == 5000
    assert solver.separating_element == (1, 0)
    assert sim.seed == 42
    assert sim.n_trajectories == 250
    assert sim.sample_dt == 0.05
    assert sim.threads == 2
    assert sim.max_time == math.inf


def test_from_config_dne():
    """Test when the file doesn't exist."""
    with pytest.raises(FileNotFoundError):
        SolverConfig.from_config('non/existent.json')


def test_from_config_bad_extension():
    """Test when the file is not the right kind."""
    with pytest.raises(ConfigException):
        load_config_file(DATA.joinpath('prtrack.txt'))


def test_unknown_keys_are_ignored(caplog):
    """Test that unknown keys are logged and dropped."""
    config = SimConfig.from_mapping({"seed": 5, "colour": "blue"})
    assert config.seed == 5
    assert "colour" in caplog.text


@pytest.mark.parametrize(
    "values",
    (
        {"n_trajectories": 0},
        {"max_jumps": 0},
        {"root_tol": 0.0},
        {"sample_dt": -1.0},
        {"threads": 0},
    ),
)
def test_sim_config_validation(values):
    """Test that invalid simulation settings are rejected."""
    with pytest.raises(ConfigException):
        SimConfig(**values)


@pytest.mark.parametrize(
    "values",
    (
        {"max_pairs": 0},
        {"separating_retries": 0},
        {"eigen_tol": 0.0},
        {"residual_tol": -1e-3},
    ),
)
def test_solver_config_validation(values):
    """Test that invalid solver settings are rejected."""
    with pytest.raises(ConfigException):
        SolverConfig(**values)


def test_default_seed(monkeypatch):
    """Test that the seed is read from the environment."""
    monkeypatch.delenv("PRTRACK_SEED", raising=False)
    assert default_seed() == 0
    monkeypatch.setenv("PRTRACK_SEED", "1234")
    assert default_seed() == 1234
    assert SimConfig().seed == 1234
    monkeypatch.setenv("PRTRACK_SEED", "abc")
    with pytest.raises(ConfigException):
        default_seed()


def test_with_overrides():
    """Test that None overrides leave values untouched."""
    config = SimConfig(seed=1, threads=1)
    changed = config.with_overrides(seed=None, threads=4, n_trajectories=10)
    assert changed.seed == 1
    assert changed.threads == 4
    assert changed.n_trajectories == 10
    assert config.threads == 1
