from dataclasses import dataclass, field, fields, replace
import json
import logging
import math
from multiprocessing import cpu_count
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml


logger = logging.getLogger(__name__)

SEED_ENV_VAR = "PRTRACK_SEED"
JSON_SUFFIXES = (".jso", ".jsn", ".json")
YAML_SUFFIXES = (".yml", ".yaml")


class ConfigException(Exception):
    """An exception specific to configuration handling."""


def default_seed() -> int:
    """Return the seed from the environment, or 0 when unset."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigException(
            f"{SEED_ENV_VAR} must be an integer, got {raw!r}."
        ) from None


def load_config_file(config_file_path: Union[Path, str]) -> Dict[str, Any]:
    """
    Return the mapping stored in a JSON or YAML configuration file.

    Parameters
    ----------
    config_file_path : Path or str
        The path to the configuration file which should be either JSON or
        YAML formatted.

    Raises
    ------
    ConfigException
        If the suffix is not one of {'.json', '.jso', '.jsn', '.yaml',
        '.yml'} or the document is not a mapping.
    FileNotFoundError
        If the given `config_file_path` does not seem to exist.
    """
    if not isinstance(config_file_path, Path):
        config_file_path = Path(config_file_path)
    if not config_file_path.exists():
        raise FileNotFoundError("The given `config_file_path` does not exist.")

    with open(config_file_path, mode="r") as config_file:
        suffix = config_file_path.suffix.lower()
        if suffix in JSON_SUFFIXES:
            document = json.load(config_file)
        elif suffix in YAML_SUFFIXES:
            document = yaml.safe_load(config_file)
        else:
            raise ConfigException(
                "Only JSON and YAML configuration files are supported."
            )
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigException("The configuration must be a mapping.")
    return document


def _pick(cls, values: Mapping[str, Any]) -> Dict[str, Any]:
    """Keep only the keys that are fields of dataclass `cls`."""
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        logger.warning(
            f"Ignoring unknown {cls.__name__} keys: {sorted(unknown)}"
        )
    return {k: v for k, v in values.items() if k in names}


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings for the exact polynomial solver.

    Parameters
    ----------
    seed : int
        Seeds the draws of separating-element weights.
    max_pairs : int
        Upper bound on S-pairs processed by Buchberger's algorithm.
    max_terms : int
        Upper bound on the number of terms of any intermediate polynomial.
    separating_retries : int
        Number of fresh separating elements tried before giving up.
    separating_element : tuple of int or None
        Fixed integer weights (one per variable) for the separating linear
        form. None draws small random integers.
    eigen_tol : float
        Relative distance under which two eigenvalues count as equal.
    newton_iterations : int
        Maximum Newton steps used to polish each candidate.
    residual_tol : float
        A polished candidate is accepted iff max |f_i| is below this.
    rational_precision : int
        Largest denominator allowed when rationalizing float input.
    """

    seed: int = field(default_factory=default_seed)
    max_pairs: int = 200_000
    max_terms: int = 50_000
    separating_retries: int = 5
    separating_element: Optional[Tuple[int, ...]] = None
    eigen_tol: float = 1e-7
    newton_iterations: int = 25
    residual_tol: float = 1e-10
    rational_precision: int = 10**6

    def __post_init__(self):
        if self.max_pairs < 1 or self.max_terms < 1:
            raise ConfigException("Resource bounds must be >= 1.")
        if self.separating_retries < 1:
            raise ConfigException("separating_retries must be >= 1.")
        if self.eigen_tol <= 0 or self.residual_tol <= 0:
            raise ConfigException("Tolerances must be positive.")
        if self.separating_element is not None:
            object.__setattr__(
                self,
                "separating_element",
                tuple(int(c) for c in self.separating_element),
            )

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SolverConfig":
        """Build from a mapping, ignoring unknown keys."""
        return cls(**_pick(cls, values))

    @classmethod
    def from_config(cls, config_file_path: Union[Path, str]) -> "SolverConfig":
        """Read the `solver` section of a JSON or YAML configuration file."""
        document = load_config_file(config_file_path)
        return cls.from_mapping(document.get("solver", {}) or {})

    def with_overrides(self, **overrides) -> "SolverConfig":
        """Return a copy with the non-None `overrides` applied."""
        return replace(
            self, **{k: v for k, v in overrides.items() if v is not None}
        )


@dataclass(frozen=True)
class SimConfig:
    """
    Settings for Monte Carlo quantum-jump simulation.

    Times are in units of 1/gamma.

    Parameters
    ----------
    seed : int
        Root seed; trajectory `i` draws from the substream (seed, i).
    n_trajectories : int
        Number of independent trajectories.
    max_jumps : int
        A trajectory stops after this many jumps.
    max_time : float
        A trajectory stops once this time is reached.
    root_tol : float
        Absolute tolerance of the waiting-time inversion.
    sample_dt : float
        Spacing of the fidelity time series.
    threads : int
        Size of the worker pool.
    """

    seed: int = field(default_factory=default_seed)
    n_trajectories: int = 1000
    max_jumps: int = 1000
    max_time: float = math.inf
    root_tol: float = 1e-12
    sample_dt: float = 0.1
    threads: int = field(default_factory=cpu_count)

    def __post_init__(self):
        if self.n_trajectories < 1 or self.max_jumps < 1 or self.threads < 1:
            raise ConfigException("Counts must be >= 1.")
        if self.root_tol <= 0 or self.sample_dt <= 0 or self.max_time <= 0:
            raise ConfigException("Tolerances and times must be positive.")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SimConfig":
        """Build from a mapping, ignoring unknown keys."""
        return cls(**_pick(cls, values))

    @classmethod
    def from_config(cls, config_file_path: Union[Path, str]) -> "SimConfig":
        """Read the `simulation` section of a JSON or YAML file."""
        document = load_config_file(config_file_path)
        return cls.from_mapping(document.get("simulation", {}) or {})

    def with_overrides(self, **overrides) -> "SimConfig":
        """Return a copy with the non-None `overrides` applied."""
        return replace(
            self, **{k: v for k, v in overrides.items() if v is not None}
        )
