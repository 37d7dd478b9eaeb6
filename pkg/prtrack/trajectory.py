"""
Quantum-jump trajectories under an adaptive monitoring scheme.

Between jumps the unnormalized state evolves as exp(-i H tau) psi with the
stage's non-Hermitian Hamiltonian; the survival probability ||.||^2 is
inverted exactly to draw waiting times, so no time step is involved.
"""
from concurrent.futures import as_completed, ThreadPoolExecutor
import cmath
import csv
from dataclasses import dataclass
import json
import logging
import math
from typing import IO, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from prtrack.config import SimConfig
from prtrack.monitor import MonitoringScheme, stability_C, stage_amplitudes


logger = logging.getLogger(__name__)

SERIES_TOL = 1e-3
ANNIHILATION_TOL = 1e-20
WAITING_TIME_CAP = 1e15
TRAJECTORY_COLUMNS = ("t", "F", "stage", "dN")


class TrajectoryException(Exception):
    """An exception specific to trajectory simulation."""


class NoJump(TrajectoryException):
    """The drawn survival level is never reached: no further jump occurs."""


class AnnihilatedState(TrajectoryException):
    """The jump operator maps the state to (numerically) zero."""


class Propagator:
    """
    Closed-form exp(-i H tau) for a fixed 2x2 H.

    With M = -iH = m I + N, N^2 = d^2 I, so
    exp(M tau) = (e^{(m+d)tau} + e^{(m-d)tau})/2 I + (e^{(m+d)tau} - e^{(m-d)tau})/(2d) N.
    A short series replaces the difference quotient when |d tau| is small,
    which also covers the defective case d = 0.
    """

    __slots__ = ("H", "m", "N", "d")

    def __init__(self, hamiltonian: np.ndarray):
        self.H = np.asarray(hamiltonian, dtype=complex)
        generator = -1j * self.H
        self.m = complex(np.trace(generator) / 2)
        self.N = generator - self.m * np.eye(2)
        self.d = cmath.sqrt(self.m**2 - complex(np.linalg.det(generator)))

    def __repr__(self):
        return f"Propagator(m={self.m:.6g}, d={self.d:.6g})"

    def apply(self, psi: np.ndarray, tau: float) -> np.ndarray:
        """Return exp(-i H tau) psi (not normalized)."""
        psi = np.asarray(psi, dtype=complex)
        if tau == 0:
            return psi.copy()
        n_psi = self.N @ psi
        dt = self.d * tau
        if abs(dt) < SERIES_TOL:
            x = dt * dt
            scale = cmath.exp(self.m * tau)
            even = 1 + x / 2 + x * x / 24
            odd = tau * (1 + x / 6 + x * x / 120)
            return scale * (even * psi + odd * n_psi)
        up = cmath.exp((self.m + self.d) * tau)
        down = cmath.exp((self.m - self.d) * tau)
        return 0.5 * (up + down) * psi + (up - down) / (2 * self.d) * n_psi

    def survival(self, psi: np.ndarray, tau: float) -> float:
        """Return ||exp(-i H tau) psi||^2."""
        out = self.apply(psi, tau)
        return float(np.vdot(out, out).real)


def _propagator(hamiltonian: Union[np.ndarray, Propagator]) -> Propagator:
    if isinstance(hamiltonian, Propagator):
        return hamiltonian
    return Propagator(hamiltonian)


def evolve_between(
    hamiltonian: Union[np.ndarray, Propagator], psi: np.ndarray, tau: float
) -> np.ndarray:
    """
    Return the unnormalized no-jump state exp(-i H tau) psi.

    Raises
    ------
    ValueError
        If tau is negative.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative.")
    return _propagator(hamiltonian).apply(psi, tau)


def survival(
    hamiltonian: Union[np.ndarray, Propagator], psi: np.ndarray, tau: float
) -> float:
    """Probability that no jump occurs within tau, starting from normalized psi."""
    return _propagator(hamiltonian).survival(psi, tau)


def sample_waiting_time(
    hamiltonian: Union[np.ndarray, Propagator],
    psi: np.ndarray,
    rng: np.random.Generator,
    root_tol: float = 1e-12,
    eta: Optional[float] = None,
) -> float:
    """
    Draw the time to the next jump by solving survival(tau) = eta.

    Parameters
    ----------
    hamiltonian : ndarray or Propagator
        The current stage's H(mu).
    psi : ndarray
        The normalized current state.
    rng : numpy Generator
        Source of the uniform level eta.
    root_tol : float, default 1e-12
        Absolute tolerance of the root.
    eta : float or None, default None
        Use this level instead of drawing one.

    Raises
    ------
    NoJump
        If the survival probability stays above eta for all practical times.
    """
    prop = _propagator(hamiltonian)
    if eta is None:
        eta = float(rng.random())
    if prop.survival(psi, 0.0) <= eta:
        return 0.0
    tau_hi = 1.0
    while prop.survival(psi, tau_hi) > eta:
        tau_hi *= 2
        if tau_hi > WAITING_TIME_CAP:
            raise NoJump(f"Survival never drops below {eta!r}.")
    return brentq(
        lambda tau: prop.survival(psi, tau) - eta, 0.0, tau_hi, xtol=root_tol
    )


def apply_jump(s_op: np.ndarray, psi: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Return (s psi / ||s psi||, ||s psi||^2).

    Raises
    ------
    AnnihilatedState
        If ||s psi||^2 < 1e-20.
    """
    out = s_op @ psi
    norm_sq = float(np.vdot(out, out).real)
    if norm_sq < ANNIHILATION_TOL:
        raise AnnihilatedState("The jump operator annihilates the state.")
    return out / math.sqrt(norm_sq), norm_sq


def stage_infidelity(scheme: MonitoringScheme, stage: int, psi: np.ndarray) -> float:
    """
    Return 1 - |<v^e|psi>|^2 of a normalized psi as |beta|^2 (1 - |O|^2).

    This form has no cancellation, so tiny infidelities keep their digits.
    """
    beta = stage_amplitudes(scheme, stage, psi)[1]
    value = abs(beta) ** 2 * (1 - abs(scheme.overlaps[stage]) ** 2)
    return min(max(float(value), 0.0), 1.0)


def make_rng(seed: int, index: int) -> np.random.Generator:
    """Return the independent generator of trajectory `index`."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class TrajectoryRecord:
    """
    The outcome of one simulated trajectory.

    `samples` holds (t, F, stage, dN) rows: the fixed grid plus the instants
    just before (dN = 0) and after (dN = 1) every jump. Stages are 0-based.
    `jump_infidelities` pairs the exact 1 - F before and after each jump.
    `log_path_density` is ln ||psi~||^2 of the unnormalized state at the
    last jump, the log probability density of the jump record.
    """

    jump_times: List[float]
    stage_indices: List[int]
    samples: List[Tuple[float, float, int, int]]
    jump_infidelities: List[Tuple[float, float]]
    cycle_infidelities: List[float]
    cycle_times: List[float]
    log_path_density: float
    censored: bool
    end_time: float

    @property
    def fidelity_series(self) -> List[Tuple[float, float]]:
        """(t, F) pairs of the recorded samples."""
        return [(t, f) for t, f, _, _ in self.samples]

    @property
    def jump_fidelity_deltas(self) -> List[Tuple[float, float]]:
        """(F_before, F_after) per jump."""
        return [(1 - before, 1 - after) for before, after in self.jump_infidelities]

    @property
    def fidelity_drops(self) -> int:
        """Number of jumps after which the fidelity is lower than before."""
        return sum(1 for before, after in self.jump_infidelities if after > before)


def simulate(
    scheme: MonitoringScheme,
    psi0: np.ndarray,
    config: SimConfig,
    rng: np.random.Generator,
    start_stage: int = 0,
    record_series: bool = True,
) -> TrajectoryRecord:
    """
    Run one quantum-jump trajectory.

    The stage advances k -> k+1 (mod K) on every jump; fidelity is measured
    against the ensemble state of the stage the record says we are in.
    A cycle is complete whenever the stage returns to `start_stage`.

    Parameters
    ----------
    scheme : MonitoringScheme
        The adaptive scheme to follow.
    psi0 : ndarray
        Initial state; normalized on entry.
    config : SimConfig
        Stopping rules (max_jumps, max_time), root tolerance and sample_dt.
    rng : numpy Generator
        The trajectory's random stream.
    start_stage : int, default 0
        The stage whose H(mu) governs the first waiting time.
    record_series : bool, default True
        If False, only jump and cycle data are kept.
    """
    propagators = [Propagator(h) for h in scheme.H_eff]
    psi = np.asarray(psi0, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    stage = start_stage
    t = 0.0
    dt = config.sample_dt
    record = TrajectoryRecord([], [], [], [], [], [], 0.0, False, 0.0)

    def sample(time, state, k, dn):
        if record_series:
            record.samples.append((time, 1 - stage_infidelity(scheme, k, state), k, dn))

    def sample_grid(prop, state, k, start, stop):
        if not record_series:
            return
        index = math.floor(start / dt) + 1
        while index * dt < stop:
            grid_t = index * dt
            out = prop.apply(state, grid_t - start)
            sample(grid_t, out / np.linalg.norm(out), k, 0)
            index += 1

    sample(t, psi, stage, 0)
    while len(record.jump_times) < config.max_jumps:
        prop = propagators[stage]
        try:
            tau = sample_waiting_time(prop, psi, rng, root_tol=config.root_tol)
        except NoJump:
            tau = math.inf
        if not math.isfinite(tau) or t + tau > config.max_time:
            # A dark state with no time limit stops where it is.
            if math.isfinite(config.max_time) and config.max_time > t:
                sample_grid(prop, psi, stage, t, config.max_time)
                out = prop.apply(psi, config.max_time - t)
                sample(config.max_time, out / np.linalg.norm(out), stage, 0)
                t = config.max_time
            logger.debug(f"Trajectory censored at t={t:.6g}.")
            record.censored = True
            break

        sample_grid(prop, psi, stage, t, t + tau)
        evolved = prop.apply(psi, tau)
        survived = float(np.vdot(evolved, evolved).real)
        before = evolved / math.sqrt(survived)
        psi, jump_norm_sq = apply_jump(scheme.s_ops[stage], before)
        record.log_path_density += math.log(survived) + math.log(jump_norm_sq)

        t += tau
        nxt = (stage + 1) % scheme.K
        infidelity_before = stage_infidelity(scheme, stage, before)
        infidelity_after = stage_infidelity(scheme, nxt, psi)
        record.jump_times.append(t)
        record.stage_indices.append(stage)
        record.jump_infidelities.append((infidelity_before, infidelity_after))
        if record_series:
            record.samples.append((t, 1 - infidelity_before, stage, 0))
            record.samples.append((t, 1 - infidelity_after, nxt, 1))
        stage = nxt
        if stage == start_stage:
            record.cycle_infidelities.append(infidelity_after)
            record.cycle_times.append(t)

    record.end_time = t
    return record


def run_trajectories(
    scheme: MonitoringScheme,
    psi0: np.ndarray,
    config: SimConfig,
    max_jumps: Optional[int] = None,
    start_stage: int = 0,
) -> List[TrajectoryRecord]:
    """
    Simulate config.n_trajectories independent trajectories on a thread pool.

    Trajectory i always draws from make_rng(config.seed, i), so the results
    do not depend on scheduling. They are returned in index order; a
    trajectory whose worker raised is logged and left out.
    """
    if max_jumps is not None:
        config = config.with_overrides(max_jumps=max_jumps)

    def _one(index):
        return simulate(
            scheme,
            psi0,
            config,
            make_rng(config.seed, index),
            start_stage=start_stage,
            record_series=False,
        )

    results: Dict[int, TrajectoryRecord] = {}
    with ThreadPoolExecutor(max_workers=config.threads) as executor:
        futures = {
            executor.submit(_one, index): index
            for index in range(config.n_trajectories)
        }
        for future in as_completed(futures):
            try:
                results[futures[future]] = future.result()
            except Exception:
                logger.exception("A thread raised an exception.")

    censored = sum(1 for record in results.values() if record.censored)
    if censored:
        logger.warning(f"{censored} trajectories were censored by max_time or by a dark state.")
    return [results[index] for index in sorted(results)]


def _mean_and_stderr(values: Sequence[float]) -> Tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, math.inf
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(variance / n)


@dataclass(frozen=True)
class MonteCarloSummary:
    """Per-cycle statistics of 1 - F after cycles l = 1..L."""

    cycles: Tuple[int, ...]
    mean_infidelity: Tuple[float, ...]
    stderr: Tuple[float, ...]
    counts: Tuple[int, ...]

    @property
    def mean_fidelity(self) -> Tuple[float, ...]:
        return tuple(1 - value for value in self.mean_infidelity)


def monte_carlo_fidelity(
    scheme: MonitoringScheme,
    psi0: np.ndarray,
    config: SimConfig,
    cycles: int = 8,
) -> MonteCarloSummary:
    """
    Average the fidelity with v^e_1 right after each of `cycles` full cycles.

    Trajectories stopped early by max_time contribute only to the cycles
    they completed.
    """
    records = run_trajectories(scheme, psi0, config, max_jumps=cycles * scheme.K)
    means, errors, counts = [], [], []
    for index in range(cycles):
        values = [r.cycle_infidelities[index] for r in records if len(r.cycle_infidelities) > index]
        if not values:
            break
        mean, error = _mean_and_stderr(values)
        means.append(mean)
        errors.append(error)
        counts.append(len(values))
    return MonteCarloSummary(
        cycles=tuple(range(1, len(means) + 1)),
        mean_infidelity=tuple(means),
        stderr=tuple(errors),
        counts=tuple(counts),
    )


def predicted_infidelity(
    scheme: MonitoringScheme, psi0: np.ndarray, cycles: int
) -> List[float]:
    """Return |beta_0|^2 (1 - |O_1|^2) C^l for l = 1..cycles."""
    psi = np.asarray(psi0, dtype=complex)
    base = stage_infidelity(scheme, 0, psi / np.linalg.norm(psi))
    c = stability_C(scheme)
    return [base * c**l for l in range(1, cycles + 1)]


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    covariance: Tuple[Tuple[float, float], Tuple[float, float]]


def fit_log_infidelity(summary: MonteCarloSummary) -> FitResult:
    """
    Fit ln(1 - <F>_l) = intercept + slope * l by weighted least squares.

    Each cycle is weighted by (mean / stderr)^2, the inverse variance of the
    log of its mean. Cycles with a zero mean or error are skipped.

    Raises
    ------
    TrajectoryException
        If fewer than two cycles can be used.
    """
    rows = [
        (l, mean, error)
        for l, mean, error in zip(summary.cycles, summary.mean_infidelity, summary.stderr)
        if mean > 0 and 0 < error < math.inf
    ]
    if len(rows) < 2:
        raise TrajectoryException("At least two cycles with spread are needed.")
    x = np.array([[1.0, l] for l, _, _ in rows])
    y = np.array([math.log(mean) for _, mean, _ in rows])
    w = np.array([(mean / error) ** 2 for _, mean, error in rows])
    normal = x.T @ (w[:, None] * x)
    covariance = np.linalg.inv(normal)
    intercept, slope = covariance @ (x.T @ (w * y))
    return FitResult(
        slope=float(slope),
        intercept=float(intercept),
        covariance=tuple(tuple(float(v) for v in row) for row in covariance),
    )


def expected_cycle_time(scheme: MonitoringScheme) -> float:
    """Mean duration of a cycle that starts on the ensemble: sum 1/(2 Re lambda^e)."""
    return sum(1 / (2 * lam.real) for lam, _ in scheme.ensemble_eigs)


def first_cycle_time(
    scheme: MonitoringScheme, psi0: np.ndarray, config: SimConfig
) -> Tuple[float, float]:
    """Monte Carlo (mean, stderr) of the time to complete the first cycle from psi0."""
    records = run_trajectories(scheme, psi0, config, max_jumps=scheme.K)
    times = [r.cycle_times[0] for r in records if r.cycle_times]
    if not times:
        raise TrajectoryException("No trajectory completed a cycle.")
    return _mean_and_stderr(times)


def empirical_cycle_time(
    scheme: MonitoringScheme, config: SimConfig
) -> Tuple[float, float]:
    """Monte Carlo (mean, stderr) of a full-cycle duration starting from v^e_1."""
    return first_cycle_time(scheme, scheme.ensemble_eigs[0][1], config)


def initial_rate_R1(
    scheme: MonitoringScheme, psi0: np.ndarray, config: SimConfig
) -> float:
    """Return R_1 = -ln(C) / <T_1> with <T_1> the mean first-cycle time from psi0."""
    mean, _ = first_cycle_time(scheme, psi0, config)
    return -math.log(stability_C(scheme)) / mean


def trajectory_to_csv(record: TrajectoryRecord, stream: IO[str]) -> None:
    """Write the (t, F, stage, dN) samples; stages are written 1-based."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for t, fidelity, stage, dn in record.samples:
        writer.writerow([repr(t), repr(fidelity), stage + 1, dn])


def summary_to_json(summary: MonteCarloSummary, fit: Optional[FitResult] = None) -> str:
    document = {
        "cycles": list(summary.cycles),
        "mean_fidelity": list(summary.mean_fidelity),
        "mean_infidelity": list(summary.mean_infidelity),
        "stderr": list(summary.stderr),
        "counts": list(summary.counts),
    }
    if fit is not None:
        document["fit"] = {
            "slope": fit.slope,
            "intercept": fit.intercept,
            "covariance": [list(row) for row in fit.covariance],
        }
    return json.dumps(document, indent=2, sort_keys=True)
