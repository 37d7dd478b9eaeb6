"""
Adaptive monitoring schemes that realize a PR ensemble, and their stability.

A scheme has one stage per ensemble state. During stage k the local
oscillator amplitude is mu_k, the conditioned state evolves under the
non-Hermitian Hamiltonian

    H(mu) = H - (i/2) c^dag c - i mu^* c - (i/2)|mu|^2

and the jump operator is s_k = c + mu_k, which carries v_k to v_{k+1}.
Amplitudes decay as exp(-lambda tau) with lambda an eigenvalue of i H(mu),
so Re(lambda) = |s_k v|^2 / 2 is a decay rate.
"""
import cmath
from dataclasses import dataclass
from enum import Enum, auto
import logging
import math
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from prtrack.blochcore import (
    IDENTITY,
    TwoLevelModel,
    bloch_to_ket,
    canonicalize,
    resonance_fluorescence,
    to_bloch,
)
from prtrack.prensemble import PREnsemble, rotate, two_state_ensembles


logger = logging.getLogger(__name__)

BRANCHES = ("half", "nu+", "nu-")
BRANCH_PROVENANCE = {"half": "u1", "nu+": "u+", "nu-": "u-"}
MATCH_TOL = 1e-8
CYCLE_TOL = 1e-8


class MonitorException(Exception):
    """An exception specific to monitoring schemes."""


class NotRealizable(MonitorException):
    """No monitoring scheme reproduces the requested ensemble."""


class NotConvergent(MonitorException):
    """The scheme is not mean-square convergent (C = 1)."""


class StageStability(Enum):
    STABLE = auto()
    UNSTABLE = auto()
    MARGINAL = auto()


def effective_hamiltonian(model: TwoLevelModel, mu: complex) -> np.ndarray:
    """Return H(mu)."""
    c = model.jump_op
    return (
        model.hamiltonian
        - 0.5j * c.conj().T @ c
        - 1j * np.conj(mu) * c
        - 0.5j * abs(mu) ** 2 * IDENTITY
    )


def _normalized(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _phase_fixed(v: np.ndarray) -> np.ndarray:
    """Normalize and make the largest component real and positive."""
    v = _normalized(v)
    pivot = v[np.argmax(np.abs(v))]
    return v * (abs(pivot) / pivot)


@dataclass(frozen=True)
class MonitoringScheme:
    """
    A cyclic K-stage adaptive monitoring scheme.

    Q[k] is the 2x2 matrix with s_k v^e_k = Q11 v^e_{k+1} + Q12 v^o_{k+1} and
    s_k v^o_k = Q21 v^e_{k+1} + Q22 v^o_{k+1}; Q12 vanishes for a valid
    scheme. overlaps[k] is <v^e_k|v^o_k>.
    """

    model: TwoLevelModel
    mu: Tuple[complex, ...]
    H_eff: Tuple[np.ndarray, ...]
    s_ops: Tuple[np.ndarray, ...]
    ensemble_eigs: Tuple[Tuple[complex, np.ndarray], ...]
    other_eigs: Tuple[Tuple[complex, np.ndarray], ...]
    Q: Tuple[np.ndarray, ...]
    overlaps: Tuple[complex, ...]

    @property
    def K(self) -> int:
        return len(self.mu)

    def cycle_operator(self) -> np.ndarray:
        """Return s_K ... s_1."""
        product = IDENTITY.copy()
        for s in self.s_ops:
            product = s @ product
        return product

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "mu": [[m.real, m.imag] for m in self.mu],
            "lambda_e": [[l.real, l.imag] for l, _ in self.ensemble_eigs],
            "lambda_o": [[l.real, l.imag] for l, _ in self.other_eigs],
            "overlaps": [abs(o) for o in self.overlaps],
        }


def cycle_residual(scheme: MonitoringScheme) -> float:
    """Relative distance of the cycle operator from a multiple of I."""
    cycle = scheme.cycle_operator()
    scale = np.linalg.norm(cycle)
    if scale == 0:
        return math.inf
    return float(np.linalg.norm(cycle - np.trace(cycle) / 2 * IDENTITY) / scale)


def build_scheme(
    model: TwoLevelModel,
    kets: Sequence[np.ndarray],
    mus: Sequence[complex],
    strict: bool = True,
) -> MonitoringScheme:
    """
    Assemble a scheme from ensemble kets and oscillator amplitudes.

    With `strict` the ensemble ket must be an eigenvector of i H(mu_k), all
    decay rates positive and the cycle operator proportional to I;
    otherwise the nearest eigenvector is used and nothing is checked.

    Raises
    ------
    NotRealizable
        If a strict check fails.
    """
    K = len(kets)
    kets = [_phase_fixed(np.asarray(v, dtype=complex)) for v in kets]
    hamiltonians, jumps, ens, oth, overlaps = [], [], [], [], []
    for k in range(K):
        h_mu = effective_hamiltonian(model, mus[k])
        values, vectors = np.linalg.eig(1j * h_mu)
        fidelity = [abs(np.vdot(kets[k], _normalized(vectors[:, i]))) ** 2 for i in range(2)]
        best = int(np.argmax(fidelity))
        if strict and fidelity[best] < 1 - MATCH_TOL:
            raise NotRealizable(
                f"Stage {k + 1}: the ensemble state is not an eigenvector of H(mu)."
            )
        other = 1 - best
        lam_e, lam_o = complex(values[best]), complex(values[other])
        if strict and (lam_e.real <= 0 or lam_o.real <= 0):
            raise NotRealizable(f"Stage {k + 1}: a decay rate is not positive.")
        v_o = _phase_fixed(vectors[:, other])
        hamiltonians.append(h_mu)
        jumps.append(model.jump_op + mus[k] * IDENTITY)
        ens.append((lam_e, kets[k]))
        oth.append((lam_o, v_o))
        overlaps.append(complex(np.vdot(kets[k], v_o)))

    q_mats = []
    for k in range(K):
        nxt = (k + 1) % K
        basis = np.column_stack([ens[nxt][1], oth[nxt][1]])
        images = np.column_stack([jumps[k] @ ens[k][1], jumps[k] @ oth[k][1]])
        try:
            q_mats.append(np.linalg.solve(basis, images).T)
        except np.linalg.LinAlgError:
            if strict:
                raise NotRealizable(
                    f"Stage {k + 2}: ensemble and other eigenvectors coincide."
                ) from None
            q_mats.append(np.full((2, 2), np.nan, dtype=complex))

    scheme = MonitoringScheme(
        model=model,
        mu=tuple(complex(m) for m in mus),
        H_eff=tuple(hamiltonians),
        s_ops=tuple(jumps),
        ensemble_eigs=tuple(ens),
        other_eigs=tuple(oth),
        Q=tuple(q_mats),
        overlaps=tuple(overlaps),
    )
    if strict and cycle_residual(scheme) > CYCLE_TOL:
        raise NotRealizable("The full-cycle jump operator is not proportional to I.")
    return scheme


def mu_for_states(model: TwoLevelModel, v: np.ndarray, v_next: np.ndarray) -> complex:
    """
    Return mu with c v = -mu v + b v_next.

    Raises
    ------
    NotRealizable
        If v and v_next are parallel.
    """
    basis = np.column_stack([v, v_next])
    if abs(np.linalg.det(basis)) < 1e-12:
        raise NotRealizable("Consecutive ensemble states coincide.")
    coeffs = np.linalg.solve(basis, model.jump_op @ v)
    return complex(-coeffs[0])


def scheme_from_ensemble(model: TwoLevelModel, e: PREnsemble) -> MonitoringScheme:
    """
    Build the monitoring scheme that makes the conditioned state jump around `e`.

    The jump operator is first made traceless; mu_k then follows from
    c v_k = -mu_k v_k + b_k v_{k+1}.

    Raises
    ------
    NotRealizable
        If some ensemble state is not an eigenvector of its stage's H(mu) or
        the cycle operator is not proportional to the identity.
    """
    model = canonicalize(model)
    kets = [bloch_to_ket(r) for r in e.states]
    mus = [
        mu_for_states(model, kets[k], kets[(k + 1) % e.K]) for k in range(e.K)
    ]
    return build_scheme(model, kets, mus)


def _leading_index(mus: Sequence[complex]) -> int:
    """Index of mu with the largest real part, ties broken by imaginary part."""
    return max(
        range(len(mus)), key=lambda k: (round(mus[k].real, 10), mus[k].imag)
    )


def oriented_scheme(model: TwoLevelModel, e: PREnsemble) -> MonitoringScheme:
    """Build the scheme with stages rotated so mu_1 leads (see `_leading_index`)."""
    scheme = scheme_from_ensemble(model, e)
    start = _leading_index(scheme.mu)
    if start == 0:
        return scheme
    return scheme_from_ensemble(model, rotate(e, start))


# ---------------------------------------------------------------------------
# Resonance fluorescence closed forms
# ---------------------------------------------------------------------------

def rf_eigensystem(mu: complex, epsilon: float):
    """
    Return ((lambda+, v+), (lambda-, v-)) for resonance fluorescence.

    lambda = (1 + 2|mu|^2)/4 +- (i/2) s and v = eps|1> + (+-s + i/2)|0>, with
    s = sqrt(eps^2 - 1/4 - 2 i eps mu^*) taken with Im(s) >= 0, so lambda+
    is the slower-decaying eigenvalue of i H(mu). Kets are normalized.
    """
    s = cmath.sqrt(epsilon**2 - 0.25 - 2j * epsilon * np.conj(mu))
    if s.imag < 0 or (s.imag == 0 and s.real < 0):
        s = -s
    centre = (1 + 2 * abs(mu) ** 2) / 4
    pairs = []
    for sign in (1, -1):
        lam = centre + sign * 0.5j * s
        ket = np.array([sign * s + 0.5j, epsilon], dtype=complex)
        pairs.append((complex(lam), _normalized(ket)))
    return tuple(pairs)


def nu_plus_minus(epsilon: float) -> Tuple[complex, complex]:
    """
    Return (nu+, nu-) = i sqrt(1 +- sqrt(1 - 16 eps^2)) / (2 sqrt 2).

    Raises
    ------
    NotRealizable
        If |epsilon| > 1/4.
    """
    inner = 1 - 16 * epsilon**2
    if inner < 0:
        raise NotRealizable("nu+- exist only for |epsilon| <= 1/4.")
    root = math.sqrt(inner)
    return (
        1j * math.sqrt(1 + root) / (2 * math.sqrt(2)),
        1j * math.sqrt(1 - root) / (2 * math.sqrt(2)),
    )


def rf_branch_scheme(epsilon: float, branch: str) -> MonitoringScheme:
    """
    Return the two-state scheme of resonance fluorescence on one branch.

    branch is "half" (mu_1 = 1/2, ensemble from u1), "nu+" or "nu-"
    (ensembles from u+ and u-, only for epsilon < 1/4).

    Raises
    ------
    NotRealizable
        If the branch has no ensemble at this epsilon.
    """
    if branch not in BRANCH_PROVENANCE:
        raise ValueError(f"Unknown branch {branch!r}; expected one of {BRANCHES}.")
    model = resonance_fluorescence(epsilon)
    wanted = BRANCH_PROVENANCE[branch]
    for e in two_state_ensembles(to_bloch(model)):
        if e.provenance == (wanted,):
            return oriented_scheme(model, e)
    raise NotRealizable(f"No {branch} ensemble at epsilon={epsilon}.")


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

def stability_C(s: MonitoringScheme) -> float:
    """Return C = prod Re(lambda^e_k) / prod Re(lambda^o_k)."""
    num = math.prod(l.real for l, _ in s.ensemble_eigs)
    den = math.prod(l.real for l, _ in s.other_eigs)
    return num / den


def stability_C_qform(s: MonitoringScheme) -> float:
    """Return C = |prod Q^k_22|^2 / (2^K prod Re(lambda^o_k))."""
    q22 = np.prod([q[1, 1] for q in s.Q])
    den = 2**s.K * math.prod(l.real for l, _ in s.other_eigs)
    return float(abs(q22) ** 2 / den)


def asymptotic_rate(s: MonitoringScheme) -> float:
    """
    Return R = -ln(C) / sum_k 1/(2 Re(lambda^e_k)).

    The denominator is the mean duration of one full cycle. For K > 2 the
    stage-additive sum extends the two-stage formula and is an extrapolation.

    Raises
    ------
    NotConvergent
        If C >= 1.
    """
    c = stability_C(s)
    if c >= 1:
        raise NotConvergent(f"C = {c!r}: the scheme is not mean-square convergent.")
    cycle_time = sum(1 / (2 * l.real) for l, _ in s.ensemble_eigs)
    return -math.log(c) / cycle_time


def stage_stability(s: MonitoringScheme, tol: float = 1e-12) -> List[StageStability]:
    """Stage k is stable iff Re(lambda^e_k) < Re(lambda^o_k)."""
    flags = []
    for (lam_e, _), (lam_o, _) in zip(s.ensemble_eigs, s.other_eigs):
        gap = lam_o.real - lam_e.real
        if abs(gap) <= tol:
            flags.append(StageStability.MARGINAL)
        elif gap > 0:
            flags.append(StageStability.STABLE)
        else:
            flags.append(StageStability.UNSTABLE)
    return flags


class JumpBounds:
    """Bounds on the norm ratio across a jump and the fidelity-drop threshold B."""

    __slots__ = ("stage", "lambda_min", "lambda_max", "B")

    def __init__(self, stage, lambda_min, lambda_max, B):
        self.stage = stage
        self.lambda_min = lambda_min
        self.lambda_max = lambda_max
        self.B = B

    def __repr__(self):
        return (
            f"JumpBounds(stage={self.stage}, lambda_min={self.lambda_min:.6g}, "
            f"lambda_max={self.lambda_max:.6g}, B={self.B:.6g})"
        )

    @property
    def fidelity_drop_possible(self) -> bool:
        """True if some jump can lower the fidelity."""
        return self.lambda_min < self.B


def stage_amplitudes(s: MonitoringScheme, k: int, psi: np.ndarray) -> np.ndarray:
    """Return (alpha, beta) with psi = alpha v^e_k + beta v^o_k."""
    basis = np.column_stack([s.ensemble_eigs[k][1], s.other_eigs[k][1]])
    return np.linalg.solve(basis, np.asarray(psi, dtype=complex))


def jump_B(s: MonitoringScheme, k: int, psi: np.ndarray) -> float:
    """
    Return B = (|beta_2|^2/|beta_1|^2)(1 - |O_{k+1}|^2)/(1 - |O_k|^2).

    beta_1 is the v^o_k amplitude of the pre-jump state psi and beta_2 the
    v^o_{k+1} amplitude of s_k psi.
    """
    nxt = (k + 1) % s.K
    beta1 = stage_amplitudes(s, k, psi)[1]
    beta2 = stage_amplitudes(s, nxt, s.s_ops[k] @ psi)[1]
    if beta1 == 0:
        raise MonitorException("B is undefined without a v^o component.")
    ratio = abs(beta2) ** 2 / abs(beta1) ** 2
    return float(
        ratio * (1 - abs(s.overlaps[nxt]) ** 2) / (1 - abs(s.overlaps[k]) ** 2)
    )


def jump_fidelity_bounds(s: MonitoringScheme, k: int) -> JumpBounds:
    """
    Return the extreme eigenvalues of s_k^dag s_k and the threshold B_k.

    Because s_k maps the v^o_k amplitude beta to Q^k_22 beta, B_k equals
    |Q^k_22|^2 (1 - |O_{k+1}|^2)/(1 - |O_k|^2) for every pre-jump state.
    """
    jump = s.s_ops[k]
    low, high = np.linalg.eigvalsh(jump.conj().T @ jump)
    nxt = (k + 1) % s.K
    b = (
        abs(s.Q[k][1, 1]) ** 2
        * (1 - abs(s.overlaps[nxt]) ** 2)
        / (1 - abs(s.overlaps[k]) ** 2)
    )
    return JumpBounds(stage=k + 1, lambda_min=float(low), lambda_max=float(high), B=float(b))


class IdentityReport:
    """Residuals of the three cycle identities of a scheme."""

    __slots__ = ("q11_norm", "q_products", "cycle", "tol")

    def __init__(self, q11_norm, q_products, cycle, tol):
        self.q11_norm = q11_norm
        self.q_products = q_products
        self.cycle = cycle
        self.tol = tol

    def __repr__(self):
        return (
            f"IdentityReport(q11_norm={self.q11_norm:.3g}, "
            f"q_products={self.q_products:.3g}, cycle={self.cycle:.3g})"
        )

    @property
    def passes(self) -> bool:
        return max(self.q11_norm, self.q_products, self.cycle) < self.tol


def verify_appendix_a(s: MonitoringScheme, tol: float = 1e-10) -> IdentityReport:
    """
    Check the cycle identities of a scheme.

    (i) prod |Q^k_11|^2 = 2^K prod Re(lambda^e_k), (ii) prod Q^k_11 =
    prod Q^k_22 and (iii) s_K ... s_1 proportional to I, each as a relative
    residual.
    """
    q11 = np.prod([q[0, 0] for q in s.Q])
    q22 = np.prod([q[1, 1] for q in s.Q])
    target = 2**s.K * math.prod(l.real for l, _ in s.ensemble_eigs)
    with np.errstate(invalid="ignore"):
        first = abs(abs(q11) ** 2 - target) / abs(target)
        second = abs(q11 - q22) / max(abs(q11), abs(q22))
    first = float(first) if np.isfinite(first) else math.inf
    second = float(second) if np.isfinite(second) else math.inf
    return IdentityReport(first, second, cycle_residual(s), tol)


@dataclass(frozen=True)
class StabilityReport:
    """Mean-square and per-stage stability of a scheme."""

    C: float
    C_qform: float
    R: Optional[float]
    stage_stability: Tuple[StageStability, ...]
    jump_bounds: Tuple[JumpBounds, ...]

    @property
    def mean_square_stable(self) -> bool:
        return self.C < 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "C": self.C,
            "C_qform": self.C_qform,
            "R": self.R,
            "mean_square_stable": self.mean_square_stable,
            "stage_stability": [flag.name for flag in self.stage_stability],
            "jump_bounds": [
                {"lambda_min": b.lambda_min, "lambda_max": b.lambda_max, "B": b.B}
                for b in self.jump_bounds
            ],
        }


def stability_report(s: MonitoringScheme) -> StabilityReport:
    """
    Collect every stability figure of a scheme.

    Parameters
    ----------
    s : MonitoringScheme
        The scheme to analyse.

    Returns
    -------
    StabilityReport
        C in both forms, R (None when C >= 1, with a warning logged), the
        per-stage classification and the jump bounds of every stage.
    """
    c = stability_C(s)
    try:
        rate = asymptotic_rate(s)
    except NotConvergent:
        logger.warning(f"Scheme with C={c:.6g} is not mean-square convergent.")
        rate = None
    return StabilityReport(
        C=c,
        C_qform=stability_C_qform(s),
        R=rate,
        stage_stability=tuple(stage_stability(s)),
        jump_bounds=tuple(jump_fidelity_bounds(s, k) for k in range(s.K)),
    )


def find_epsilon0(lo: float = 0.2, hi: float = 0.2499, tol: float = 1e-4) -> float:
    """
    Locate where the second stage of the nu+ branch turns unstable.

    Raises
    ------
    MonitorException
        If the classification does not change over [lo, hi].
    """

    def unstable(epsilon):
        scheme = rf_branch_scheme(epsilon, "nu+")
        return stage_stability(scheme)[1] is StageStability.UNSTABLE

    if unstable(lo) or not unstable(hi):
        raise MonitorException(f"No stability change on [{lo}, {hi}].")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Initial states and tables
# ---------------------------------------------------------------------------

def initial_state(s: MonitoringScheme, stage: int, beta_sq: float) -> np.ndarray:
    """
    Return the normalized psi = alpha v^e + beta v^o of a stage with |beta|^2 given.

    alpha and beta are real and non-negative.
    """
    v_e = s.ensemble_eigs[stage][1]
    v_o = s.other_eigs[stage][1]
    beta = math.sqrt(beta_sq)
    overlap = s.overlaps[stage].real
    alpha = -beta * overlap + math.sqrt((beta * overlap) ** 2 - beta_sq + 1)
    return alpha * v_e + beta * v_o


def state_from_amplitudes(
    s: MonitoringScheme, stage: int, alpha: complex, beta: complex
) -> np.ndarray:
    """Return alpha v^e + beta v^o of a stage, normalized."""
    psi = alpha * s.ensemble_eigs[stage][1] + beta * s.other_eigs[stage][1]
    return _normalized(psi)


def branch_rows(epsilons: Iterable[float], branches: Sequence[str] = BRANCHES) -> List[Dict[str, Any]]:
    """
    Tabulate the two-state branches of resonance fluorescence.

    Columns: epsilon, branch, h, C, R, stage1, stage2, lambda_min, B1, B2.
    Branches without an ensemble at some epsilon are left out.
    """
    rows = []
    for epsilon in epsilons:
        model = resonance_fluorescence(epsilon)
        ensembles = {e.provenance: e for e in two_state_ensembles(to_bloch(model))}
        for branch in branches:
            e = ensembles.get((BRANCH_PROVENANCE[branch],))
            if e is None:
                continue
            scheme = oriented_scheme(model, e)
            report = stability_report(scheme)
            rows.append(
                {
                    "epsilon": epsilon,
                    "branch": branch,
                    "h": e.entropy,
                    "C": report.C,
                    "R": report.R,
                    "stage1": report.stage_stability[0].name,
                    "stage2": report.stage_stability[1].name,
                    "lambda_min": report.jump_bounds[0].lambda_min,
                    "B1": report.jump_bounds[0].B,
                    "B2": report.jump_bounds[1].B,
                }
            )
    return rows
