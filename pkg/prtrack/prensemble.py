"""
Physically realizable (PR) ensembles of pure qubit states.

An ensemble {p_k, r_k} of pure states realizes the steady state when some
adaptive monitoring makes the conditioned state jump cyclically
r_1 -> r_2 -> ... -> r_K -> r_1 with rates kappa_k = kappa_{k,k+1} such that

    |r_k| = 1
    A r_k + b = kappa_k (r_{k+1} - r_k)

Two-state ensembles come from real eigenvectors of A in closed form. Cyclic
three-state ensembles are the real, positive-rate solutions of a system of
twelve quadratic polynomials solved with `prtrack.polysolve`.
"""
from dataclasses import dataclass
import csv
from fractions import Fraction
import json
import logging
import math
from typing import Any, Callable, Dict, IO, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from prtrack.blochcore import (
    BlochAffine,
    Eigen3,
    eigen3,
    shannon_entropy,
    von_neumann_entropy,
)
from prtrack.config import SolverConfig
from prtrack.polysolve import MultiPoly, solve_zero_dim


logger = logging.getLogger(__name__)

THREE_STATE_VARIABLES = (
    "r11", "r12", "r13",
    "r21", "r22", "r23",
    "r31", "r32", "r33",
    "k12", "k23", "k31",
)
SWEEP_COLUMNS = (
    "epsilon", "solution_id", "h", "total_angle",
    "angle1", "angle2", "angle3",
    "kappa12", "kappa23", "kappa31",
)


class EnsembleException(Exception):
    """An exception specific to PR ensembles."""


class NonRationalInput(EnsembleException):
    """A coefficient cannot be represented as a small exact rational."""


@dataclass(frozen=True)
class PREnsemble:
    """
    A cyclic jumping ensemble of pure qubit states.

    Parameters
    ----------
    states : tuple of ndarray
        Bloch vectors r_1..r_K.
    weights : tuple of float
        Occupation probabilities p_k.
    rates : tuple of float
        rates[k] is the rate of the jump from state k to state k+1 (mod K),
        in units of gamma.
    provenance : tuple of str
        Eigenvectors of A the ensemble was built from ("u1", "u+", "u-",
        "conjugate-pair" or "numeric").
    """

    states: Tuple[np.ndarray, ...]
    weights: Tuple[float, ...]
    rates: Tuple[float, ...]
    provenance: Tuple[str, ...] = ("numeric",)

    def __post_init__(self):
        states = tuple(np.asarray(r, dtype=float) for r in self.states)
        if len(self.weights) != len(states):
            raise EnsembleException("One weight per state is required.")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(k) for k in self.rates))
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def K(self) -> int:
        return len(self.states)

    @property
    def entropy(self) -> float:
        """Shannon entropy of the weights in bits."""
        return shannon_entropy(self.weights)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "states": [r.tolist() for r in self.states],
            "weights": list(self.weights),
            "rates": list(self.rates),
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PREnsemble":
        return cls(
            states=tuple(data["states"]),
            weights=tuple(data["weights"]),
            rates=tuple(data["rates"]),
            provenance=tuple(data.get("provenance", ("numeric",))),
        )


def ensemble_to_json(e: PREnsemble) -> str:
    return json.dumps(e.to_dict())


def ensemble_from_json(text: str) -> PREnsemble:
    return PREnsemble.from_dict(json.loads(text))


def rotate(e: PREnsemble, shift: int) -> PREnsemble:
    """Relabel states cyclically so that state `shift` comes first."""
    k = shift % e.K

    def roll(items):
        return tuple(items[k:]) + tuple(items[:k])

    return PREnsemble(
        states=roll(e.states),
        weights=roll(e.weights),
        rates=roll(e.rates),
        provenance=e.provenance,
    )


def mirror(e: PREnsemble) -> PREnsemble:
    """Reflect every state through the x = 0 plane."""
    flip = np.array([-1.0, 1.0, 1.0])
    return PREnsemble(
        states=tuple(r * flip for r in e.states),
        weights=e.weights,
        rates=e.rates,
        provenance=e.provenance,
    )


class ResidualReport:
    """The outcome of checking an ensemble against the PR conditions."""

    __slots__ = ("norm", "jump", "convexity", "weights", "rates_positive", "tol")

    def __init__(self, norm, jump, convexity, weights, rates_positive, tol):
        self.norm = norm
        self.jump = jump
        self.convexity = convexity
        self.weights = weights
        self.rates_positive = rates_positive
        self.tol = tol

    def __repr__(self):
        return (
            f"ResidualReport(max_residual={self.max_residual:.3g}, "
            f"rates_positive={self.rates_positive}, passes={self.passes})"
        )

    @property
    def max_residual(self) -> float:
        return max(list(self.norm) + list(self.jump) + [self.convexity, self.weights])

    @property
    def passes(self) -> bool:
        """True if every residual is below `tol` and every rate is positive."""
        return self.rates_positive and self.max_residual < self.tol


def verify_pr(e: PREnsemble, affine: BlochAffine, tol: float = 1e-8) -> ResidualReport:
    """
    Return per-condition residuals of the PR conditions.

    Reports |(|r_k| - 1)| for each state, |A r_k + b - kappa_k (r_{k+1} - r_k)|
    for each state, |sum p_k r_k - r_ss| and |sum p_k - 1|.
    """
    norm = [abs(float(np.linalg.norm(r)) - 1) for r in e.states]
    jump = []
    for k, r in enumerate(e.states):
        drift = affine.rhs(r)
        if k < len(e.rates) and e.K > 1:
            drift = drift - e.rates[k] * (e.states[(k + 1) % e.K] - r)
        jump.append(float(np.linalg.norm(drift)))
    mean = sum(w * r for w, r in zip(e.weights, e.states))
    convexity = float(np.linalg.norm(mean - affine.r_ss))
    weights = abs(sum(e.weights) - 1)
    rates_positive = len(e.rates) == e.K and all(k > 0 for k in e.rates)
    return ResidualReport(norm, jump, convexity, weights, rates_positive, tol)


# ---------------------------------------------------------------------------
# Eigenvector labels
# ---------------------------------------------------------------------------

def eigen_labels(eig: Eigen3) -> List[Tuple[str, complex, np.ndarray]]:
    """
    Label the eigenvectors of A as u1, u+, u-.

    With three real eigenvalues they are named in descending order. With a
    real eigenvalue and a conjugate pair the real one is u1 and the pair
    member with positive imaginary part is u+.
    """
    names = ("u1", "u+", "u-")
    labels = []
    for name, value, vector in zip(names, eig.eigenvalues, eig.eigenvectors):
        labels.append((name, value, vector))
    return labels


def _plane_normal(a: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    normal = np.cross(a, b)
    size = np.linalg.norm(normal)
    if size < 1e-12:
        return None
    return normal / size


def _match_provenance(
    states: Sequence[np.ndarray], affine: BlochAffine, eig: Eigen3
) -> Tuple[str, ...]:
    """Name the eigenvector pair of A spanning the plane of r_k - r_ss."""
    offsets = np.array([r - affine.r_ss for r in states])
    _, singular, vh = np.linalg.svd(offsets)
    normal = vh[-1]
    labels = eigen_labels(eig)
    candidates = []
    pair = eig.complex_pair()
    if pair is not None:
        plane = _plane_normal(np.real(pair[1]), np.imag(pair[1]))
        if plane is not None:
            candidates.append((("conjugate-pair",), plane))
    real = [(name, np.real(v)) for name, value, v in labels if abs(value.imag) == 0]
    for i in range(len(real)):
        for j in range(i + 1, len(real)):
            plane = _plane_normal(real[i][1], real[j][1])
            if plane is not None:
                candidates.append(((real[i][0], real[j][0]), plane))
    best, score = ("numeric",), 0.0
    for names, plane in candidates:
        overlap = abs(float(np.dot(plane, normal)))
        if overlap > score:
            best, score = names, overlap
    if score < 1 - 1e-6:
        return ("numeric",)
    return best


# ---------------------------------------------------------------------------
# Two-state ensembles
# ---------------------------------------------------------------------------

def two_state_ensembles(affine: BlochAffine) -> List[PREnsemble]:
    """
    Return one two-state PR ensemble per real eigenvector of A.

    The line r_ss + t u through the steady state along a real eigenvector u
    meets the sphere at t+ > 0 and t- < 0. With eta1 = t+, eta2 = -t- and
    eigenvalue lam < 0 the ensemble is

        r1 = r_ss + t+ u,  r2 = r_ss + t- u
        p1 = eta2/(eta1 + eta2),  p2 = eta1/(eta1 + eta2)
        kappa12 = -eta1 lam/(eta1 + eta2),  kappa21 = -eta2 lam/(eta1 + eta2)
    """
    r_ss = affine.r_ss
    eig = eigen3(affine.A)
    ensembles = []
    seen: List[np.ndarray] = []
    for name, value, vector in eigen_labels(eig):
        if value.imag != 0:
            continue
        u = np.real(vector)
        if any(abs(abs(np.dot(u, v)) - 1) < 1e-10 for v in seen):
            continue
        seen.append(u)
        along = float(np.dot(r_ss, u))
        root = math.sqrt(along * along + 1 - float(np.dot(r_ss, r_ss)))
        t_plus, t_minus = -along + root, -along - root
        eta1, eta2 = t_plus, -t_minus
        total = eta1 + eta2
        lam = value.real
        ensembles.append(
            PREnsemble(
                states=(r_ss + t_plus * u, r_ss + t_minus * u),
                weights=(eta2 / total, eta1 / total),
                rates=(-eta1 * lam / total, -eta2 * lam / total),
                provenance=(name,),
            )
        )
    return ensembles


def complex_pair_feasible(lam: complex) -> bool:
    """
    Return True if a conjugate eigenpair can carry real cyclic rates.

    The rates must satisfy sum = 2 Re(lam) and pairwise-product sum = |lam|^2,
    which has real solutions only if Re(lam)^2 > 3 Im(lam)^2.
    """
    if lam.imag == 0:
        raise ValueError("A complex eigenvalue with nonzero imaginary part is required.")
    return lam.real**2 > 3 * lam.imag**2


# ---------------------------------------------------------------------------
# Three-state ensembles
# ---------------------------------------------------------------------------

def rationalize(value: float, max_denominator: int) -> Fraction:
    """
    Return the exact small rational equal to `value`.

    Raises
    ------
    NonRationalInput
        If no fraction with denominator at most `max_denominator` matches
        `value` to double precision.
    """
    if isinstance(value, Fraction):
        return value
    if not math.isfinite(value):
        raise NonRationalInput(f"{value!r} is not finite.")
    guess = Fraction(value).limit_denominator(max_denominator)
    if abs(float(guess) - value) > 1e-12 * max(1.0, abs(value)):
        raise NonRationalInput(
            f"{value!r} has no rational form with denominator <= {max_denominator}."
        )
    return guess


def three_state_system(
    affine: BlochAffine, config: Optional[SolverConfig] = None
) -> List[MultiPoly]:
    """
    Return the twelve polynomials whose roots are cyclic three-state ensembles.

    Unknowns are ordered as `THREE_STATE_VARIABLES`: the components of
    r_1, r_2, r_3 then kappa12, kappa23, kappa31. The first nine polynomials
    are the jump conditions, the last three the unit-norm conditions.

    Raises
    ------
    NonRationalInput
        If an entry of A or b is not a small rational.
    """
    config = config or SolverConfig()
    a = [[rationalize(float(x), config.rational_precision) for x in row] for row in affine.A]
    b = [rationalize(float(x), config.rational_precision) for x in affine.b]
    nvars = len(THREE_STATE_VARIABLES)

    def r(j, c):
        return 3 * (j % 3) + c

    def kappa(j):
        return 9 + (j % 3)

    def unit(*indices):
        exps = [0] * nvars
        for i in indices:
            exps[i] += 1
        return tuple(exps)

    polys = []
    for j in range(3):
        for c in range(3):
            terms: Dict[Tuple[int, ...], Fraction] = {}

            def add(mono, coeff):
                terms[mono] = terms.get(mono, 0) + coeff

            for d in range(3):
                add(unit(r(j, d)), a[c][d])
            add(unit(), b[c])
            add(unit(kappa(j), r(j + 1, c)), Fraction(-1))
            add(unit(kappa(j), r(j, c)), Fraction(1))
            polys.append(MultiPoly(terms, nvars))
    for j in range(3):
        terms = {unit(r(j, c), r(j, c)): Fraction(1) for c in range(3)}
        terms[unit()] = Fraction(-1)
        polys.append(MultiPoly(terms, nvars))
    return polys


def _canonical_order(e: PREnsemble) -> PREnsemble:
    """Rotate so the most probable state comes first."""
    return rotate(e, int(np.argmax(e.weights)))


def _same_cycle(e: PREnsemble, other: PREnsemble, tol: float = 1e-6) -> bool:
    if e.K != other.K:
        return False
    for shift in range(e.K):
        rolled = rotate(other, shift)
        if all(np.linalg.norm(x - y) <= tol for x, y in zip(e.states, rolled.states)):
            return True
    return False


def three_state_ensembles(
    affine: BlochAffine, config: Optional[SolverConfig] = None
) -> List[PREnsemble]:
    """
    Return all cyclic three-state PR ensembles, sorted by ascending entropy.

    Complex roots, roots with a non-positive rate and roots off the unit
    sphere are discarded. Rotations of the same cycle are merged; mirror
    images are kept as distinct ensembles. Weights solve the stationary
    balance p_k kappa_k = const.

    Raises
    ------
    NonRationalInput
        If A or b cannot be converted to exact rationals.
    SolverDegeneracy
        Propagated from `polysolve.solve_zero_dim`.
    """
    config = config or SolverConfig()
    polys = three_state_system(affine, config)
    roots = solve_zero_dim(polys, config)
    eig = eigen3(affine.A)
    found: List[PREnsemble] = []
    for root in roots:
        if np.max(np.abs(root.imag)) >= 1e-8:
            continue
        values = root.real
        states = tuple(values[3 * j:3 * j + 3] for j in range(3))
        rates = tuple(values[9:12])
        if min(rates) <= 0:
            continue
        if any(abs(np.linalg.norm(s) - 1) > 1e-6 for s in states):
            continue
        inverse = [1 / k for k in rates]
        weights = tuple(x / sum(inverse) for x in inverse)
        candidate = _canonical_order(
            PREnsemble(
                states=states,
                weights=weights,
                rates=rates,
                provenance=_match_provenance(states, affine, eig),
            )
        )
        report = verify_pr(candidate, affine, tol=1e-8)
        if not report.passes:
            logger.warning(f"Discarded a three-state root: {report!r}")
            continue
        if any(_same_cycle(candidate, other) for other in found):
            continue
        found.append(candidate)
    found.sort(key=lambda e: e.entropy)
    logger.info(f"Found {len(found)} three-state ensembles.")
    return found


# ---------------------------------------------------------------------------
# Geometry and tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleGeometry:
    """Angles (degrees) and entropy (bits) of an ensemble."""

    total_angle: float
    angles_to_ss: Tuple[float, ...]
    entropy: float


def angle_between(a: Sequence[float], b: Sequence[float]) -> float:
    """Angle between two vectors in degrees, in [0, 180]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cosine = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(min(1.0, max(-1.0, float(cosine)))))


def geometry(e: PREnsemble, r_ss: Sequence[float]) -> EnsembleGeometry:
    """
    Return the total angle, the angles to r_ss and the entropy.

    States are taken in order of decreasing weight. The total angle sums the
    angles between consecutive states around the cycle (a single angle for
    two states).
    """
    order = sorted(range(e.K), key=lambda k: -e.weights[k])
    states = [e.states[k] for k in order]
    if e.K == 2:
        total = angle_between(states[0], states[1])
    else:
        total = sum(
            angle_between(states[k], states[(k + 1) % e.K]) for k in range(e.K)
        )
    return EnsembleGeometry(
        total_angle=total,
        angles_to_ss=tuple(angle_between(r, r_ss) for r in states),
        entropy=e.entropy,
    )


def entropy_gap(e: PREnsemble, affine: BlochAffine) -> float:
    """Return h(p) - S(rho_ss); never negative for a valid ensemble."""
    return e.entropy - von_neumann_entropy(affine.r_ss)


def sweep_rows(
    epsilon: float, ensembles: Iterable[PREnsemble], r_ss: Sequence[float]
) -> List[Dict[str, Any]]:
    """Flatten ensembles into rows with the `SWEEP_COLUMNS` schema."""
    rows = []
    for solution_id, e in enumerate(ensembles, start=1):
        geo = geometry(e, r_ss)
        angles = list(geo.angles_to_ss) + [None] * (3 - e.K)
        rates = list(e.rates) + [None] * (3 - len(e.rates))
        rows.append(
            dict(
                zip(
                    SWEEP_COLUMNS,
                    [epsilon, solution_id, geo.entropy, geo.total_angle]
                    + angles
                    + rates,
                )
            )
        )
    return rows


def ensembles_to_csv(rows: Iterable[Dict[str, Any]], stream: IO[str]) -> None:
    """Write sweep rows as CSV with a header line."""
    writer = csv.DictWriter(stream, fieldnames=SWEEP_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def count_threshold(
    count: Callable[[float], int], lo: float, hi: float, tol: float = 1e-3
) -> float:
    """
    Locate where `count` changes value between lo and hi by bisection.

    Raises
    ------
    EnsembleException
        If count(lo) == count(hi).
    """
    at_lo, at_hi = count(lo), count(hi)
    if at_lo == at_hi:
        raise EnsembleException(
            f"The count is {at_lo} at both ends of [{lo}, {hi}]."
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count(mid) == at_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
