"""
Qubit master equations in Lindblad form and their Bloch-vector picture.

Pauli convention used throughout the package: in the basis (|0>, |1>),

    sigma_x = [[0, 1], [1, 0]]
    sigma_y = [[0, i], [-i, 0]]
    sigma_z = [[-1, 0], [0, 1]]

so that |0> (the ground state) sits at Bloch z = -1, the three matrices
satisfy sigma_x sigma_y = i sigma_z, and a Bloch vector is
r = (<sigma_x>, <sigma_y>, <sigma_z>). With this choice the resonance
fluorescence generator is

    A = [[-g/2, 0, 0], [0, -g/2, -W], [0, W, -g]],   b = (0, 0, -g)

whose fixed point is (0, 2 g W, -g^2) / (g^2 + 2 W^2).
"""
from dataclasses import dataclass, field
import json
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm


logger = logging.getLogger(__name__)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
IDENTITY = np.eye(2, dtype=complex)
# |0><1|, takes the excited state to the ground state.
LOWERING = np.array([[0, 1], [0, 0]], dtype=complex)

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12


class BlochException(Exception):
    """An exception specific to qubit models and Bloch vectors."""


class InvalidModel(BlochException):
    """The model data violates an invariant."""


class SingularGenerator(BlochException):
    """The Bloch generator has no unique steady state."""


class InvalidDistribution(BlochException):
    """The weights are not a probability vector."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array)
    array.setflags(write=False)
    return array


def complex_to_pairs(values: np.ndarray) -> Any:
    """Encode a complex array as nested [re, im] lists (row-major)."""
    values = np.asarray(values, dtype=complex)
    if values.ndim == 0:
        return [float(values.real), float(values.imag)]
    return [complex_to_pairs(row) for row in values]


def pairs_to_complex(data: Any) -> np.ndarray:
    """Inverse of `complex_to_pairs`."""
    array = np.asarray(data, dtype=float)
    return array[..., 0] + 1j * array[..., 1]


@dataclass(frozen=True)
class TwoLevelModel:
    """
    A qubit Lindblad master equation with one jump channel.

    drho/dt = -i[H, rho] + c rho c^dag - {c^dag c, rho}/2

    Rates are in units of gamma (the jump operator in units of sqrt(gamma)).

    Parameters
    ----------
    hamiltonian : array_like
        2x2 Hermitian matrix.
    jump_op : array_like
        2x2 complex matrix.
    """

    hamiltonian: np.ndarray
    jump_op: np.ndarray

    def __post_init__(self):
        hamiltonian = np.asarray(self.hamiltonian, dtype=complex)
        jump_op = np.asarray(self.jump_op, dtype=complex)
        if hamiltonian.shape != (2, 2) or jump_op.shape != (2, 2):
            raise InvalidModel("Qubit operators must be 2x2 matrices.")
        if np.max(np.abs(hamiltonian - hamiltonian.conj().T)) > HERMITIAN_TOL:
            raise InvalidModel("The Hamiltonian is not Hermitian.")
        object.__setattr__(self, "hamiltonian", _frozen(hamiltonian))
        object.__setattr__(self, "jump_op", _frozen(jump_op))

    def __str__(self):
        """Return a human-consumable representation for this model."""
        return f"TwoLevelModel(H={self.hamiltonian.tolist()}, c={self.jump_op.tolist()})"

    @property
    def is_traceless(self) -> bool:
        """Return True if the jump operator has zero trace."""
        return abs(np.trace(self.jump_op)) <= HERMITIAN_TOL

    def rescaled(self, gamma: float) -> "TwoLevelModel":
        """Return the same model expressed with time in units of 1/gamma."""
        if gamma <= 0:
            raise InvalidModel("gamma must be positive.")
        return TwoLevelModel(
            hamiltonian=self.hamiltonian / gamma,
            jump_op=self.jump_op / math.sqrt(gamma),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready mapping, complex entries as [re, im]."""
        return {
            "hamiltonian": complex_to_pairs(self.hamiltonian),
            "jump_op": complex_to_pairs(self.jump_op),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TwoLevelModel":
        """Inverse of `to_dict`."""
        return cls(
            hamiltonian=pairs_to_complex(data["hamiltonian"]),
            jump_op=pairs_to_complex(data["jump_op"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TwoLevelModel":
        return cls.from_dict(json.loads(text))


def resonance_fluorescence(epsilon: float, gamma: float = 1.0) -> TwoLevelModel:
    """
    Return a resonantly driven, decaying two-level atom.

    H = (Omega/2) sigma_x and c = sqrt(gamma) |0><1|, with Omega = epsilon *
    gamma. The result is rescaled so that gamma = 1.
    """
    omega = epsilon * gamma
    model = TwoLevelModel(
        hamiltonian=0.5 * omega * SIGMA_X,
        jump_op=math.sqrt(gamma) * LOWERING,
    )
    return model.rescaled(gamma)


def canonicalize(model: TwoLevelModel) -> TwoLevelModel:
    """
    Return an equivalent model whose jump operator is traceless.

    With alpha = -Tr(c)/2 the pair c' = c + alpha,
    H' = H - (i/2)(alpha^* c - alpha c^dag) generates the same Lindbladian.
    """
    alpha = -np.trace(model.jump_op) / 2
    if abs(alpha) <= HERMITIAN_TOL:
        return model
    c = model.jump_op
    shift = -0.5j * (np.conj(alpha) * c - alpha * c.conj().T)
    # The shift is Hermitian up to rounding; symmetrize it.
    shift = 0.5 * (shift + shift.conj().T)
    return TwoLevelModel(
        hamiltonian=model.hamiltonian + shift,
        jump_op=c + alpha * IDENTITY,
    )


def lindblad_rhs(model: TwoLevelModel, rho: np.ndarray) -> np.ndarray:
    """Return L(rho) for the model's Lindbladian."""
    h, c = model.hamiltonian, model.jump_op
    cd = c.conj().T
    cdc = cd @ c
    return (
        -1j * (h @ rho - rho @ h)
        + c @ rho @ cd
        - 0.5 * (cdc @ rho + rho @ cdc)
    )


def integrate_density(
    model: TwoLevelModel, rho0: np.ndarray, t: float, steps: int = 2000
) -> np.ndarray:
    """Integrate the master equation with classical fourth-order Runge-Kutta."""
    rho = np.array(rho0, dtype=complex)
    dt = t / steps
    for _ in range(steps):
        k1 = lindblad_rhs(model, rho)
        k2 = lindblad_rhs(model, rho + 0.5 * dt * k1)
        k3 = lindblad_rhs(model, rho + 0.5 * dt * k2)
        k4 = lindblad_rhs(model, rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def density_from_bloch(r: Sequence[float]) -> np.ndarray:
    """Return (I + r.sigma)/2."""
    r = np.asarray(r, dtype=float)
    return 0.5 * (IDENTITY + sum(ri * s for ri, s in zip(r, PAULIS)))


def bloch_from_density(rho: np.ndarray) -> np.ndarray:
    """Return (Tr rho sigma_x, Tr rho sigma_y, Tr rho sigma_z)."""
    return np.array([np.trace(rho @ s).real for s in PAULIS])


def steady_state(affine: "BlochAffine") -> np.ndarray:
    """
    Return r_ss = -A^{-1} b.

    Raises
    ------
    SingularGenerator
        If A is singular.
    """
    return _solve_steady_state(affine.A, affine.b)


def _solve_steady_state(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    scale = max(np.max(np.abs(a)), 1.0)
    if abs(np.linalg.det(a)) <= 1e-13 * scale**3:
        raise SingularGenerator("A is singular: the steady state is not unique.")
    r_ss = np.linalg.solve(a, -b)
    # One step of iterative refinement keeps the residual at rounding level.
    r_ss = r_ss + np.linalg.solve(a, -(a @ r_ss + b))
    return r_ss


@dataclass(frozen=True)
class BlochAffine:
    """
    The Bloch-vector form dr/dt = A r + b of a qubit master equation.

    Parameters
    ----------
    A : array_like
        Real 3x3 matrix, all eigenvalues with strictly negative real part.
    b : array_like
        Real 3-vector.
    """

    A: np.ndarray
    b: np.ndarray
    r_ss: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != (3, 3) or b.shape != (3,):
            raise InvalidModel("A must be 3x3 and b a 3-vector.")
        r_ss = _solve_steady_state(a, b)
        if np.max(np.linalg.eigvals(a).real) >= 0:
            raise SingularGenerator(
                "A has an eigenvalue with non-negative real part."
            )
        if np.linalg.norm(r_ss) > 1 + 1e-9:
            raise InvalidModel("The steady state lies outside the Bloch ball.")
        object.__setattr__(self, "A", _frozen(a))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "r_ss", _frozen(r_ss))

    @property
    def is_mixed(self) -> bool:
        """Return True if the steady state is strictly inside the ball."""
        return bool(np.linalg.norm(self.r_ss) < 1 - 1e-12)

    def rhs(self, r: Sequence[float]) -> np.ndarray:
        """Return A r + b."""
        return self.A @ np.asarray(r, dtype=float) + self.b

    def evolve(self, r0: Sequence[float], t: float) -> np.ndarray:
        """Return r(t) exactly, via the exponential of the augmented generator."""
        generator = np.zeros((4, 4))
        generator[:3, :3] = self.A
        generator[:3, 3] = self.b
        state = np.append(np.asarray(r0, dtype=float), 1.0)
        return (expm(generator * t) @ state)[:3]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "r_ss": self.r_ss.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BlochAffine":
        return cls(A=np.asarray(data["A"]), b=np.asarray(data["b"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BlochAffine":
        return cls.from_dict(json.loads(text))


def to_bloch(model: TwoLevelModel) -> BlochAffine:
    """
    Return (A, b) such that the Bloch image of L(rho) is A r + b.

    A_ij = Tr[sigma_i L(sigma_j)]/2 and b_i = Tr[sigma_i L(I)]/2.

    Raises
    ------
    SingularGenerator
        If A is singular (no unique steady state).
    """
    a = np.empty((3, 3))
    for j, sigma_j in enumerate(PAULIS):
        image = lindblad_rhs(model, sigma_j)
        for i, sigma_i in enumerate(PAULIS):
            a[i, j] = 0.5 * np.trace(sigma_i @ image).real
    image = lindblad_rhs(model, IDENTITY)
    b = np.array([0.5 * np.trace(s @ image).real for s in PAULIS])
    return BlochAffine(A=a, b=b)


@dataclass(frozen=True)
class PureQubitState:
    """
    A normalized qubit ket and its Bloch vector.

    Parameters
    ----------
    amplitudes : array_like
        Complex 2-vector (|0>, |1>) components, normalized on construction.
    """

    amplitudes: np.ndarray
    bloch: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex)
        if psi.shape != (2,):
            raise InvalidModel("A qubit ket has two components.")
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise InvalidModel("The zero vector is not a state.")
        psi = psi / norm
        object.__setattr__(self, "amplitudes", _frozen(psi))
        object.__setattr__(self, "bloch", _frozen(ket_to_bloch(psi)))

    @classmethod
    def from_bloch(cls, r: Sequence[float]) -> "PureQubitState":
        return cls(bloch_to_ket(r))

    def fidelity(self, other: Union["PureQubitState", np.ndarray]) -> float:
        """Return |<self|other>|^2 (other normalized first)."""
        if isinstance(other, PureQubitState):
            other = other.amplitudes
        other = np.asarray(other, dtype=complex)
        return float(
            abs(np.vdot(self.amplitudes, other)) ** 2
            / np.vdot(other, other).real
        )


def ket_to_bloch(psi: Sequence[complex]) -> np.ndarray:
    """Return the Bloch vector of a (not necessarily normalized) ket."""
    psi = np.asarray(psi, dtype=complex)
    v0, v1 = psi / np.linalg.norm(psi)
    cross = np.conj(v0) * v1
    return np.array(
        [2 * cross.real, -2 * cross.imag, abs(v1) ** 2 - abs(v0) ** 2]
    )


def bloch_to_ket(r: Sequence[float]) -> np.ndarray:
    """
    Return a normalized ket with Bloch vector r/|r|.

    The global phase makes the larger of the two amplitudes real and
    positive.
    """
    r = np.asarray(r, dtype=float)
    norm = np.linalg.norm(r)
    if norm == 0:
        raise InvalidModel("The zero vector has no pure-state direction.")
    x, y, z = r / norm
    # v0^* v1 = (x - i y)/2, |v1|^2 - |v0|^2 = z
    if z >= 0:
        v1 = math.sqrt((1 + z) / 2)
        v0 = complex(x, y) / math.sqrt(2 * (1 + z))
    else:
        v0 = math.sqrt((1 - z) / 2)
        v1 = complex(x, -y) / math.sqrt(2 * (1 - z))
    psi = np.array([v0, v1], dtype=complex)
    return psi / np.linalg.norm(psi)


def bloch_ket_roundtrip(psi: PureQubitState) -> PureQubitState:
    """Return the state rebuilt from its own Bloch vector."""
    return PureQubitState.from_bloch(psi.bloch)


def shannon_entropy(weights: Sequence[float]) -> float:
    """
    Return -sum p log2 p in bits, with 0 log 0 = 0.

    Raises
    ------
    InvalidDistribution
        If any weight is negative or the weights do not sum to one.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise InvalidDistribution("Expected a non-empty 1-d weight vector.")
    if np.any(weights < -1e-12):
        raise InvalidDistribution("Weights must be non-negative.")
    if abs(weights.sum() - 1) > 1e-9:
        raise InvalidDistribution(
            f"Weights must sum to one, got {weights.sum()!r}."
        )
    positive = weights[weights > 0]
    return float(max(0.0, -np.sum(positive * np.log2(positive))))


def von_neumann_entropy(r: Sequence[float]) -> float:
    """Return S(rho) in bits for the qubit with Bloch vector r."""
    length = min(float(np.linalg.norm(r)), 1.0)
    p = (1 + length) / 2
    return shannon_entropy([p, 1 - p])


@dataclass(frozen=True)
class Eigen3:
    """
    Eigen-structure of a real 3x3 matrix.

    `eigenvalues[i]` pairs with `eigenvectors[i]`. `kinds[i]` is "real" or
    "pair". A defective repeated eigenvalue is listed twice with the same
    eigenvector and `defective` set.
    """

    eigenvalues: Tuple[complex, ...]
    eigenvectors: Tuple[np.ndarray, ...]
    kinds: Tuple[str, ...]
    defective: bool = False

    def real_eigenpairs(self) -> List[Tuple[float, np.ndarray]]:
        """Return distinct real eigenpairs, eigenvectors as real unit vectors."""
        pairs: List[Tuple[float, np.ndarray]] = []
        for value, vector, kind in zip(
            self.eigenvalues, self.eigenvectors, self.kinds
        ):
            if kind != "real":
                continue
            vector = np.real(vector)
            if any(abs(abs(np.dot(vector, v)) - 1) < 1e-10 for _, v in pairs):
                continue
            pairs.append((float(value.real), vector))
        return pairs

    def complex_pair(self) -> Optional[Tuple[complex, np.ndarray]]:
        """Return (lambda, v) with Im(lambda) > 0 for the conjugate pair."""
        for value, vector, kind in zip(
            self.eigenvalues, self.eigenvectors, self.kinds
        ):
            if kind == "pair" and value.imag > 0:
                return value, vector
        return None


def _cubic_roots(a: float, b: float, c: float) -> List[complex]:
    """Roots of x^3 + a x^2 + b x + c by Cardano's formula."""
    p = b - a * a / 3
    q = 2 * a**3 / 27 - a * b / 3 + c
    shift = -a / 3
    if abs(p) < 1e-300 and abs(q) < 1e-300:
        return [complex(shift)] * 3
    disc = np.sqrt(complex((q / 2) ** 2 + (p / 3) ** 3))
    u3 = -q / 2 + disc
    if abs(u3) < abs(-q / 2 - disc):
        u3 = -q / 2 - disc
    u = u3 ** (1 / 3)
    omega = complex(-0.5, math.sqrt(3) / 2)
    roots = []
    for k in range(3):
        uk = u * omega**k
        roots.append(uk - p / (3 * uk) + shift if uk != 0 else complex(shift))
    return roots


def eigen3(a: np.ndarray, tol: float = 1e-12) -> Eigen3:
    """
    Return eigenvalues and eigenvectors of a real 3x3 matrix.

    The characteristic cubic is solved in closed form and each root is
    polished by Newton steps on det(A - lambda I). Real roots are reported
    as real, complex roots as an exact conjugate pair.
    """
    a = np.asarray(a, dtype=float)
    trace = np.trace(a)
    minors = (
        a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
        + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    )
    det = np.linalg.det(a)
    coeffs = (-trace, minors, -det)

    def charpoly(x):
        return ((x + coeffs[0]) * x + coeffs[1]) * x + coeffs[2]

    def derivative(x):
        return (3 * x + 2 * coeffs[0]) * x + coeffs[1]

    scale = max(np.max(np.abs(a)), 1.0)
    roots = []
    for root in _cubic_roots(*coeffs):
        for _ in range(50):
            slope = derivative(root)
            if slope == 0:
                break
            step = charpoly(root) / slope
            root -= step
            if abs(step) <= tol * scale:
                break
        roots.append(root)

    real_tol = 1e-9 * scale
    kinds = []
    values: List[complex] = []
    for root in roots:
        if abs(root.imag) <= real_tol:
            values.append(complex(root.real, 0.0))
            kinds.append("real")
        else:
            values.append(root)
            kinds.append("pair")
    if kinds.count("pair") == 2:
        i, j = [k for k, kind in enumerate(kinds) if kind == "pair"]
        upper = values[i] if values[i].imag > 0 else values[j]
        values[i], values[j] = upper, upper.conjugate()
    elif kinds.count("pair") == 1:
        # An unpaired complex root can only be rounding; make it real.
        k = kinds.index("pair")
        values[k] = complex(values[k].real, 0.0)
        kinds[k] = "real"

    # Real eigenvalues first (descending), then the pair (Im > 0 first).
    order = sorted(
        range(3), key=lambda k: (kinds[k] == "pair", -values[k].real, -values[k].imag)
    )
    values = [values[k] for k in order]
    kinds = [kinds[k] for k in order]

    vectors: List[np.ndarray] = []
    defective = False
    k = 0
    while k < 3:
        value = values[k]
        repeats = [
            m for m in range(k, 3)
            if abs(values[m] - value) <= 1e-7 * scale and kinds[m] == kinds[k]
        ]
        shifted = a - value * np.eye(3)
        _, singular, vh = np.linalg.svd(shifted)
        null = vh.conj()
        nullity = int(np.sum(singular <= 1e-8 * scale))
        for offset, m in enumerate(repeats):
            if offset < max(nullity, 1):
                vector = null[2 - offset]
            else:
                vector = vectors[-1]
                defective = True
            if kinds[m] == "real":
                vector = np.real(vector)
                vector = vector / np.linalg.norm(vector)
                if vector[np.argmax(np.abs(vector))] < 0:
                    vector = -vector
            else:
                vector = vector / np.linalg.norm(vector)
            vectors.append(vector)
        k += len(repeats)

    if defective:
        logger.warning("A has a defective repeated eigenvalue.")
    if kinds.count("pair") == 2:
        vectors[2] = vectors[1].conj()
    return Eigen3(
        eigenvalues=tuple(values),
        eigenvectors=tuple(vectors),
        kinds=tuple(kinds),
        defective=defective,
    )
