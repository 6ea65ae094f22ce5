"""
Primitivas de información cuántica para un qubit de espín y el par espín-fotón.

Convenciones:
  - SpinState en la base computacional (|↑⟩ = |ẑ⟩, |↓⟩).
  - JointState en la base {|x̂⟩|E₊⟩, |x̂⟩|E₋⟩, |−x̂⟩|E₊⟩, |−x̂⟩|E₋⟩}: factor de espín
    primero y expresado en la base de estados puntero |±x̂⟩. HADAMARD pasa de una a otra.
  - ProcessMatrix: ρ → Σ χ_mn B_m ρ B_n†, con B = {I, σx, −iσy, σz} (etiqueta "pauli")
    o {(I+σx)/2, (I−σx)/2, −iσy, σz} (etiqueta "pointer").
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from ionscatter.errors import InvalidInputError, NumericalError

logger = logging.getLogger(__name__)

TOL_STATE = 1e-12
TOL_CHANNEL = 1e-9
TOL_BLOCH = 1e-9

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.array([SX, SY, SZ])

# columnas |x̂⟩ y |−x̂⟩ en la base computacional
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

BASES = {
    "pauli": np.array([I2, SX, -1j * SY, SZ]),
    "pointer": np.array([(I2 + SX) / 2, (I2 - SX) / 2, -1j * SY, SZ]),
}
BASIS_LABELS = {
    "pauli": ("I", "X", "-iY", "Z"),
    "pointer": ("E1", "E2", "-iY", "Z"),
}


def _frozen(matrix):
    arr = np.array(matrix, dtype=complex)
    arr.setflags(write=False)
    return arr


def _hermitize(matrix):
    m = np.asarray(matrix, dtype=complex)
    return (m + m.conj().T) / 2


def _check_density(rho, dim, name):
    if rho.shape != (dim, dim):
        raise InvalidInputError(f"{name}: se esperaba una matriz {dim}x{dim}, llegó {rho.shape}")
    if np.linalg.norm(rho - rho.conj().T) >= TOL_STATE:
        raise InvalidInputError(f"{name}: la matriz no es hermítica")
    if abs(np.trace(rho) - 1) > TOL_STATE:
        raise InvalidInputError(f"{name}: traza {np.trace(rho).real:.3e} distinta de 1")
    if np.linalg.eigvalsh(rho).min() < -TOL_STATE:
        raise InvalidInputError(f"{name}: la matriz no es semidefinida positiva")


@dataclass(frozen=True, eq=False)
class SpinState:
    """Matriz densidad 2x2 del espín electrónico del ion"""
    rho: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.rho)
        _check_density(rho, 2, "SpinState")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_matrix(cls, matrix):
        """Simetriza y renormaliza la traza antes de validar (salidas de canales)."""
        m = _hermitize(matrix)
        tr = np.trace(m).real
        if tr <= 0:
            raise InvalidInputError("SpinState: traza no positiva")
        return cls(m / tr)

    @classmethod
    def pure(cls, ket):
        ket = np.asarray(ket, dtype=complex)
        ket = ket / np.linalg.norm(ket)
        return cls.from_matrix(np.outer(ket, ket.conj()))


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.norm() > 1 + TOL_BLOCH:
            raise InvalidInputError(f"BlochVector: norma {self.norm():.6f} > 1")

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self):
        return float(np.linalg.norm([self.x, self.y, self.z]))

    @classmethod
    def from_array(cls, values):
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


@dataclass(frozen=True, eq=False)
class JointState:
    """Matriz densidad 4x4 espín ⊗ polarización en el orden documentado del módulo"""
    rho: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.rho)
        _check_density(rho, 4, "JointState")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_matrix(cls, matrix):
        m = _hermitize(matrix)
        tr = np.trace(m).real
        if tr <= 0:
            raise InvalidInputError("JointState: traza no positiva")
        return cls(m / tr)


@dataclass(frozen=True, eq=False)
class KrausFamily:
    """Operadores 2x2 etiquetados con el resultado de polarización del fotón"""
    operators: tuple
    labels: tuple

    def __post_init__(self):
        ops = tuple(_frozen(op) for op in self.operators)
        if len(ops) != len(self.labels):
            raise InvalidInputError("KrausFamily: número de etiquetas distinto de operadores")
        if any(op.shape != (2, 2) for op in ops):
            raise InvalidInputError("KrausFamily: los operadores deben ser 2x2")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", tuple(self.labels))

    def completeness(self):
        return sum(op.conj().T @ op for op in self.operators)

    def is_trace_preserving(self, tol=TOL_CHANNEL):
        return bool(np.linalg.norm(self.completeness() - I2) <= tol)

    def normalized(self):
        """Escala toda la familia por una única constante para que Σ K†K = I."""
        comp = self.completeness()
        scale = np.trace(comp).real / 2
        if scale <= 0:
            raise InvalidInputError("KrausFamily: familia nula")
        family = KrausFamily(tuple(op / np.sqrt(scale) for op in self.operators), self.labels)
        if not family.is_trace_preserving():
            raise InvalidInputError("KrausFamily: Σ K†K no es proporcional a la identidad")
        return family

    def operator(self, label):
        return self.operators[self.labels.index(label)]


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    """Matriz χ 4x4 con la etiqueta de base de operadores"""
    chi: np.ndarray
    basis: str = "pauli"
    outcome_probability: float = None

    def __post_init__(self):
        if self.basis not in BASES:
            raise InvalidInputError(f"ProcessMatrix: base desconocida {self.basis!r}")
        chi = _frozen(self.chi)
        if chi.shape != (4, 4):
            raise InvalidInputError("ProcessMatrix: χ debe ser 4x4")
        if np.linalg.norm(chi - chi.conj().T) > TOL_CHANNEL:
            raise InvalidInputError("ProcessMatrix: χ no es hermítica")
        object.__setattr__(self, "chi", chi)

    @property
    def operators(self):
        return BASES[self.basis]

    def trace_condition(self):
        """Σ χ_mn B_n† B_m; la identidad si el proceso conserva la traza."""
        ops = self.operators
        return np.einsum("mn,nba,mbc->ac", self.chi, ops.conj(), ops)

    def is_trace_preserving(self, tol=TOL_CHANNEL):
        return bool(np.linalg.norm(self.trace_condition() - I2) <= tol)

    def is_completely_positive(self, tol=1e-10):
        return bool(np.linalg.eigvalsh(_hermitize(self.chi)).min() >= -tol)

    def in_basis(self, basis):
        if basis == self.basis:
            return self
        # χ_pauli = Tᵀ χ_otro T*, con B_otro_p = Σ_m T_pm B_pauli_m
        to_pauli = _basis_transform(self.basis)
        chi_pauli = to_pauli.T @ self.chi @ to_pauli.conj()
        target = _basis_transform(basis)
        inv = np.linalg.inv(target)
        return ProcessMatrix(_hermitize(inv.T @ chi_pauli @ inv.conj()), basis, self.outcome_probability)

    def reporting_matrix(self):
        """χ en la base de estados puntero normalizada a traza 1 (presentación)."""
        chi = self.in_basis("pointer").chi
        return chi / np.trace(chi).real

    def to_json(self):
        data = {"basis": self.basis, "chi": matrix_to_json(self.chi)}
        if self.outcome_probability is not None:
            data["outcome_probability"] = float(self.outcome_probability)
        return data

    @classmethod
    def from_json(cls, data):
        return cls(matrix_from_json(data["chi"]), data.get("basis", "pauli"), data.get("outcome_probability"))


def _basis_transform(basis):
    """Fila p = coeficientes de B_p en {I, σx, −iσy, σz} (producto de Hilbert–Schmidt)."""
    pauli = BASES["pauli"]
    return np.einsum("mba,pba->pm", pauli.conj(), BASES[basis]) / 2


@dataclass(frozen=True, eq=False)
class AffineMap:
    """Representación de Bloch b → M b + t de un canal de un qubit"""
    M: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        t = np.array(self.t, dtype=float)
        if M.shape != (3, 3) or t.shape != (3,):
            raise InvalidInputError("AffineMap: M debe ser 3x3 y t de longitud 3")
        M.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "t", t)

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.M.T + self.t

    def maps_ball_into_ball(self, grid, tol=TOL_CHANNEL):
        return bool(np.linalg.norm(self.apply(grid), axis=-1).max() <= 1 + tol)


# --------------------------------------------------------------------------
# estados y vectores de Bloch
# --------------------------------------------------------------------------

def bloch_to_density(b):
    vec = b.as_array() if isinstance(b, BlochVector) else np.asarray(b, dtype=float)
    if np.linalg.norm(vec) > 1 + TOL_BLOCH:
        raise InvalidInputError(f"bloch_to_density: norma {np.linalg.norm(vec):.6f} > 1")
    return SpinState.from_matrix(bloch_matrices(vec))


CARDINAL_AXES = {
    "x": (1, 0, 0), "-x": (-1, 0, 0),
    "y": (0, 1, 0), "-y": (0, -1, 0),
    "z": (0, 0, 1), "-z": (0, 0, -1),
}


def cardinal_state(label):
    """Estado puro a lo largo de ±x̂, ±ŷ o ±ẑ ('x', '-x', ...)."""
    try:
        return bloch_to_density(CARDINAL_AXES[label])
    except KeyError:
        raise InvalidInputError(f"estado cardinal desconocido {label!r}") from None


def bloch_matrices(vectors):
    """(I + b·σ)/2 vectorizado sobre la primera dimensión, sin validar."""
    vectors = np.asarray(vectors, dtype=float)
    return (I2 + np.einsum("...i,ijk->...jk", vectors, PAULI)) / 2


def density_to_bloch(rho):
    return BlochVector.from_array(bloch_components(_as_matrix(rho)))


def bloch_components(matrices):
    """Tr(ρσᵢ) vectorizado; admite (...,2,2)."""
    matrices = np.asarray(matrices, dtype=complex)
    return np.einsum("...jk,ikj->...i", matrices, PAULI).real


def _as_matrix(state):
    if isinstance(state, (SpinState, JointState)):
        return state.rho
    return np.asarray(state, dtype=complex)


def purity(state):
    rho = _as_matrix(state)
    return float(np.trace(rho @ rho).real)


def psd_sqrt(matrix):
    evals, vecs = linalg.eigh(_hermitize(matrix))
    return (vecs * np.sqrt(np.clip(evals, 0.0, None))) @ vecs.conj().T


def fidelity(state, other):
    """Fidelidad de Uhlmann (Tr √(√ρ σ √ρ))²."""
    rho, sigma = _as_matrix(state), _as_matrix(other)
    root = psd_sqrt(rho)
    evals = linalg.eigvalsh(_hermitize(root @ sigma @ root))
    return float(np.sqrt(np.clip(evals, 0.0, None)).sum() ** 2)


def _clamped_eigenvalues(rho, name):
    evals = np.linalg.eigvalsh(_hermitize(rho))
    if evals.min() < -TOL_STATE:
        raise InvalidInputError(f"{name}: autovalor {evals.min():.3e} negativo más allá de tolerancia")
    return np.clip(evals, 0.0, None)


def von_neumann_entropy(state, units="nats"):
    """S(ρ) = −Tr ρ ln ρ. Autovalores ≤ 1e−12 no contribuyen."""
    evals = _clamped_eigenvalues(_as_matrix(state), "von_neumann_entropy")
    if units not in ("nats", "bits"):
        raise InvalidInputError(f"unidades de entropía desconocidas: {units!r}")
    evals = evals[evals > TOL_STATE]
    entropy = max(float(-np.sum(evals * np.log(evals))), 0.0)
    return entropy / np.log(2) if units == "bits" else entropy


SPIN_FLIP = np.kron(SY, SY)


def concurrence(state):
    """
    Concurrencia de Wootters de un estado de dos qubits.

    Las λᵢ son los valores singulares de √ρ (σy⊗σy) √ρ*, que coinciden con las raíces
    de los autovalores de ρ(σy⊗σy)ρ*(σy⊗σy) y evitan diagonalizar una matriz no hermítica.
    """
    rho = _as_matrix(state)
    if rho.shape != (4, 4):
        raise InvalidInputError("concurrence: se esperaba una matriz 4x4")
    _clamped_eigenvalues(rho, "concurrence")
    root = psd_sqrt(rho)
    lambdas = np.linalg.svd(root @ SPIN_FLIP @ root.conj(), compute_uv=False)
    return float(max(0.0, lambdas[0] - lambdas[1:].sum()))


def to_pointer_frame(spin_rho):
    """Matriz de espín de la base computacional a la base {|x̂⟩, |−x̂⟩}."""
    return HADAMARD.conj().T @ spin_rho @ HADAMARD


def from_pointer_frame(spin_rho):
    return HADAMARD @ spin_rho @ HADAMARD.conj().T


def partial_trace(state, keep="spin"):
    """
    Traza parcial de un JointState.

    keep="spin" devuelve el SpinState en la base computacional; keep="photon" devuelve la
    matriz de polarización en la base {E₊, E₋}.
    """
    rho = _as_matrix(state).reshape(2, 2, 2, 2)
    if keep == "spin":
        return SpinState.from_matrix(from_pointer_frame(np.einsum("ipjp->ij", rho)))
    if keep == "photon":
        return SpinState.from_matrix(np.einsum("sisj->ij", rho))
    raise InvalidInputError(f"partial_trace: keep debe ser 'spin' o 'photon', no {keep!r}")


def joint_from_product(spin, photon):
    """ρ_espín ⊗ ρ_fotón en la base documentada del JointState."""
    return JointState.from_matrix(np.kron(to_pointer_frame(_as_matrix(spin)), _as_matrix(photon)))


# --------------------------------------------------------------------------
# canales
# --------------------------------------------------------------------------

def apply_kraus(family, state):
    if not family.is_trace_preserving():
        raise InvalidInputError("apply_kraus: la familia no conserva la traza")
    rho = _as_matrix(state)
    out = sum(op @ rho @ op.conj().T for op in family.operators)
    return SpinState.from_matrix(out)


def apply_chi_matrix(chi, rho, basis="pauli"):
    """Σ χ_mn B_m ρ B_n† sobre matrices sueltas o lotes (...,2,2); no valida."""
    ops = BASES[basis]
    left = np.einsum("mab,...bc->...mac", ops, rho)
    return np.einsum("mn,...mac,ndc->...ad", chi, left, ops.conj())


def apply_chi(process, state):
    """Estado de salida si el proceso conserva la traza; si no, la matriz sin normalizar."""
    out = apply_chi_matrix(process.chi, _as_matrix(state), process.basis)
    if process.is_trace_preserving():
        return SpinState.from_matrix(out)
    return out


def chi_from_kraus(family):
    ops = family.operators if isinstance(family, KrausFamily) else family
    pauli = BASES["pauli"]
    coeffs = np.array([np.einsum("mba,ba->m", pauli.conj(), op) / 2 for op in ops])
    return ProcessMatrix(_hermitize(coeffs.T @ coeffs.conj()), "pauli")


def kraus_from_chi(process, tol=TOL_STATE):
    chi = process.in_basis("pauli").chi
    evals, vecs = np.linalg.eigh(_hermitize(chi))
    ops = [np.sqrt(val) * np.einsum("m,mab->ab", vecs[:, i], BASES["pauli"])
           for i, val in enumerate(evals) if val > tol]
    return KrausFamily(tuple(ops), tuple(range(len(ops))))


def _superoperator_basis(basis):
    ops = BASES[basis]
    # columna 4m+n = vec(B_m ⊗ B_n*), vectorización por filas: vec(AρB) = (A ⊗ Bᵀ) vec(ρ)
    return np.array([np.kron(ops[m], ops[n].conj()).ravel()
                     for m in range(4) for n in range(4)]).T


def superoperator_of(process):
    """Matriz 4x4 que actúa sobre vec(ρ) por filas."""
    return np.einsum("mn,mab,ncd->acbd", process.chi, process.operators,
                     process.operators.conj()).reshape(4, 4)


def chi_from_superoperator(superop, basis="pauli"):
    flat = np.linalg.solve(_superoperator_basis(basis), np.asarray(superop, dtype=complex).ravel())
    return ProcessMatrix(_hermitize(flat.reshape(4, 4)), basis)


def chi_to_affine(process):
    """Matriz de transferencia de Pauli restringida al bloque de Bloch."""
    chi, basis = process.chi, process.basis
    t = bloch_components(apply_chi_matrix(chi, I2 / 2, basis))
    columns = bloch_components(apply_chi_matrix(chi, PAULI, basis)) / 2
    return AffineMap(columns.T, t)


# --------------------------------------------------------------------------
# serialización (pares [re, im] por filas)
# --------------------------------------------------------------------------

def matrix_to_json(matrix):
    matrix = np.asarray(matrix, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in matrix]


def matrix_from_json(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise InvalidInputError("matriz JSON: se esperaban filas de pares [re, im]")
    return arr[..., 0] + 1j * arr[..., 1]


# --------------------------------------------------------------------------
# muestras aleatorias (pruebas y selftest)
# --------------------------------------------------------------------------

def random_unitary(rng, dim=2):
    return unitary_group.rvs(dim, random_state=rng)


def random_density(rng, dim=2, rank=None):
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_channel(rng, n_kraus=2):
    """Canal CPTP aleatorio a partir de una isometría de Stinespring de Haar."""
    iso = random_unitary(rng, 2 * n_kraus)[:, :2]
    ops = tuple(iso[2 * i:2 * i + 2, :] for i in range(n_kraus))
    family = KrausFamily(ops, tuple(range(n_kraus)))
    if not family.is_trace_preserving():
        raise NumericalError("random_channel: isometría no completa")
    return family
