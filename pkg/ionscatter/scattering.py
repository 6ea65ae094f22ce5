"""
Modelo de dispersión de un fotón por el ion.

Absorción σ·E_L, emisión (σ·E)† en una base de polarización local de k̂, el canal
conjunto espín-fotón, la matriz χ por dirección de emisión y su promedio sobre la
geometría de detección (apertura numérica y ventana de fase), láminas de onda con el PBS
y el modelo de ruido de fondo.

Base local de k̂(θ,φ): θ̂ = (cosθ cosφ, cosθ sinφ, −sinθ), φ̂ = (−sinφ, cosφ, 0).
Lineal: E1 = θ̂, E2 = φ̂. Circular: E± = (φ̂ ∓ iθ̂)/√2, coordenadas de Jones (1, ±i)/√2
en la base transversal (φ̂, −θ̂); para k̂ = x̂ queda E± = (ŷ ± iẑ)/√2.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ionscatter import quantum_core as qc
from ionscatter.errors import ConfigError, InvalidInputError, NumericalError, UnsupportedError

logger = logging.getLogger(__name__)

TOL_VECTOR = 1e-12
DEFAULT_NODES = 64
DEFAULT_SAMPLES = 100_000
MC_CHUNK = 1 << 16
# apertura de la geometría "ideal": un único rayo a efectos de las tolerancias 1e−12
IDEAL_NA = 1e-12

POLARIZATION_LABELS = {"circular": ("E+", "E-"), "linear": ("E1", "E2")}

# vectores E₊, E₋ en coordenadas de Jones (columnas)
CIRCULAR_JONES = np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2)
# el PBS transmite la componente horizontal (primera coordenada de Jones) por el puerto +1
PBS_PORTS = {
    1: np.diag([1.0, 0.0]).astype(complex),
    -1: np.diag([0.0, 1.0]).astype(complex),
}


def _invalid(field_name, detail):
    err = InvalidInputError(f"{field_name}: {detail}")
    err.field = field_name
    err.detail = detail
    return err


def _from_dict(cls, data, path):
    """Construye una dataclass de configuración con errores que llevan la ruta del campo."""
    if not isinstance(data, dict):
        raise ConfigError(path, "se esperaba un objeto JSON")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "clave desconocida")
    try:
        return cls(**data)
    except InvalidInputError as exc:
        field_name = getattr(exc, "field", None)
        raise ConfigError(f"{path}.{field_name}" if field_name else path,
                          getattr(exc, "detail", str(exc))) from exc


def _as_float(value, field_name):
    if isinstance(value, bool):
        raise _invalid(field_name, "se esperaba un número")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise _invalid(field_name, f"se esperaba un número, llegó {value!r}") from None


# --------------------------------------------------------------------------
# tipos
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PolarizationVector:
    """Vector de polarización complejo unitario, transversal a `direction` si se da"""
    vector: np.ndarray
    direction: np.ndarray = None

    def __post_init__(self):
        vec = np.array(self.vector, dtype=complex)
        if vec.shape != (3,):
            raise InvalidInputError("PolarizationVector: se esperaban 3 componentes")
        if abs(np.vdot(vec, vec).real - 1) > TOL_VECTOR:
            raise InvalidInputError("PolarizationVector: E·E* distinto de 1")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        if self.direction is not None:
            k = _unit(self.direction, "PolarizationVector.direction")
            if abs(np.dot(vec, k)) > TOL_VECTOR:
                raise InvalidInputError("PolarizationVector: E no es transversal a k̂")
            k.setflags(write=False)
            object.__setattr__(self, "direction", k)

    @property
    def is_real(self):
        return bool(np.abs(self.vector.imag).max() <= TOL_VECTOR)

    @classmethod
    def along(cls, axis):
        """Polarización lineal a lo largo de un eje cartesiano 'x', 'y' o 'z'."""
        try:
            index = "xyz".index(axis)
        except ValueError:
            raise InvalidInputError(f"eje desconocido {axis!r}") from None
        return cls(np.eye(3)[index])


LASER_Z = PolarizationVector((0.0, 0.0, 1.0))


@dataclass(frozen=True)
class ScatteringGeometry:
    detector_direction: tuple = (1.0, 0.0, 0.0)
    numerical_aperture: float = 0.31
    phase_center: float = 0.0
    phase_halfwidth: float = math.pi / 32
    # informativa: la precesión sólo entra como ventana de promedio en φ
    larmor_frequency: float = 2 * math.pi * 3.5e6

    def __post_init__(self):
        try:
            vec = np.asarray(self.detector_direction, dtype=float)
        except (TypeError, ValueError):
            raise _invalid("detector_direction", "se esperaban 3 números") from None
        if vec.shape != (3,) or abs(np.linalg.norm(vec) - 1) > 1e-9:
            raise _invalid("detector_direction", "se esperaba un vector unitario de 3 componentes")
        object.__setattr__(self, "detector_direction", tuple(float(v) for v in vec))
        for name in ("numerical_aperture", "phase_center", "phase_halfwidth", "larmor_frequency"):
            object.__setattr__(self, name, _as_float(getattr(self, name), name))
        if not 0 < self.numerical_aperture < 1:
            raise _invalid("numerical_aperture", "debe estar en (0, 1)")
        if not 0 <= self.phase_halfwidth <= math.pi:
            raise _invalid("phase_halfwidth", "debe estar en [0, π]")

    @classmethod
    def ideal(cls, detector_direction=(1.0, 0.0, 0.0), phase_center=0.0):
        """Un único rayo de emisión a lo largo del detector y sin ventana de fase."""
        return cls(detector_direction, IDEAL_NA, phase_center, 0.0)

    @classmethod
    def from_dict(cls, data, path="geometry"):
        return _from_dict(cls, data, path)

    def to_dict(self):
        data = asdict(self)
        data["detector_direction"] = list(self.detector_direction)
        return data

    @property
    def window_deg(self):
        return math.degrees(2 * self.phase_halfwidth)

    def with_window_deg(self, width_deg):
        if not 0 <= width_deg <= 360:
            raise _invalid("window_deg", "el ancho de ventana debe estar en [0°, 360°]")
        return replace(self, phase_halfwidth=math.radians(width_deg) / 2)


@dataclass(frozen=True)
class NoiseModel:
    background_fraction: float = 0.125
    detection_efficiency: float = 1 / 400
    scatter_probability: float = 0.075

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _as_float(getattr(self, f.name), f.name))
        if not 0 <= self.background_fraction < 1:
            raise _invalid("background_fraction", "debe estar en [0, 1)")
        if not 0 < self.detection_efficiency <= 1:
            raise _invalid("detection_efficiency", "debe estar en (0, 1]")
        if not 0 <= self.scatter_probability <= 1:
            raise _invalid("scatter_probability", "debe estar en [0, 1]")

    @classmethod
    def none(cls):
        return cls(background_fraction=0.0)

    @classmethod
    def from_dict(cls, data, path="noise"):
        return _from_dict(cls, data, path)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class WavePlateSetting:
    kind: str
    angle: float

    def __post_init__(self):
        if self.kind not in ("quarter", "half"):
            raise InvalidInputError(f"WavePlateSetting: tipo {self.kind!r}, se esperaba 'quarter' o 'half'")
        object.__setattr__(self, "angle", float(self.angle) % math.pi)


@dataclass(frozen=True)
class AnalyzerSetting:
    """λ/4 seguida de λ/2 y el PBS; ángulos del eje rápido en radianes"""
    qwp: float = math.pi / 4
    hwp: float = 0.0

    @property
    def plates(self):
        return WavePlateSetting("quarter", self.qwp), WavePlateSetting("half", self.hwp)

    @classmethod
    def for_axis(cls, axis):
        try:
            return PHOTON_AXIS_ANALYZERS[axis]
        except KeyError:
            raise InvalidInputError(f"eje de analizador desconocido {axis!r}") from None


# σx, σy, σz del fotón en la base {E₊, E₋}; puerto +1 ↔ autovalor +1
PHOTON_AXIS_ANALYZERS = {
    "x": AnalyzerSetting(0.0, 0.0),
    "y": AnalyzerSetting(math.pi / 4, math.pi / 8),
    "z": AnalyzerSetting(math.pi / 4, 0.0),
}


# --------------------------------------------------------------------------
# direcciones y bases de polarización
# --------------------------------------------------------------------------

def _unit(vector, name):
    vec = np.array(vector, dtype=float)
    if vec.shape != (3,):
        raise InvalidInputError(f"{name}: se esperaban 3 componentes")
    norm = np.linalg.norm(vec)
    if norm < TOL_VECTOR:
        raise InvalidInputError(f"{name}: vector nulo")
    return vec / norm


def direction(theta, phi):
    theta, phi = np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


def direction_angles(k):
    """(θ, φ) de una dirección; φ en [0, 2π)."""
    k = _unit(k, "k")
    return float(np.arccos(np.clip(k[2], -1.0, 1.0))), float(np.arctan2(k[1], k[0]) % (2 * np.pi))


def local_frame(theta, phi):
    theta, phi = np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    theta_hat = np.stack([ct * cp, ct * sp, -st], axis=-1)
    phi_hat = np.stack([-sp, cp, np.zeros_like(cp)], axis=-1)
    return theta_hat, phi_hat


def polarization_basis(theta, phi, basis="circular"):
    theta_hat, phi_hat = local_frame(theta, phi)
    if basis == "circular":
        return (phi_hat - 1j * theta_hat) / np.sqrt(2), (phi_hat + 1j * theta_hat) / np.sqrt(2)
    if basis == "linear":
        return theta_hat.astype(complex), phi_hat.astype(complex)
    raise InvalidInputError(f"base de polarización desconocida {basis!r}")


def sigma_dot(vectors):
    return np.einsum("...i,ijk->...jk", np.asarray(vectors, dtype=complex), qc.PAULI)


# --------------------------------------------------------------------------
# operadores de absorción y emisión
# --------------------------------------------------------------------------

def emission_kraus(k, basis="circular"):
    """Operadores (σ·Eᵢ)†/√2 para el par de polarizaciones transversal a k̂."""
    theta, phi = direction_angles(k)
    pair = polarization_basis(theta, phi, basis)
    ops = tuple(sigma_dot(e.conj()) / np.sqrt(2) for e in pair)
    return qc.KrausFamily(ops, POLARIZATION_LABELS[basis]).normalized()


def absorption_operator(laser):
    vec = laser.vector if isinstance(laser, PolarizationVector) else np.asarray(laser, dtype=complex)
    if np.abs(vec.imag).max() > TOL_VECTOR:
        raise UnsupportedError("absorption_operator: sólo se modela excitación con polarización lineal")
    return sigma_dot(_unit(vec.real, "E_L"))


def scattering_kraus(k, laser=LASER_Z, basis="circular"):
    absorb = absorption_operator(laser)
    emit = emission_kraus(k, basis)
    return qc.KrausFamily(tuple(op @ absorb for op in emit.operators), emit.labels).normalized()


def _kraus_stack(theta, phi, absorb, basis="circular"):
    """(..., resultado, 2, 2); Σ K†K = I exacto para E_L real unitario."""
    e_a, e_b = polarization_basis(theta, phi, basis)
    emit = np.stack([sigma_dot(e_a.conj()), sigma_dot(e_b.conj())], axis=-3) / np.sqrt(2)
    return emit @ absorb


def _isometry_stack(kraus):
    # fila (s, i): espín de salida en la base puntero, i el resultado de polarización
    iso = np.einsum("sa,...iab->...sib", qc.HADAMARD.conj().T, kraus)
    return iso.reshape(kraus.shape[:-3] + (4, 2))


def joint_isometry(k, laser=LASER_Z):
    """V = Σᵢ Kᵢ ⊗ |Eᵢ⟩ (4x2): espín computacional → par espín-fotón en la base documentada."""
    family = scattering_kraus(k, laser, "circular")
    return _isometry_stack(np.array(family.operators))


def scatter_joint_state(state, k, laser=LASER_Z):
    iso = joint_isometry(k, laser)
    rho = qc._as_matrix(state)
    return qc.JointState.from_matrix(iso @ rho @ iso.conj().T)


# --------------------------------------------------------------------------
# matriz χ por dirección y promedios sobre la geometría
# --------------------------------------------------------------------------

def _chi_closed_form(theta, phi):
    """χ(θ,φ) en {I, σx, −iσy, σz} para E_L = ẑ, vectorizada sobre θ y φ."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    ct2, st2 = np.cos(theta) ** 2, np.sin(theta) ** 2
    cp2, sp2 = np.cos(phi) ** 2, np.sin(phi) ** 2
    s2t, s2p = np.sin(2 * theta), np.sin(2 * phi)
    a = 2 * st2
    b = 1j * s2t * np.sin(phi)
    c = -s2t * np.cos(phi)
    d = 2 * cp2 + 2 * ct2 * sp2
    e = 1j * (s2p * ct2 - s2p)
    f = 2 * cp2 * ct2 + 2 * sp2
    chi = np.zeros(theta.shape + (4, 4), dtype=complex)
    chi[..., 0, 0], chi[..., 0, 1], chi[..., 0, 2] = a, b, c
    chi[..., 1, 0], chi[..., 1, 1], chi[..., 1, 2] = np.conj(b), d, e
    chi[..., 2, 0], chi[..., 2, 1], chi[..., 2, 2] = c, np.conj(e), f
    return chi / 4


def chi_single_direction(theta, phi):
    if not -TOL_VECTOR <= theta <= math.pi + TOL_VECTOR:
        raise InvalidInputError(f"chi_single_direction: θ={theta} fuera de [0, π]")
    return qc.ProcessMatrix(_chi_closed_form(theta, float(phi) % (2 * math.pi)), "pauli")


def averaging_window(geometry, theta_limits="band"):
    """Intervalos ((θ_min, θ_max), (φ_min, φ_max)) de las direcciones colectadas."""
    theta_d, phi_d = direction_angles(geometry.detector_direction)
    half = math.asin(geometry.numerical_aperture)
    if theta_limits == "band":
        theta = (theta_d - half, theta_d + half)
    elif theta_limits == "literal":
        theta_max = theta_d + half
        theta = (-theta_max, theta_max)
    else:
        raise InvalidInputError(f"theta_limits desconocido {theta_limits!r}, se esperaba 'band' o 'literal'")
    center = phi_d + geometry.phase_center
    return theta, (center - geometry.phase_halfwidth, center + geometry.phase_halfwidth)


def _weights(theta, solid_angle):
    return np.abs(np.sin(theta)) if solid_angle else np.ones_like(theta)


def quadrature_nodes(geometry, nodes=DEFAULT_NODES, theta_limits="band", solid_angle=False):
    """Regla del punto medio en producto tensorial; pesos normalizados a suma 1."""
    if int(nodes) < 1:
        raise InvalidInputError(f"nodes={nodes}: se necesita al menos un nodo por eje")
    (t0, t1), (p0, p1) = averaging_window(geometry, theta_limits)
    frac = (np.arange(int(nodes)) + 0.5) / int(nodes)
    tt, pp = np.meshgrid(t0 + (t1 - t0) * frac, p0 + (p1 - p0) * frac, indexing="ij")
    weights = _weights(tt, solid_angle)
    if weights.sum() <= 0:
        raise NumericalError("quadrature_nodes: pesos nulos en toda la ventana")
    return tt.ravel(), pp.ravel(), weights.ravel() / weights.sum()


def _quadrature_average(integrand, geometry, nodes, theta_limits, solid_angle):
    theta, phi, weights = quadrature_nodes(geometry, nodes, theta_limits, solid_angle)
    logger.debug("Cuadratura: %d nodos, θ∈[%.4f, %.4f]", theta.size, theta.min(), theta.max())
    values = integrand(theta, phi)
    return np.tensordot(weights, values, axes=1)


def _monte_carlo_chunk(seed_seq, size, window, solid_angle, integrand):
    (t0, t1), (p0, p1) = window
    rng = np.random.default_rng(seed_seq)
    theta = rng.uniform(t0, t1, size)
    phi = rng.uniform(p0, p1, size)
    w = _weights(theta, solid_angle)
    values = integrand(theta, phi).reshape(size, -1)
    w2 = w ** 2
    return np.array([
        w.sum() + 0j,
        w2.sum() + 0j,
        *(w @ values),
        *(w2 @ values.real + 1j * (w2 @ values.imag)),
        *(w2 @ values.real ** 2 + 1j * (w2 @ values.imag ** 2)),
    ])


def _monte_carlo_average(integrand, geometry, samples, seed, theta_limits, solid_angle, workers):
    """
    Media ponderada y error estándar por elemento.

    Las muestras se dividen en fragmentos de MC_CHUNK con semillas hijas de
    SeedSequence(seed); el resultado no depende de `workers`.
    """
    samples = int(samples)
    if samples < 1:
        raise InvalidInputError(f"samples={samples}: se necesita al menos una muestra")
    window = averaging_window(geometry, theta_limits)
    shape = integrand(np.zeros(1), np.zeros(1)).shape[1:]
    sizes = [MC_CHUNK] * (samples // MC_CHUNK)
    if samples % MC_CHUNK:
        sizes.append(samples % MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    logger.debug("Monte-Carlo: %d muestras en %d fragmentos (workers=%d)", samples, len(sizes), workers)

    def run(args):
        child, size = args
        return _monte_carlo_chunk(child, size, window, solid_angle, integrand)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(run, zip(children, sizes)))
    else:
        partial = [run(item) for item in zip(children, sizes)]
    totals = np.sum(partial, axis=0)

    n = int(np.prod(shape))
    w_sum, w2_sum = totals[0].real, totals[1].real
    first, w2_first, w2_second = totals[2:2 + n], totals[2 + n:2 + 2 * n], totals[2 + 2 * n:]
    if w_sum <= 0:
        raise NumericalError("monte_carlo: pesos nulos en toda la ventana")
    mean = first / w_sum

    def variance(m, s1, s2):
        return np.clip(s2 - 2 * m * s1 + m ** 2 * w2_sum, 0.0, None) / w_sum ** 2

    var = variance(mean.real, w2_first.real, w2_second.real) + variance(mean.imag, w2_first.imag, w2_second.imag)
    return mean.reshape(shape), np.sqrt(var).reshape(shape)


def _normalized_process(chi):
    chi = qc._hermitize(chi)
    process = qc.ProcessMatrix(chi / np.trace(chi).real, "pauli")
    if not process.is_trace_preserving():
        raise NumericalError("chi promediada: el proceso no conserva la traza")
    return process


def chi_averaged(geometry, method="quadrature", nodes=DEFAULT_NODES, samples=DEFAULT_SAMPLES, seed=0,
                 theta_limits="band", solid_angle=False, workers=1):
    """
    Promedio de χ(θ', φ') sobre las direcciones colectadas.

    La medida es uniforme en (θ', φ'); `solid_angle=True` añade el peso |sin θ'|.
    """
    if method == "quadrature":
        chi = _quadrature_average(_chi_closed_form, geometry, nodes, theta_limits, solid_angle)
    elif method == "monte-carlo":
        chi, _ = _monte_carlo_average(_chi_closed_form, geometry, samples, seed, theta_limits,
                                      solid_angle, workers)
    else:
        raise InvalidInputError(f"método de promedio desconocido {method!r}")
    return _normalized_process(chi)


def monte_carlo_chi(geometry, samples=DEFAULT_SAMPLES, seed=0, theta_limits="band", solid_angle=False,
                    workers=1):
    """(ProcessMatrix, error estándar 4x4) del promedio Monte-Carlo."""
    chi, stderr = _monte_carlo_average(_chi_closed_form, geometry, samples, seed, theta_limits,
                                       solid_angle, workers)
    return _normalized_process(chi), stderr


# --------------------------------------------------------------------------
# canal conjunto promediado
# --------------------------------------------------------------------------

def _doc_basis_inputs():
    # matrices unidad E_bd en el orden de vec por filas
    return np.eye(4, dtype=complex).reshape(4, 2, 2)


@dataclass(frozen=True, eq=False)
class JointMap:
    """Canal espín → par espín-fotón como matriz 16x4 sobre vec(ρ) por filas"""
    superop: np.ndarray

    def __post_init__(self):
        superop = qc._frozen(self.superop)
        if superop.shape != (16, 4):
            raise InvalidInputError("JointMap: se esperaba una matriz 16x4")
        object.__setattr__(self, "superop", superop)

    def apply_matrix(self, rho):
        rho = np.asarray(rho, dtype=complex)
        out = np.einsum("ij,...j->...i", self.superop, rho.reshape(rho.shape[:-2] + (4,)))
        return out.reshape(rho.shape[:-2] + (4, 4))

    def apply(self, state):
        return qc.JointState.from_matrix(self.apply_matrix(qc._as_matrix(state)))

    def _spin_outputs(self, outcome=None):
        outs = self.apply_matrix(_doc_basis_inputs()).reshape(4, 2, 2, 2, 2)
        if outcome is None:
            spin = np.einsum("kipjp->kij", outs)
        else:
            index = POLARIZATION_LABELS["circular"].index(outcome)
            spin = outs[:, :, index, :, index]
        return qc.HADAMARD @ spin @ qc.HADAMARD.conj().T

    def spin_process(self):
        """χ del canal reducido sobre el espín."""
        superop = self._spin_outputs().reshape(4, 4).T
        return qc.chi_from_superoperator(superop)

    def conditional_spin_process(self, outcome):
        """Λ_E(ρ) = ⟨E|ρ_conjunto|E⟩ como χ sin normalizar; lleva p_E = Tr Λ_E(I/2)."""
        if outcome not in POLARIZATION_LABELS["circular"]:
            raise InvalidInputError(f"resultado de polarización desconocido {outcome!r}")
        superop = self._spin_outputs(outcome).reshape(4, 4).T
        process = qc.chi_from_superoperator(superop)
        prob = float(np.trace(qc.apply_chi_matrix(process.chi, qc.I2 / 2)).real)
        return qc.ProcessMatrix(process.chi, "pauli", prob)


def _joint_superop_integrand(absorb):
    def integrand(theta, phi):
        iso = _isometry_stack(_kraus_stack(theta, phi, absorb))
        return np.einsum("nab,ncd->nacbd", iso, iso.conj()).reshape(-1, 16, 4)
    return integrand


def averaged_joint_map(geometry, laser=LASER_Z, method="quadrature", nodes=DEFAULT_NODES,
                       samples=DEFAULT_SAMPLES, seed=0, theta_limits="band", solid_angle=False, workers=1):
    """
    Promedio de V ⊗ V* sobre las direcciones de `chi_averaged`.

    Cada rayo conserva su base circular local al llegar al analizador.
    """
    integrand = _joint_superop_integrand(absorption_operator(laser))
    if method == "quadrature":
        superop = _quadrature_average(integrand, geometry, nodes, theta_limits, solid_angle)
    elif method == "monte-carlo":
        superop, _ = _monte_carlo_average(integrand, geometry, samples, seed, theta_limits, solid_angle, workers)
    else:
        raise InvalidInputError(f"método de promedio desconocido {method!r}")
    return JointMap(superop)


def reduced_spin_after_scatter(state, geometry=None, **averaging):
    geometry = geometry or ScatteringGeometry.ideal()
    joint = averaged_joint_map(geometry, **averaging).apply(state)
    return qc.partial_trace(joint, keep="spin")


# --------------------------------------------------------------------------
# ruido de fondo
# --------------------------------------------------------------------------

def background_level(noise):
    """Fracción de fondo de un NoiseModel o de un número en [0, 1]."""
    if isinstance(noise, NoiseModel):
        return noise.background_fraction
    if noise is None:
        return 0.0
    p = float(noise)
    if not 0 <= p <= 1:
        raise InvalidInputError(f"fracción de fondo {p} fuera de [0, 1]")
    return p


def background_matrix(rho, p):
    """(1−p)ρ + p·Tr_fotón(ρ) ⊗ I/2 sobre matrices 4x4 o lotes, sin validar."""
    rho = np.asarray(rho, dtype=complex)
    spin = np.einsum("...ipjp->...ij", rho.reshape(rho.shape[:-2] + (2, 2, 2, 2)))
    mixed = np.einsum("...ij,kl->...ikjl", spin, qc.I2 / 2).reshape(rho.shape)
    return (1 - p) * rho + p * mixed


def apply_background(state, noise):
    return qc.JointState.from_matrix(background_matrix(qc._as_matrix(state), background_level(noise)))


def scattered_joint_states(states, joint_map, noise=None):
    """Estados conjuntos con fondo para un lote de matrices de espín (...,2,2)."""
    return background_matrix(joint_map.apply_matrix(states), background_level(noise))


# --------------------------------------------------------------------------
# láminas de onda, PBS y probabilidad de detección
# --------------------------------------------------------------------------

def wave_plate_jones(setting):
    c, s = math.cos(setting.angle), math.sin(setting.angle)
    if setting.kind == "quarter":
        return np.exp(-1j * math.pi / 4) * np.array(
            [[c * c + 1j * s * s, (1 - 1j) * s * c], [(1 - 1j) * s * c, s * s + 1j * c * c]])
    return np.exp(-1j * math.pi / 2) * np.array([[c * c - s * s, 2 * c * s], [2 * c * s, s * s - c * c]])


def analyzer_povm(qwp, hwp, port):
    """Proyector del puerto `port` (±1) en la base {E₊, E₋} del fotón."""
    if qwp.kind != "quarter" or hwp.kind != "half":
        raise InvalidInputError("analyzer_povm: se esperaba una lámina λ/4 y una λ/2")
    if port not in PBS_PORTS:
        raise InvalidInputError(f"puerto {port!r}: debe ser +1 o −1")
    jones = wave_plate_jones(hwp) @ wave_plate_jones(qwp) @ CIRCULAR_JONES
    return jones.conj().T @ PBS_PORTS[port] @ jones


def analyzer_projector(analyzer, port):
    return analyzer_povm(*analyzer.plates, port)


def analyzer_observable(analyzer):
    return analyzer_projector(analyzer, 1) - analyzer_projector(analyzer, -1)


def detection_probability(state, analyzer, port=1):
    """Tr[ρ (I ⊗ Π_port)]; admite lotes de matrices 4x4."""
    rho = qc._as_matrix(state)
    projector = np.kron(qc.I2, analyzer_projector(analyzer, port))
    p = np.einsum("...ij,ji->...", rho, projector).real
    return np.clip(p, 0.0, 1.0) if np.ndim(p) else float(np.clip(p, 0.0, 1.0))
