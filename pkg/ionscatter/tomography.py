"""
Tomografía simulada: cuentas con ruido de proyección y reconstrucción de estados de 1 y
2 qubits y del proceso de un qubit, con proyección a estados y procesos físicos.

Los datos de entrada de las reconstrucciones pueden ser listas de CountRecord o un dict
ajuste → frecuencias (f₊, f₋) como el que devuelve `exact_frequencies` (régimen sin ruido).
En ajustes con post-selección en un puerto del PBS las frecuencias son sobre el total de
repeticiones, así que f₊ + f₋ es la probabilidad estimada del puerto.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ionscatter import io
from ionscatter import quantum_core as qc
from ionscatter.errors import InsufficientDataError, InvalidInputError, NumericalError
from ionscatter.scattering import PHOTON_AXIS_ANALYZERS, AnalyzerSetting, JointMap, analyzer_observable, \
    analyzer_projector

logger = logging.getLogger(__name__)

SPIN_AXES = ("x", "y", "z")
DEFAULT_SHOTS = 900
DEFAULT_INPUT_LABELS = ("z", "-z", "x", "y")
CARDINAL_LABELS = ("x", "-x", "y", "-y", "z", "-z")
MAX_INPUT_CONDITION = 1e6
# el analizador "z" separa E₊ (puerto +1) de E₋ (puerto −1)
CONDITIONING_ANALYZER = PHOTON_AXIS_ANALYZERS["z"]
OUTCOME_PORTS = {"E+": 1, "E-": -1}

# Pauli del espín en la base puntero {|x̂⟩, |−x̂⟩} de JointState: H σ H
_SPIN_PAULI_POINTER = {axis: qc.HADAMARD @ qc.PAULI[i] @ qc.HADAMARD for i, axis in enumerate(SPIN_AXES)}
_SPIN_PAULI = {axis: qc.PAULI[i] for i, axis in enumerate(SPIN_AXES)}


@dataclass(frozen=True)
class MeasurementSetting:
    spin_axis: str = None
    photon_analyzer: AnalyzerSetting = None
    # post-selección en un puerto del PBS (requiere analizador y eje de espín)
    port: int = None

    def __post_init__(self):
        if self.spin_axis is None and self.photon_analyzer is None:
            raise InvalidInputError("MeasurementSetting: no hay ningún observable")
        if self.spin_axis is not None and self.spin_axis not in SPIN_AXES:
            raise InvalidInputError(f"MeasurementSetting: eje de espín desconocido {self.spin_axis!r}")
        if self.port is not None:
            if self.port not in (1, -1):
                raise InvalidInputError(f"MeasurementSetting: puerto {self.port!r}, debe ser +1 o −1")
            if self.photon_analyzer is None or self.spin_axis is None:
                raise InvalidInputError("MeasurementSetting: la post-selección necesita analizador y eje de espín")

    @property
    def photon_label(self):
        if self.photon_analyzer is None:
            return "I"
        for axis, analyzer in PHOTON_AXIS_ANALYZERS.items():
            if analyzer == self.photon_analyzer:
                return axis
        return f"q{math.degrees(self.photon_analyzer.qwp):.4f}h{math.degrees(self.photon_analyzer.hwp):.4f}"

    @property
    def setting_id(self):
        label = f"{self.spin_axis or 'I'}-{self.photon_label}"
        return label if self.port is None else f"{label}@{self.port:+d}"

    def projectors(self, dim):
        """(P₊, P₋) sobre un espacio de dimensión 2 (espín) o 4 (par espín-fotón)."""
        if dim == 2:
            if self.photon_analyzer is not None:
                raise InvalidInputError(f"{self.setting_id}: un estado de espín no admite analizador de fotón")
            obs = _SPIN_PAULI[self.spin_axis]
            return (qc.I2 + obs) / 2, (qc.I2 - obs) / 2
        if dim != 4:
            raise InvalidInputError(f"dimensión {dim} no soportada")
        spin = _SPIN_PAULI_POINTER[self.spin_axis] if self.spin_axis else qc.I2
        if self.port is not None:
            photon = analyzer_projector(self.photon_analyzer, self.port)
            return np.kron((qc.I2 + spin) / 2, photon), np.kron((qc.I2 - spin) / 2, photon)
        photon = analyzer_observable(self.photon_analyzer) if self.photon_analyzer else qc.I2
        obs = np.kron(spin, photon)
        eye = np.eye(4, dtype=complex)
        return (eye + obs) / 2, (eye - obs) / 2


@dataclass(frozen=True)
class CountRecord:
    setting: MeasurementSetting
    n_plus: int
    n_minus: int
    shots: int
    seed: int

    def __post_init__(self):
        if min(self.n_plus, self.n_minus) < 0 or self.shots < 1:
            raise InvalidInputError("CountRecord: cuentas negativas o sin repeticiones")
        events = self.n_plus + self.n_minus
        if self.setting.port is None and events != self.shots:
            raise InvalidInputError("CountRecord: n_plus + n_minus distinto de N")
        if events > self.shots:
            raise InvalidInputError("CountRecord: más eventos que repeticiones")

    @property
    def frequencies(self):
        return self.n_plus / self.shots, self.n_minus / self.shots


@dataclass(frozen=True, eq=False)
class TomographyInputSet:
    """Cuatro estados de entrada linealmente independientes"""
    states: tuple
    labels: tuple = None

    def __post_init__(self):
        states = tuple(s if isinstance(s, qc.SpinState) else qc.SpinState.from_matrix(s) for s in self.states)
        if len(states) != 4:
            raise InvalidInputError(f"TomographyInputSet: se esperaban 4 estados, llegaron {len(states)}")
        labels = tuple(self.labels) if self.labels is not None else tuple(str(i) for i in range(4))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "labels", labels)
        gram = self.matrix().conj().T @ self.matrix()
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond >= MAX_INPUT_CONDITION:
            raise InvalidInputError(f"TomographyInputSet: estados linealmente dependientes (cond={cond:.3e})")

    @classmethod
    def default(cls):
        return cls(tuple(qc.cardinal_state(label) for label in DEFAULT_INPUT_LABELS), DEFAULT_INPUT_LABELS)

    def matrix(self):
        """Columnas vec(ρ_k) por filas."""
        return np.array([s.rho.ravel() for s in self.states]).T


def _as_inputs(inputs):
    if inputs is None:
        return TomographyInputSet.default()
    return inputs if isinstance(inputs, TomographyInputSet) else TomographyInputSet(tuple(inputs))


# --------------------------------------------------------------------------
# simulación de cuentas
# --------------------------------------------------------------------------

def outcome_probabilities(state, setting):
    rho = qc._as_matrix(state)
    p_plus, p_minus = (float(np.clip(np.trace(rho @ proj).real, 0.0, 1.0)) for proj in setting.projectors(rho.shape[0]))
    return p_plus, p_minus


def simulate_counts(state, setting, shots, seed):
    """Cuentas binomiales (multinomiales con post-selección) para N repeticiones."""
    if seed is None:
        raise InvalidInputError("simulate_counts: seed obligatoria")
    shots = int(shots)
    if shots < 1:
        raise InvalidInputError(f"simulate_counts: N={shots}, se necesita N ≥ 1")
    rng = np.random.default_rng(seed)
    p_plus, p_minus = outcome_probabilities(state, setting)
    if setting.port is None:
        n_plus = int(rng.binomial(shots, p_plus / (p_plus + p_minus)))
        return CountRecord(setting, n_plus, shots - n_plus, shots, int(seed))
    p_none = max(0.0, 1.0 - p_plus - p_minus)
    total = p_plus + p_minus + p_none
    n_plus, n_minus, _ = rng.multinomial(shots, [p_plus / total, p_minus / total, p_none / total])
    return CountRecord(setting, int(n_plus), int(n_minus), shots, int(seed))


def exact_frequencies(state, settings):
    return {setting: outcome_probabilities(state, setting) for setting in settings}


def exact_expectations(state, settings):
    """⟨O⟩ exacto por ajuste (f₊ − f₋)."""
    return {s: plus - minus for s, (plus, minus) in exact_frequencies(state, settings).items()}


def _frequencies(data):
    if isinstance(data, dict):
        out = {}
        for setting, value in data.items():
            if np.ndim(value) == 0:
                value = ((1 + float(value)) / 2, (1 - float(value)) / 2)
            out[setting] = tuple(float(v) for v in value)
        return out
    freqs = {}
    for record in data:
        if record.setting in freqs:
            raise InvalidInputError(f"ajuste repetido {record.setting.setting_id}")
        freqs[record.setting] = record.frequencies
    return freqs


def state_settings():
    return [MeasurementSetting(axis) for axis in SPIN_AXES]


def two_qubit_settings():
    """Los 15 ajustes {I,x,y,z}⊗{I,x,y,z} sin el trivial I⊗I."""
    spins = (None,) + SPIN_AXES
    photons = (None,) + tuple(PHOTON_AXIS_ANALYZERS[a] for a in SPIN_AXES)
    return [MeasurementSetting(s, p) for s in spins for p in photons if s is not None or p is not None]


def conditional_settings(outcome):
    port = _port_of(outcome)
    return [MeasurementSetting(axis, CONDITIONING_ANALYZER, port) for axis in SPIN_AXES]


def process_settings(conditional=False):
    """Las 3 medidas de espín; con `conditional` también las post-seleccionadas en E₊ y E₋."""
    settings = state_settings()
    if conditional:
        for outcome in OUTCOME_PORTS:
            settings.extend(conditional_settings(outcome))
    return settings


def _port_of(outcome):
    try:
        return OUTCOME_PORTS[outcome]
    except KeyError:
        raise InvalidInputError(f"resultado de polarización desconocido {outcome!r}") from None


def _channel_outputs(channel, inputs):
    rhos = np.array([s.rho for s in inputs.states])
    if isinstance(channel, qc.ProcessMatrix):
        return qc.apply_chi_matrix(channel.chi, rhos, channel.basis)
    if isinstance(channel, qc.KrausFamily):
        return np.array([qc.apply_kraus(channel, s).rho for s in inputs.states])
    if isinstance(channel, JointMap):
        return channel.apply_matrix(rhos)
    return np.array([qc._as_matrix(channel(s)) for s in inputs.states])


def child_seeds(seed, n):
    """Semillas enteras independientes derivadas de SeedSequence(seed)."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]


def simulate_process_counts(channel, inputs=None, shots=DEFAULT_SHOTS, seed=0, settings=None, workers=1):
    """
    Cuentas de la QPT: para cada entrada, un CountRecord por ajuste.

    `channel` puede ser ProcessMatrix, KrausFamily, JointMap o una función estado → matriz.
    Cada (entrada, ajuste) recibe una semilla hija de SeedSequence(seed).
    """
    inputs = _as_inputs(inputs)
    settings = settings or process_settings()
    outputs = _channel_outputs(channel, inputs)
    seeds = child_seeds(seed, len(outputs) * len(settings))
    jobs = [(out, setting, seeds[i * len(settings) + j])
            for i, out in enumerate(outputs) for j, setting in enumerate(settings)]

    def run(job):
        out, setting, child_seed = job
        return simulate_counts(out, setting, shots, child_seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(job) for job in jobs]
    logger.debug("QPT simulada: %d entradas × %d ajustes, N=%d", len(outputs), len(settings), shots)
    return {label: records[i * len(settings):(i + 1) * len(settings)] for i, label in enumerate(inputs.labels)}


def exact_process_data(channel, inputs=None, settings=None):
    inputs = _as_inputs(inputs)
    settings = settings or process_settings()
    outputs = _channel_outputs(channel, inputs)
    return {label: exact_frequencies(out, settings) for label, out in zip(inputs.labels, outputs)}


# --------------------------------------------------------------------------
# proyecciones físicas
# --------------------------------------------------------------------------

def project_psd(matrix):
    """Trunca autovalores negativos y renormaliza la traza."""
    evals, vecs = np.linalg.eigh(qc._hermitize(matrix))
    if evals.min() < -1e-3:
        logger.warning("Proyección PSD: autovalor %.4f truncado", evals.min())
    clipped = np.clip(evals, 0.0, None)
    if clipped.sum() <= 0:
        raise NumericalError("project_psd: todos los autovalores son no positivos")
    return (vecs * (clipped / clipped.sum())) @ vecs.conj().T


def _inverse_sqrt(matrix):
    evals, vecs = np.linalg.eigh(qc._hermitize(matrix))
    if evals.min() <= qc.TOL_STATE:
        raise NumericalError("project_cp: Σ K†K singular, no se puede renormalizar la traza")
    return (vecs / np.sqrt(evals)) @ vecs.conj().T


def project_cp(process, trace_preserving=True):
    """
    χ con autovalores negativos truncados; con `trace_preserving` se renormaliza
    K → K T^{-1/2}, T = Σ K†K, para que Σ K†K = I.
    """
    chi = process.in_basis("pauli").chi
    evals, vecs = np.linalg.eigh(qc._hermitize(chi))
    if evals.min() < -1e-3:
        logger.warning("Proyección CP: autovalor %.4f truncado", evals.min())
    clipped = np.clip(evals, 0.0, None)
    ops = np.einsum("mi,mab->iab", vecs * np.sqrt(clipped), qc.BASES["pauli"])
    if trace_preserving:
        ops = ops @ _inverse_sqrt(np.einsum("iba,ibc->ac", ops.conj(), ops))
    projected = qc.chi_from_kraus(list(ops))
    return qc.ProcessMatrix(projected.chi, "pauli", process.outcome_probability).in_basis(process.basis)


# --------------------------------------------------------------------------
# reconstrucción
# --------------------------------------------------------------------------

def _bloch_estimate(freqs, settings):
    try:
        pairs = [freqs[s] for s in settings]
    except KeyError as exc:
        raise InvalidInputError(f"falta el ajuste {exc.args[0].setting_id}") from None
    bloch = np.array([plus - minus for plus, minus in pairs])
    fraction = np.array([plus + minus for plus, minus in pairs])
    return bloch, fraction


def reconstruct_state_1q(data):
    """Inversión lineal b̂ᵢ = (n₊ − n₋)/N seguida de proyección PSD."""
    bloch, _ = _bloch_estimate(_frequencies(data), state_settings())
    return qc.SpinState.from_matrix(project_psd(qc.bloch_matrices(bloch)))


def _two_qubit_basis():
    # productos de Pauli en la base documentada de JointState, sin I⊗I
    paulis = [qc.I2, *qc.PAULI]
    return np.array([np.kron(a, b) for a in paulis for b in paulis][1:])


def reconstruct_state_2q(data):
    """
    Mínimos cuadrados sobre los observables medidos y proyección PSD.

    Acepta cualquier conjunto de ajustes sin post-selección que complete rango.
    """
    freqs = _frequencies(data)
    settings = [s for s in freqs if s.port is None]
    if len(settings) != len(freqs):
        raise InvalidInputError("reconstruct_state_2q: los ajustes con post-selección no se admiten")
    basis = _two_qubit_basis()
    design, target = [], []
    for setting in settings:
        plus, minus = setting.projectors(4)
        obs = plus - minus
        design.append(np.einsum("ij,kji->k", obs, basis).real / 4)
        target.append(freqs[setting][0] - freqs[setting][1] - np.trace(obs).real / 4)
    design = np.array(design).reshape(-1, len(basis))
    if np.linalg.matrix_rank(design) < len(basis):
        raise InvalidInputError("reconstruct_state_2q: conjunto de ajustes incompleto")
    coeffs, *_ = np.linalg.lstsq(design, np.array(target), rcond=None)
    rho = (np.eye(4) + np.einsum("k,kij->ij", coeffs, basis)) / 4
    return qc.JointState.from_matrix(project_psd(rho))


def joint_state_tomography(channel, labels=CARDINAL_LABELS, shots=None, seed=None):
    """
    Tomografía espín-fotón de la salida de `channel` para cada estado cardinal de `labels`.

    `channel` es un JointMap o una función estado de espín → matriz 4x4. Sin `shots` se usan
    frecuencias exactas; con `shots` cada (entrada, ajuste) recibe una semilla hija.
    Devuelve (estados reconstruidos, datos) indexados por etiqueta.
    """
    if shots is not None and seed is None:
        raise InvalidInputError("joint_state_tomography: seed obligatoria en el modo muestreado")
    settings = two_qubit_settings()
    states = [qc.cardinal_state(label) for label in labels]
    if isinstance(channel, JointMap):
        outputs = channel.apply_matrix(np.array([s.rho for s in states]))
    else:
        outputs = np.array([qc._as_matrix(channel(s)) for s in states])
    if shots is None:
        data = {label: exact_frequencies(out, settings) for label, out in zip(labels, outputs)}
    else:
        seeds = child_seeds(seed, len(labels) * len(settings))
        data = {label: [simulate_counts(out, setting, shots, seeds[i * len(settings) + j])
                        for j, setting in enumerate(settings)]
                for i, (label, out) in enumerate(zip(labels, outputs))}
    logger.debug("Tomografía conjunta: %d entradas × %d ajustes", len(labels), len(settings))
    return {label: reconstruct_state_2q(data[label]) for label in labels}, data


def _outputs_matrix(outputs):
    return np.array([qc._as_matrix(o).ravel() for o in outputs]).T


def _process_from_outputs(inputs, outputs):
    superop = _outputs_matrix(outputs) @ np.linalg.inv(inputs.matrix())
    return qc.chi_from_superoperator(superop)


def reconstruct_process(inputs, outputs, basis="pauli"):
    """χ por inversión lineal a partir de los estados de salida, proyectada a CPTP."""
    inputs = _as_inputs(inputs)
    if len(outputs) != 4:
        raise InvalidInputError(f"reconstruct_process: se esperaban 4 salidas, llegaron {len(outputs)}")
    process = project_cp(_process_from_outputs(inputs, outputs))
    return process.in_basis(basis)


def reconstruct_process_from_counts(inputs, data, basis="pauli"):
    """QPT completa: tomografía de cada salida y `reconstruct_process`."""
    inputs = _as_inputs(inputs)
    outputs = [reconstruct_state_1q(_spin_only(data[label])) for label in inputs.labels]
    return reconstruct_process(inputs, outputs, basis)


def _spin_only(data):
    freqs = _frequencies(data)
    return {s: v for s, v in freqs.items() if s.photon_analyzer is None}


def conditional_process(outcome, inputs, data, basis="pauli"):
    """
    Proceso condicionado a detectar el fotón con polarización `outcome` (E+ o E-).

    Se reconstruye el mapa lineal Λ_E a partir de las salidas sin normalizar p_E·ρ_E de
    cada entrada y se devuelve Λ_E/p_E con p_E = Tr Λ_E(I/2) en `outcome_probability`.
    La proyección es sólo CP: Λ_E/p_E no conserva la traza en general.
    """
    inputs = _as_inputs(inputs)
    settings = conditional_settings(outcome)
    outputs = []
    for label in inputs.labels:
        bloch, fraction = _bloch_estimate(_frequencies(data[label]), settings)
        weight = float(fraction.mean())
        if weight <= 0:
            logger.warning("Entrada %s sin eventos condicionados a %s", label, outcome)
        outputs.append((weight * qc.I2 + np.einsum("i,ijk->jk", bloch, qc.PAULI)) / 2)
    if all(np.trace(o).real <= 0 for o in outputs):
        raise InsufficientDataError(f"conditional_process: ningún evento con resultado {outcome}")
    linear = _process_from_outputs(inputs, outputs)
    prob = float(np.trace(qc.apply_chi_matrix(linear.chi, qc.I2 / 2)).real)
    if prob <= 0:
        raise InsufficientDataError(f"conditional_process: probabilidad estimada nula para {outcome}")
    scaled = qc.ProcessMatrix(linear.chi / prob, "pauli", prob)
    return project_cp(scaled, trace_preserving=False).in_basis(basis)


# --------------------------------------------------------------------------
# CSV de cuentas
# --------------------------------------------------------------------------

COUNT_COLUMNS = ["input", "setting_id", "axis_spin", "analyzer_qwp", "analyzer_hwp", "port",
                 "n_plus", "n_minus", "N", "seed"]


def count_records_frame(records_by_input):
    rows = []
    for label, records in records_by_input.items():
        for rec in records:
            analyzer = rec.setting.photon_analyzer
            rows.append({
                "input": label,
                "setting_id": rec.setting.setting_id,
                "axis_spin": rec.setting.spin_axis or "",
                "analyzer_qwp": analyzer.qwp if analyzer else None,
                "analyzer_hwp": analyzer.hwp if analyzer else None,
                "port": rec.setting.port,
                "n_plus": rec.n_plus,
                "n_minus": rec.n_minus,
                "N": rec.shots,
                "seed": rec.seed,
            })
    frame = pd.DataFrame(rows, columns=COUNT_COLUMNS)
    frame["port"] = frame["port"].astype("Int64")
    return frame


def write_count_records(path, records_by_input, config_hash=None):
    return io.write_csv(path, count_records_frame(records_by_input), config_hash)


def _snap_analyzer(qwp, hwp):
    # el CSV guarda 12 cifras: recupera los ajustes con nombre para que los ajustes coincidan
    analyzer = AnalyzerSetting(float(qwp), float(hwp))
    for named in PHOTON_AXIS_ANALYZERS.values():
        if abs(named.qwp - analyzer.qwp) < 1e-9 and abs(named.hwp - analyzer.hwp) < 1e-9:
            return named
    return analyzer


def read_count_records(path):
    frame = io.read_csv(path)
    missing = set(COUNT_COLUMNS) - set(frame.columns)
    if missing:
        raise InvalidInputError(f"{path}: faltan columnas {sorted(missing)}")
    out = {}
    for row in frame.itertuples(index=False):
        analyzer = None if pd.isna(row.analyzer_qwp) else _snap_analyzer(row.analyzer_qwp, row.analyzer_hwp)
        setting = MeasurementSetting(
            None if pd.isna(row.axis_spin) or row.axis_spin == "" else str(row.axis_spin),
            analyzer,
            None if pd.isna(row.port) else int(row.port),
        )
        label = "" if pd.isna(row.input) else str(row.input)
        out.setdefault(label, []).append(
            CountRecord(setting, int(row.n_plus), int(row.n_minus), int(row.N), int(row.seed)))
    return out
