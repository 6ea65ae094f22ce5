"""
Magnitudes derivadas y conjuntos de datos de figura: superficies de colapso en la esfera
de Bloch, ejes del elipsoide, barrido de la relación de aspecto, mapas de entropía y de
concurrencia, barridos de polarización y correlación de lectura en la base puntero.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ionscatter import quantum_core as qc
from ionscatter import scattering as sc
from ionscatter import tomography as tomo
from ionscatter.errors import InvalidInputError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 2048
GOLDEN_ANGLE = math.pi * (3 - math.sqrt(5))
# por encima de este ancho la ventana uniforme reaparece (sin W / W cambia de signo)
MONOTONE_LIMIT_DEG = 180.0


def grid_spacing(n):
    """Separación típica entre vecinos de una malla de n puntos en la esfera (rad)."""
    return math.sqrt(4 * math.pi / n)


@dataclass(frozen=True, eq=False)
class BlochGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if pts.size and np.abs(np.linalg.norm(pts, axis=1) - 1).max() > qc.TOL_STATE:
            raise InvalidInputError("BlochGrid: todos los puntos deben ser unitarios")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def fibonacci(cls, n=DEFAULT_GRID_POINTS):
        if n < 1:
            raise InvalidInputError(f"BlochGrid: n={n}, se necesita al menos un punto")
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        r = np.sqrt(1 - z ** 2)
        pts = np.stack([r * np.cos(GOLDEN_ANGLE * i), r * np.sin(GOLDEN_ANGLE * i), z], axis=1)
        return cls(pts / np.linalg.norm(pts, axis=1, keepdims=True))

    @classmethod
    def from_labels(cls, labels):
        return cls([qc.CARDINAL_AXES[label] for label in labels])

    def __len__(self):
        return len(self.points)

    def states(self):
        return qc.bloch_matrices(self.points)

    @property
    def spacing(self):
        return grid_spacing(len(self))


@dataclass(frozen=True, eq=False)
class GridMap:
    """Valor escalar por punto de la malla; se exporta como bx,by,bz,<name>"""
    points: np.ndarray
    values: np.ndarray
    name: str

    def to_frame(self):
        frame = pd.DataFrame(self.points, columns=["bx", "by", "bz"])
        frame[self.name] = self.values
        return frame

    def argmin(self):
        return self.points[int(np.argmin(self.values))]

    def argmax(self):
        return self.points[int(np.argmax(self.values))]


@dataclass(frozen=True, eq=False)
class EllipsoidSummary:
    semi_axes: np.ndarray
    # filas: direcciones principales en el orden de semi_axes
    principal_directions: np.ndarray
    center: np.ndarray
    in_plane_aspect_ratio: float
    unbounded: bool = False

    @property
    def main_axis_azimuth(self):
        """Azimut del eje mayor en (−π/2, π/2]; el signo del eje no está definido."""
        d = self.principal_directions[0]
        azimuth = math.atan2(d[1], d[0])
        if azimuth <= -math.pi / 2:
            azimuth += math.pi
        elif azimuth > math.pi / 2:
            azimuth -= math.pi
        return azimuth

    def to_dict(self):
        return {
            "semi_axes": self.semi_axes,
            "principal_directions": self.principal_directions,
            "center": self.center,
            "in_plane_aspect_ratio": self.in_plane_aspect_ratio,
            "unbounded": self.unbounded,
            "main_axis_azimuth_deg": math.degrees(self.main_axis_azimuth),
        }


def _require_cptp(process):
    if not (process.is_trace_preserving() and process.is_completely_positive()):
        raise InvalidInputError("se esperaba un proceso CPTP")


# --------------------------------------------------------------------------
# superficies de colapso y elipsoides
# --------------------------------------------------------------------------

def collapse_surface(process, grid):
    """Imágenes M·b + t de los puntos de la malla (array n×3)."""
    _require_cptp(process)
    return qc.chi_to_affine(process).apply(grid.points)


def conditional_collapse(process, grid, tol=qc.TOL_STATE):
    """
    Imágenes normalizadas de un proceso sin conservación de traza.

    Devuelve (puntos, probabilidades); los puntos con probabilidad ≤ tol quedan en NaN.
    """
    out = qc.apply_chi_matrix(process.chi, grid.states(), process.basis)
    probs = np.trace(out, axis1=-2, axis2=-1).real
    points = np.full((len(grid), 3), np.nan)
    valid = probs > tol
    points[valid] = qc.bloch_components(out[valid] / probs[valid, None, None])
    if not valid.all():
        logger.debug("Colapso condicionado: %d puntos sin probabilidad", int((~valid).sum()))
    return points, probs


def _summary_from_linear(M, center):
    U, s, _ = np.linalg.svd(M)
    plane = np.linalg.svd(M[:2, :], compute_uv=False)
    unbounded = bool(plane[1] <= qc.TOL_STATE * max(plane[0], qc.TOL_STATE))
    ratio = math.inf if unbounded else float(plane[0] / plane[1])
    return EllipsoidSummary(s, U.T, np.asarray(center, dtype=float), ratio, unbounded)


def ellipsoid_summary(process):
    """Ejes del elipsoide imagen a partir de los valores singulares del bloque afín."""
    _require_cptp(process)
    affine = qc.chi_to_affine(process)
    return _summary_from_linear(affine.M, affine.t)


def fit_ellipsoid(points):
    """
    Ajuste cuádrico pᵀAp + bᵀp = 1 por mínimos cuadrados a una nube de puntos.

    Necesita un elipsoide no degenerado que no pase por el origen.
    """
    p = np.asarray(points, dtype=float)
    if len(p) < 9:
        raise InvalidInputError("fit_ellipsoid: se necesitan al menos 9 puntos")
    x, y, z = p.T
    design = np.stack([x * x, y * y, z * z, 2 * x * y, 2 * x * z, 2 * y * z, x, y, z], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, np.ones(len(p)), rcond=None)
    a, b, c, d, e, f = coeffs[:6]
    A = np.array([[a, d, e], [d, b, f], [e, f, c]])
    lin = coeffs[6:]
    try:
        center = -np.linalg.solve(A, lin) / 2
    except np.linalg.LinAlgError:
        raise NumericalError("fit_ellipsoid: cuádrica degenerada") from None
    gain = 1 + center @ A @ center
    evals, vecs = np.linalg.eigh(A / gain)
    if evals.min() <= 0:
        raise NumericalError("fit_ellipsoid: la cuádrica ajustada no es un elipsoide")
    M = vecs @ np.diag(1 / np.sqrt(evals)) @ vecs.T
    return _summary_from_linear(M, center)


@dataclass(frozen=True, eq=False)
class SweepResult:
    widths_deg: np.ndarray
    ratios: np.ndarray
    unbounded: np.ndarray
    monotone: bool

    def to_frame(self):
        return pd.DataFrame({"width_deg": self.widths_deg, "ratio": self.ratios, "unbounded": self.unbounded})


def aspect_ratio_sweep(windows_deg, geometry=None, numerical_aperture=None, nodes=sc.DEFAULT_NODES,
                       theta_limits="band", solid_angle=False):
    """
    Relación de aspecto en el plano x-y frente al ancho total de la ventana de fase.

    Se exige monotonía no creciente hasta 180°; por encima sólo se informa.
    """
    geometry = geometry or sc.ScatteringGeometry()
    if numerical_aperture is not None:
        geometry = sc.ScatteringGeometry(geometry.detector_direction, numerical_aperture, geometry.phase_center,
                                         geometry.phase_halfwidth, geometry.larmor_frequency)
    widths = np.sort(np.asarray(windows_deg, dtype=float))
    if widths.size == 0 or widths.min() <= 0 or widths.max() > 360:
        raise InvalidInputError("aspect_ratio_sweep: los anchos deben estar en (0°, 360°]")
    ratios, unbounded = [], []
    for width in widths:
        process = sc.chi_averaged(geometry.with_window_deg(width), nodes=nodes, theta_limits=theta_limits,
                                  solid_angle=solid_angle)
        summary = ellipsoid_summary(process)
        ratios.append(summary.in_plane_aspect_ratio)
        unbounded.append(summary.unbounded)
        logger.debug("Ventana %.2f°: relación %.6g", width, summary.in_plane_aspect_ratio)
    ratios = np.array(ratios)
    steps = np.diff(ratios) <= 1e-9 * np.maximum(ratios[1:], 1.0)
    low = widths[1:] <= MONOTONE_LIMIT_DEG
    if not steps[low].all():
        raise NumericalError("aspect_ratio_sweep: la relación de aspecto crece con la ventana por debajo de 180°")
    monotone = bool(steps.all())
    if not monotone:
        logger.warning("La relación de aspecto deja de ser monótona por encima de %.0f°", MONOTONE_LIMIT_DEG)
    return SweepResult(widths, ratios, np.array(unbounded), monotone)


def tomography_aspect_ratios(windows_deg, geometry=None, grid=None, shots=None, seed=None,
                             nodes=sc.DEFAULT_NODES):
    """
    Relación de aspecto del ajuste cuádrico a la superficie de colapso del proceso
    reconstruido por QPT simulada, una por ventana (ordenadas como en `aspect_ratio_sweep`).

    Sin `shots` la QPT usa frecuencias exactas. Si el ajuste no es un elipsoide queda NaN.
    """
    if shots is not None and seed is None:
        raise InvalidInputError("tomography_aspect_ratios: el modo muestreado necesita semilla")
    geometry = geometry or sc.ScatteringGeometry()
    grid = grid or BlochGrid.fibonacci(DEFAULT_GRID_POINTS)
    widths = np.sort(np.asarray(windows_deg, dtype=float))
    seeds = tomo.child_seeds(seed, len(widths)) if shots is not None else [None] * len(widths)
    ratios = []
    for width, child in zip(widths, seeds):
        process = sc.chi_averaged(geometry.with_window_deg(width), nodes=nodes)
        if shots is None:
            data = tomo.exact_process_data(process)
        else:
            data = tomo.simulate_process_counts(process, None, shots, child)
        rebuilt = tomo.reconstruct_process_from_counts(None, data)
        try:
            ratios.append(fit_ellipsoid(collapse_surface(rebuilt, grid)).in_plane_aspect_ratio)
        except NumericalError as e:
            logger.warning("Ventana %.2f°: ajuste cuádrico no disponible (%s)", width, e)
            ratios.append(math.nan)
    return np.array(ratios)


# --------------------------------------------------------------------------
# mapas sobre la esfera de Bloch
# --------------------------------------------------------------------------

def entropy_map(process, grid):
    """Entropía de von Neumann (nats) de la imagen de cada estado puro de la malla."""
    _require_cptp(process)
    images = qc.apply_chi_matrix(process.chi, grid.states(), process.basis)
    values = np.array([qc.von_neumann_entropy(img) for img in images])
    return GridMap(grid.points, values, "entropy_nats")


def concurrence_map(geometry, noise, grid, nodes=sc.DEFAULT_NODES, joint_map=None):
    """Concurrencia del par espín-fotón tras la dispersión y el ruido de fondo."""
    joint_map = joint_map or sc.averaged_joint_map(geometry, nodes=nodes)
    states = sc.scattered_joint_states(grid.states(), joint_map, noise)
    values = np.array([qc.concurrence(rho) for rho in states])
    return GridMap(grid.points, values, "concurrence")


def _project_densities(matrices):
    # autovalores negativos a cero y traza unidad, por lotes
    herm = (matrices + np.conj(np.swapaxes(matrices, -1, -2))) / 2
    evals, vecs = np.linalg.eigh(herm)
    clipped = np.clip(evals, 0.0, None)
    clipped_count = int((evals.min(axis=-1) < -qc.TOL_STATE).sum())
    if clipped_count:
        logger.debug("Combinación cardinal: %d matrices con autovalores negativos truncados", clipped_count)
    clipped = clipped / clipped.sum(axis=-1, keepdims=True)
    return np.einsum("...ik,...k,...jk->...ij", vecs, clipped, vecs.conj())


def combine_cardinal_outputs(outputs, grid):
    """
    Salidas para los estados puros de la malla como combinación lineal de las salidas de
    los seis estados cardinales: ρ(b) = Σᵢ [(⅓ + bᵢ)/2 ρ₊ᵢ + (⅓ − bᵢ)/2 ρ₋ᵢ].

    `outputs` va de etiqueta cardinal a matriz (o estado); el resultado se proyecta a
    matrices densidad porque con datos ruidosos los pesos negativos rompen la positividad.
    """
    missing = [label for label in tomo.CARDINAL_LABELS if label not in outputs]
    if missing:
        raise InvalidInputError(f"combine_cardinal_outputs: faltan las salidas de {', '.join(missing)}")
    plus = np.array([qc._as_matrix(outputs[axis]) for axis in "xyz"])
    minus = np.array([qc._as_matrix(outputs[f"-{axis}"]) for axis in "xyz"])
    b = grid.points
    mixed = np.einsum("ni,iab->nab", (1 / 3 + b) / 2, plus) + np.einsum("ni,iab->nab", (1 / 3 - b) / 2, minus)
    return _project_densities(mixed)


def concurrence_map_from_outputs(outputs, grid):
    """Concurrencia a partir de los estados conjuntos reconstruidos de las seis entradas cardinales."""
    states = combine_cardinal_outputs(outputs, grid)
    values = np.array([qc.concurrence(rho) for rho in states])
    return GridMap(grid.points, values, "concurrence")


@dataclass(frozen=True, eq=False)
class ScanResult:
    hwp_angles: np.ndarray
    probabilities: np.ndarray
    # p ≈ A + B cos 4h + C sin 4h
    fit: tuple
    visibility: float
    visibility_extrema: float
    exact: np.ndarray = None

    def to_frame(self):
        frame = pd.DataFrame({"hwp_deg": np.degrees(self.hwp_angles), "p_port": self.probabilities})
        if self.exact is not None:
            frame["p_exact"] = self.exact
        return frame

    def to_dict(self):
        a, b, c = self.fit
        return {"fit": {"A": a, "B": b, "C": c}, "visibility": self.visibility,
                "visibility_extrema": self.visibility_extrema}


def _fit_sinusoid(angles, values):
    design = np.stack([np.ones_like(angles), np.cos(4 * angles), np.sin(4 * angles)], axis=1)
    (a, b, c), *_ = np.linalg.lstsq(design, values, rcond=None)
    visibility = math.hypot(b, c) / a if a > 0 else 0.0
    return (float(a), float(b), float(c)), float(visibility)


def polarization_scan(initial_state, hwp_angles, geometry=None, noise=None, qwp=math.pi / 4, port=1,
                      shots=None, seed=None, nodes=sc.DEFAULT_NODES, joint_map=None):
    """
    Probabilidad en un puerto del PBS frente al ángulo de la λ/2, con la λ/4 fija en `qwp`.

    Con `shots` se simulan cuentas binomiales con `seed`; la visibilidad ajustada viene de
    A + B cos 4h + C sin 4h y la de extremos de (p_max − p_min)/(p_max + p_min).
    """
    angles = np.asarray(hwp_angles, dtype=float)
    if angles.size < 3:
        raise InvalidInputError("polarization_scan: se necesitan al menos 3 ángulos")
    geometry = geometry or sc.ScatteringGeometry.ideal()
    joint_map = joint_map or sc.averaged_joint_map(geometry, nodes=nodes)
    joint = sc.apply_background(joint_map.apply(initial_state), noise)
    exact = np.array([sc.detection_probability(joint, sc.AnalyzerSetting(qwp, h), port) for h in angles])
    values = exact
    if shots is not None:
        if seed is None:
            raise InvalidInputError("polarization_scan: el modo muestreado necesita semilla")
        rng = np.random.default_rng(seed)
        values = rng.binomial(int(shots), exact) / int(shots)
    fit, visibility = _fit_sinusoid(angles, values)
    p_max, p_min = values.max(), values.min()
    extrema = float((p_max - p_min) / (p_max + p_min)) if p_max + p_min > 0 else 0.0
    return ScanResult(angles, values, fit, visibility, extrema, exact if shots is not None else None)


def pointer_readout_correlation(geometry=None, noise=None, nodes=sc.DEFAULT_NODES, joint_map=None):
    """
    Probabilidad de que el puerto del PBS coincida con el estado puntero preparado,
    promediada sobre |x̂⟩ (→ E₋, puerto −1) y |−x̂⟩ (→ E₊, puerto +1).
    """
    geometry = geometry or sc.ScatteringGeometry.ideal()
    joint_map = joint_map or sc.averaged_joint_map(geometry, nodes=nodes)
    analyzer = sc.PHOTON_AXIS_ANALYZERS["z"]
    agree = []
    for label, port in (("x", -1), ("-x", 1)):
        joint = sc.apply_background(joint_map.apply(qc.cardinal_state(label)), noise)
        agree.append(sc.detection_probability(joint, analyzer, port))
    return float(np.mean(agree))
