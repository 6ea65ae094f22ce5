"""
Configuración de ejecución.

Precedencia: valores por defecto < fichero JSON (--config) < flags de la CLI.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

from ionscatter.errors import ConfigError, InvalidInputError
from ionscatter.scattering import NoiseModel, ScatteringGeometry

logger = logging.getLogger(__name__)

DEFAULT_WINDOWS_DEG = (11.25, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0,
                       130.0, 140.0, 160.0, 180.0, 360.0)
SCAN_STATES = ("x", "-x", "y", "-y", "z", "-z")


def leer_configuracion(config_path):
    """Lee la configuración desde el archivo JSON"""
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(str(config_path), "no se encontró el archivo de configuración") from None
    except json.JSONDecodeError as e:
        raise ConfigError(str(config_path), f"error al decodificar JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(str(config_path), "se esperaba un objeto JSON en la raíz")
    return data


def _integer(value, path, minimum):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"se esperaba un entero, llegó {value!r}")
    if value < minimum:
        raise ConfigError(path, f"debe ser ≥ {minimum}")
    return value


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"se esperaba un número, llegó {value!r}")
    return float(value)


def _check_keys(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(path, "se esperaba un objeto JSON")
    unknown = sorted(set(data) - {f.name for f in fields(cls)})
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "clave desconocida")


@dataclass(frozen=True)
class ScanConfig:
    initial_state: str = "x"
    start_deg: float = 0.0
    stop_deg: float = 90.0
    step_deg: float = 2.5
    qwp_deg: float = 45.0
    port: int = 1
    # None: probabilidades exactas; entero: cuentas binomiales por ángulo
    shots: int = None

    @classmethod
    def from_dict(cls, data, path="scan"):
        _check_keys(cls, data, path)
        values = {}
        for key, value in data.items():
            sub = f"{path}.{key}"
            if key == "initial_state":
                if value not in SCAN_STATES:
                    raise ConfigError(sub, f"debe ser uno de {', '.join(SCAN_STATES)}")
                values[key] = value
            elif key == "port":
                if value not in (1, -1):
                    raise ConfigError(sub, "debe ser 1 o -1")
                values[key] = value
            elif key == "shots":
                values[key] = None if value is None else _integer(value, sub, 1)
            else:
                values[key] = _number(value, sub)
        scan = cls(**values)
        if scan.step_deg <= 0 or scan.stop_deg <= scan.start_deg:
            raise ConfigError(f"{path}.step_deg", "el rango de ángulos está vacío")
        return scan

    def hwp_angles(self):
        count = int(math.floor((self.stop_deg - self.start_deg) / self.step_deg + 1e-9)) + 1
        return [math.radians(self.start_deg + i * self.step_deg) for i in range(count)]


@dataclass(frozen=True)
class SweepConfig:
    windows_deg: tuple = DEFAULT_WINDOWS_DEG

    @classmethod
    def from_dict(cls, data, path="sweep"):
        _check_keys(cls, data, path)
        if "windows_deg" not in data:
            return cls()
        windows = data["windows_deg"]
        if not isinstance(windows, list) or not windows:
            raise ConfigError(f"{path}.windows_deg", "se esperaba una lista no vacía de anchos en grados")
        values = tuple(_number(w, f"{path}.windows_deg[{i}]") for i, w in enumerate(windows))
        for i, w in enumerate(values):
            if not 0 < w <= 360:
                raise ConfigError(f"{path}.windows_deg[{i}]", "debe estar en (0, 360]")
        return cls(values)


@dataclass(frozen=True)
class RunConfig:
    geometry: ScatteringGeometry = field(default_factory=ScatteringGeometry)
    noise: NoiseModel = field(default_factory=NoiseModel)
    counts_per_setting: int = 900
    seed: int = None
    grid_points: int = 2048
    output_dir: str = "resultados"
    quadrature_nodes: int = 64
    noiseless: bool = False
    scan: ScanConfig = field(default_factory=ScanConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @classmethod
    def from_dict(cls, data):
        _check_keys(cls, data, "")
        values = {}
        for key, value in data.items():
            if key == "geometry":
                values[key] = ScatteringGeometry.from_dict(value, "geometry")
            elif key == "noise":
                values[key] = NoiseModel.from_dict(value, "noise")
            elif key == "scan":
                values[key] = ScanConfig.from_dict(value)
            elif key == "sweep":
                values[key] = SweepConfig.from_dict(value)
            elif key in ("counts_per_setting", "grid_points", "quadrature_nodes"):
                values[key] = _integer(value, key, 1)
            elif key == "seed":
                values[key] = None if value is None else _integer(value, key, 0)
            elif key == "output_dir":
                if not isinstance(value, str) or not value:
                    raise ConfigError(key, "se esperaba una ruta")
                values[key] = value
            elif key == "noiseless":
                if not isinstance(value, bool):
                    raise ConfigError(key, "se esperaba true o false")
                values[key] = value
        return cls(**values)

    def to_dict(self):
        data = asdict(self)
        data["geometry"] = self.geometry.to_dict()
        data["sweep"] = {"windows_deg": list(self.sweep.windows_deg)}
        return data

    def with_overrides(self, seed=None, output_dir=None, noiseless=None, window_deg=None, na=None,
                       background=None, counts=None, grid_points=None):
        """Aplica los flags de la CLI; los None no cambian nada."""
        config = self
        try:
            if window_deg is not None:
                config = replace(config, geometry=config.geometry.with_window_deg(window_deg))
            if na is not None:
                config = replace(config, geometry=replace(config.geometry, numerical_aperture=na))
            if background is not None:
                config = replace(config, noise=replace(config.noise, background_fraction=background))
        except InvalidInputError as exc:
            raise ConfigError(f"--{_FLAG_NAMES.get(getattr(exc, 'field', ''), 'config')}",
                              getattr(exc, "detail", str(exc))) from exc
        if seed is not None:
            config = replace(config, seed=_integer(seed, "--seed", 0))
        if output_dir is not None:
            config = replace(config, output_dir=str(output_dir))
        if noiseless:
            config = replace(config, noiseless=True)
        if counts is not None:
            config = replace(config, counts_per_setting=_integer(counts, "--counts", 1))
        if grid_points is not None:
            config = replace(config, grid_points=_integer(grid_points, "--grid-points", 1))
        return config

    def require_seed(self):
        if self.seed is None:
            raise ConfigError("seed", "obligatoria para ejecuciones muestreadas (use --seed o --noiseless)")
        return self.seed

    def config_hash(self):
        """SHA-256 del JSON canónico de la configuración resuelta, sin output_dir."""
        data = self.to_dict()
        data.pop("output_dir")
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_FLAG_NAMES = {
    "window_deg": "window-deg",
    "numerical_aperture": "na",
    "background_fraction": "background",
}


def cargar_configuracion(config_path=None, **overrides):
    """RunConfig desde el fichero (si lo hay) con los flags aplicados encima."""
    data = leer_configuracion(config_path) if config_path else {}
    config = RunConfig.from_dict(data).with_overrides(**overrides)
    logger.debug("Configuración resuelta: %s", config.config_hash())
    return config
