"""Pruebas de la carga y resolución de la configuración."""

import json
import math

import pytest

from ionscatter.config import (DEFAULT_WINDOWS_DEG, RunConfig, ScanConfig, SweepConfig, cargar_configuracion,
                               leer_configuracion)
from ionscatter.errors import ConfigError


def _write(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


class TestLeerConfiguracion:

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as excinfo:
            leer_configuracion(tmp_path / "no_existe.json")
        assert "no se encontró" in str(excinfo.value)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{seed: 1", encoding="utf-8")
        with pytest.raises(ConfigError):
            leer_configuracion(path)

    def test_root_must_be_object(self, tmp_path):
        with pytest.raises(ConfigError):
            leer_configuracion(_write(tmp_path, [1, 2]))


class TestRunConfig:

    def test_defaults(self):
        config = RunConfig()
        assert config.counts_per_setting == 900
        assert config.grid_points == 2048
        assert config.seed is None
        assert config.sweep.windows_deg == DEFAULT_WINDOWS_DEG

    def test_nested_error_path(self):
        with pytest.raises(ConfigError) as excinfo:
            RunConfig.from_dict({"noise": {"background_fraction": 1.5}})
        assert excinfo.value.path == "noise.background_fraction"

    def test_unknown_keys(self):
        with pytest.raises(ConfigError) as excinfo:
            RunConfig.from_dict({"geometry": {"na": 0.3}})
        assert excinfo.value.path == "geometry.na"
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"mailserver": "10.1.1.1"})

    @pytest.mark.parametrize("key, value", [("counts_per_setting", 0), ("seed", -1), ("grid_points", 1.5),
                                            ("noiseless", "yes"), ("output_dir", "")])
    def test_invalid_scalars(self, key, value):
        with pytest.raises(ConfigError) as excinfo:
            RunConfig.from_dict({key: value})
        assert excinfo.value.path == key

    def test_dict_round_trip(self):
        config = RunConfig.from_dict({"seed": 4, "geometry": {"numerical_aperture": 0.2},
                                      "sweep": {"windows_deg": [30, 60]}})
        assert RunConfig.from_dict(config.to_dict()) == config

    def test_hash_ignores_output_dir(self):
        a = RunConfig(seed=1)
        assert a.config_hash() == a.with_overrides(output_dir="otro").config_hash()
        assert a.config_hash() != a.with_overrides(seed=2).config_hash()
        assert len(a.config_hash()) == 64

    def test_require_seed(self):
        with pytest.raises(ConfigError):
            RunConfig().require_seed()
        assert RunConfig(seed=0).require_seed() == 0


class TestOverrides:

    def test_flags_take_precedence_over_file(self, tmp_path):
        path = _write(tmp_path, {"seed": 1, "counts_per_setting": 100, "geometry": {"numerical_aperture": 0.2}})
        config = cargar_configuracion(path, seed=9, na=0.4, window_deg=90, background=0.0)
        assert config.seed == 9
        assert config.counts_per_setting == 100
        assert config.geometry.numerical_aperture == pytest.approx(0.4)
        assert config.geometry.window_deg == pytest.approx(90)
        assert config.noise.background_fraction == 0.0

    def test_invalid_flag_names_the_flag(self):
        with pytest.raises(ConfigError) as excinfo:
            cargar_configuracion(None, na=1.5)
        assert excinfo.value.path == "--na"
        with pytest.raises(ConfigError) as excinfo:
            cargar_configuracion(None, window_deg=400)
        assert excinfo.value.path == "--window-deg"

    def test_none_values_change_nothing(self):
        assert cargar_configuracion(None) == RunConfig()
        assert cargar_configuracion(None, noiseless=False).noiseless is False


class TestScanAndSweep:

    def test_scan_angles(self):
        scan = ScanConfig.from_dict({"start_deg": 0, "stop_deg": 10, "step_deg": 2.5})
        assert scan.hwp_angles() == pytest.approx([math.radians(a) for a in (0, 2.5, 5, 7.5, 10)])

    def test_scan_validation(self):
        with pytest.raises(ConfigError):
            ScanConfig.from_dict({"initial_state": "w"})
        with pytest.raises(ConfigError):
            ScanConfig.from_dict({"port": 0})
        with pytest.raises(ConfigError):
            ScanConfig.from_dict({"start_deg": 10, "stop_deg": 0})

    def test_sweep_validation(self):
        assert SweepConfig.from_dict({"windows_deg": [40, 90]}).windows_deg == (40.0, 90.0)
        with pytest.raises(ConfigError) as excinfo:
            SweepConfig.from_dict({"windows_deg": [40, 400]})
        assert excinfo.value.path == "sweep.windows_deg[1]"
        with pytest.raises(ConfigError):
            SweepConfig.from_dict({"windows_deg": []})
