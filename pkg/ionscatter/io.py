"""Escritura y lectura de los ficheros de resultados (JSON y CSV)."""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

HASH_PREFIX = "# config_sha256="


def ensure_output_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plain(value):
    """Convierte tipos de numpy a tipos JSON nativos."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def write_json(path, data, config_hash=None):
    payload = dict(_plain(data))
    if config_hash is not None:
        payload["config_hash"] = config_hash
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    logger.debug("Escrito %s", path)
    return path


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path, frame, config_hash=None):
    """CSV con una primera línea de comentario que lleva el hash de la configuración."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        if config_hash is not None:
            f.write(f"{HASH_PREFIX}{config_hash}\n")
        frame.to_csv(f, index=False, float_format="%.12g", lineterminator="\n")
    logger.debug("Escrito %s (%d filas)", path, len(frame))
    return path


def read_csv(path):
    return pd.read_csv(path, comment="#")


def read_config_hash(path):
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None
