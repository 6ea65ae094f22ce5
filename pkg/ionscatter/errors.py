"""Excepciones del paquete. La CLI traduce cada familia a un código de salida."""


class ScatterError(Exception):
    """Base de todos los errores de ionscatter"""


class InvalidInputError(ScatterError, ValueError):
    """Entrada fuera del dominio de la operación (invalid-input)"""


class UnsupportedError(ScatterError, NotImplementedError):
    """Caso que el modelo no cubre, p.ej. polarización de láser compleja"""


class InsufficientDataError(ScatterError):
    """No hay eventos suficientes para reconstruir (insufficient-data)"""


class NumericalError(ScatterError, ArithmeticError):
    """Fallo numérico: canal no CPTP más allá de tolerancia, matriz singular..."""


class ConfigError(ScatterError):
    """Error de configuración con la ruta del campo que lo provoca"""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
