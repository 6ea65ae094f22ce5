"""Informe de una ejecución: run_summary.json y resumen de consola con marcas ✓/✗."""

import datetime
import logging

from colorama import Fore, Style

from ionscatter import io


class RunReport:
    """Clase para generar el informe de una ejecución"""

    def __init__(self, command, config=None):
        self.report = {
            "command": command,
            "config_hash": config.config_hash() if config else None,
            "geometry": config.geometry.to_dict() if config else None,
            "noise": config.noise.to_dict() if config else None,
            "seed": config.seed if config else None,
            "noiseless": config.noiseless if config else None,
            "files": {},
            "results": {},
            "checks": {},
            "errors": [],
            "warnings": [],
        }

    def add_file(self, name, path):
        self.report["files"][name] = str(path)

    def add_result(self, key, value):
        self.report["results"][key] = value

    def add_check(self, name, ok, message=""):
        self.report["checks"][name] = {"status": "ok" if ok else "failed", "message": message}
        if not ok:
            self.add_error(f"{name}: {message}" if message else name)
        return ok

    def add_error(self, error):
        self.report["errors"].append(error)

    def add_warning(self, warning):
        if warning not in self.report["warnings"]:
            self.report["warnings"].append(warning)

    @property
    def ok(self):
        return not self.report["errors"]

    def save(self, filepath):
        """Guarda el informe en JSON (sin marca de tiempo: salida reproducible)"""
        return io.write_json(filepath, self.report)

    def get_summary_text(self, color=False):
        """Genera un resumen en texto del informe"""
        def paint(text, colour):
            return f"{colour}{text}{Style.RESET_ALL}" if color else text

        lines = ["=" * 60, f"RESUMEN: ionscatter {self.report['command']}", "=" * 60,
                 f"Fecha: {datetime.datetime.now().isoformat(timespec='seconds')}"]
        if self.report["config_hash"]:
            lines.append(f"Configuración: {self.report['config_hash'][:16]}…")
        lines.append("")

        if self.report["checks"]:
            lines.append("COMPROBACIONES:")
            for name, info in self.report["checks"].items():
                icon = paint("✓", Fore.GREEN) if info["status"] == "ok" else paint("✗", Fore.RED)
                lines.append(f"  {icon} {name}")
                if info["message"]:
                    lines.append(f"    {info['message']}")
            lines.append("")

        if self.report["results"]:
            lines.append("RESULTADOS:")
            for key, value in self.report["results"].items():
                shown = f"{value:.6g}" if isinstance(value, float) else value
                lines.append(f"  {key}: {shown}")
            lines.append("")

        if self.report["files"]:
            lines.append("FICHEROS:")
            for name, path in self.report["files"].items():
                lines.append(f"  {name}: {path}")
            lines.append("")

        if self.report["errors"]:
            lines.append("ERRORES:")
            for error in self.report["errors"]:
                lines.append(f"  {paint('✗', Fore.RED)} {error}")
            lines.append("")

        if self.report["warnings"]:
            lines.append("ADVERTENCIAS:")
            for warning in self.report["warnings"]:
                lines.append(f"  {paint('⚠', Fore.YELLOW)} {warning}")
            lines.append("")

        lines.append("=" * 60)
        return "\n".join(lines)


class ReportLogHandler(logging.Handler):
    """Copia al informe los avisos registrados durante la ejecución"""

    def __init__(self, report):
        super().__init__(level=logging.WARNING)
        self.run_report = report

    def emit(self, record):
        self.run_report.add_warning(record.getMessage())
