"""
CLI de ionscatter: orquesta las simulaciones y escribe los conjuntos de datos.

Uso: python -m ionscatter [flags] {process,maps,scan,sweep,selftest} [flags]

Precedencia de la configuración: valores por defecto < --config < flags.
Códigos de salida: 0 éxito, 1 otro error del paquete, 2 configuración, 3 E/S,
4 fallo numérico o datos insuficientes.
"""

import argparse
import logging
import math
import sys

import colorama
import numpy as np
import pandas as pd

from ionscatter import __version__
from ionscatter import analysis as an
from ionscatter import io
from ionscatter import quantum_core as qc
from ionscatter import scattering as sc
from ionscatter import tomography as tomo
from ionscatter.config import cargar_configuracion
from ionscatter.errors import ConfigError, InsufficientDataError, NumericalError, ScatterError
from ionscatter.report import ReportLogHandler, RunReport

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


def configurar_logging(verbose=False, log_file=None):
    """Consola siempre; fichero opcional. --verbose sube a DEBUG."""
    level = logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger("ionscatter")
    root.setLevel(level)
    for handler in list(root.handlers):
        if not isinstance(handler, ReportLogHandler):
            root.removeHandler(handler)
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))
    console.setLevel(level)
    root.addHandler(console)
    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        file_handler.setLevel(level)
        root.addHandler(file_handler)
    return root


def paso(i, n, mensaje):
    print(f"\n[{i}/{n}] {mensaje}...")


# --------------------------------------------------------------------------
# subcomandos
# --------------------------------------------------------------------------

def _ideal_geometry(geometry):
    return sc.ScatteringGeometry.ideal(geometry.detector_direction, geometry.phase_center)


def _distance(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def cmd_process(config, report):
    """χ ideal, χ promediada, QPT simulada, superficie de colapso y elipsoide."""
    out = io.ensure_output_dir(config.output_dir)
    digest = config.config_hash()
    grid = an.BlochGrid.fibonacci(config.grid_points)

    paso(1, 5, "Calculando matrices χ ideal y promediada")
    chi_ideal = sc.chi_averaged(_ideal_geometry(config.geometry), nodes=config.quadrature_nodes)
    chi_avg = sc.chi_averaged(config.geometry, nodes=config.quadrature_nodes)
    report.add_check("chi_averaged CPTP", chi_avg.is_trace_preserving() and chi_avg.is_completely_positive())

    paso(2, 5, "Simulando la tomografía de proceso")
    inputs = tomo.TomographyInputSet.default()
    if config.noiseless:
        data = tomo.exact_process_data(chi_avg, inputs)
    else:
        data = tomo.simulate_process_counts(chi_avg, inputs, config.counts_per_setting, config.require_seed())
        report.add_file("counts", tomo.write_count_records(out / "counts.csv", data, digest))
    chi_rec = tomo.reconstruct_process_from_counts(inputs, data)
    error = float(np.linalg.norm(chi_rec.chi - chi_avg.chi))
    report.add_result("frobenius_reconstructed_vs_averaged", error)
    print(f"Distancia de Frobenius χ reconstruida - χ promediada: {error:.4g}")

    paso(3, 5, "Calculando la superficie de colapso")
    collapse_avg = an.collapse_surface(chi_avg, grid)
    collapse_rec = an.collapse_surface(chi_rec, grid)
    frame = pd.DataFrame(grid.points, columns=["bx", "by", "bz"])
    for prefix, pts in (("avg", collapse_avg), ("rec", collapse_rec)):
        for i, axis in enumerate("xyz"):
            frame[f"{prefix}_{axis}"] = pts[:, i]
    report.add_file("collapse_surface", io.write_csv(out / "collapse_surface.csv", frame, digest))

    paso(4, 5, "Extrayendo el elipsoide")
    summary_avg = an.ellipsoid_summary(chi_avg)
    summary_rec = an.ellipsoid_summary(chi_rec)
    ellipsoid = {"averaged": summary_avg.to_dict(), "reconstructed": summary_rec.to_dict(),
                 "fit_reconstructed": None, "window_deg": config.geometry.window_deg}
    try:
        ellipsoid["fit_reconstructed"] = an.fit_ellipsoid(collapse_rec).to_dict()
    except NumericalError as e:
        logger.warning("Ajuste cuádrico de la nube reconstruida no disponible: %s", e)
    report.add_result("in_plane_aspect_ratio", summary_avg.in_plane_aspect_ratio)
    report.add_result("main_axis_azimuth_deg", math.degrees(summary_avg.main_axis_azimuth))

    paso(5, 5, "Guardando resultados")
    for name, process in (("chi_ideal", chi_ideal), ("chi_averaged", chi_avg), ("chi_reconstructed", chi_rec)):
        report.add_file(name, io.write_json(out / f"{name}.json", process.to_json(), digest))
    pointer = {"basis": "pointer", "labels": list(qc.BASIS_LABELS["pointer"]),
               "chi": qc.matrix_to_json(chi_rec.reporting_matrix())}
    report.add_file("chi_reconstructed_pointer",
                    io.write_json(out / "chi_reconstructed_pointer.json", pointer, digest))
    report.add_file("ellipsoid", io.write_json(out / "ellipsoid.json", ellipsoid, digest))


def _conditional_frame(grid, points, probs):
    frame = pd.DataFrame(grid.points, columns=["bx", "by", "bz"])
    for i, axis in enumerate("xyz"):
        frame[f"c{axis}"] = points[:, i]
    frame["probability"] = probs
    return frame


def cmd_maps(config, report):
    """Mapas de entropía y concurrencia, exactos y a partir de tomografía simulada, y colapsos condicionados."""
    out = io.ensure_output_dir(config.output_dir)
    digest = config.config_hash()
    grid = an.BlochGrid.fibonacci(config.grid_points)
    seed = None if config.noiseless else config.require_seed()
    shots = None if config.noiseless else config.counts_per_setting

    paso(1, 4, "Calculando el mapa de entropía")
    chi_avg = sc.chi_averaged(config.geometry, nodes=config.quadrature_nodes)
    entropy = an.entropy_map(chi_avg, grid)
    report.add_file("entropy_map", io.write_csv(out / "entropy_map.csv", entropy.to_frame(), digest))
    argmin = entropy.argmin()
    report.add_result("entropy_argmin", [float(v) for v in argmin])
    report.add_result("entropy_argmin_distance_to_pointer",
                      min(_distance(argmin, (1, 0, 0)), _distance(argmin, (-1, 0, 0))))

    paso(2, 4, "Calculando el mapa de concurrencia")
    joint_map = sc.averaged_joint_map(config.geometry, nodes=config.quadrature_nodes)
    conc = an.concurrence_map(config.geometry, config.noise, grid, joint_map=joint_map)
    report.add_file("concurrence_map", io.write_csv(out / "concurrence_map.csv", conc.to_frame(), digest))
    report.add_result("concurrence_max", float(conc.values.max()))
    report.add_result("concurrence_min", float(conc.values.min()))

    def channel(state):
        return sc.scattered_joint_states(state.rho, joint_map, config.noise)

    paso(3, 4, "Reconstruyendo el proceso y los procesos condicionados a E₊ y E₋")
    inputs = tomo.TomographyInputSet.default()
    settings = tomo.process_settings(conditional=True)
    if config.noiseless:
        data = tomo.exact_process_data(channel, inputs, settings)
    else:
        data = tomo.simulate_process_counts(channel, inputs, shots, seed, settings)
    chi_rec = tomo.reconstruct_process_from_counts(inputs, data)
    entropy_rec = an.entropy_map(chi_rec, grid)
    report.add_file("entropy_map_reconstructed",
                    io.write_csv(out / "entropy_map_reconstructed.csv", entropy_rec.to_frame(), digest))
    report.add_result("entropy_reconstructed_max_deviation",
                      float(np.abs(entropy_rec.values - entropy.values).max()))
    for outcome, name in (("E+", "plus"), ("E-", "minus")):
        process = tomo.conditional_process(outcome, inputs, data)
        points, probs = an.conditional_collapse(process, grid)
        report.add_result(f"outcome_probability_{name}", process.outcome_probability)
        report.add_file(f"collapse_conditional_{name}",
                        io.write_csv(out / f"collapse_conditional_{name}.csv",
                                     _conditional_frame(grid, points, probs), digest))

    paso(4, 4, "Tomografía espín-fotón de las seis entradas cardinales")
    # flujo independiente del de la QPT del paso 3
    joint_seed = None if seed is None else int(np.random.SeedSequence([seed, 4]).generate_state(1)[0])
    states, joint_data = tomo.joint_state_tomography(channel, shots=shots, seed=joint_seed)
    if not config.noiseless:
        report.add_file("counts_joint", tomo.write_count_records(out / "counts_joint.csv", joint_data, digest))
    joint = {"basis": "espín {|x̂⟩,|−x̂⟩} ⊗ fotón {E₊,E₋}", "states": {}}
    for label, state in states.items():
        exact = channel(qc.cardinal_state(label))
        joint["states"][label] = {"rho": qc.matrix_to_json(state.rho),
                                  "concurrence": qc.concurrence(state),
                                  "fidelity_to_simulated": qc.fidelity(state, exact)}
    report.add_file("joint_states", io.write_json(out / "joint_states.json", joint, digest))
    conc_rec = an.concurrence_map_from_outputs(states, grid)
    report.add_file("concurrence_map_reconstructed",
                    io.write_csv(out / "concurrence_map_reconstructed.csv", conc_rec.to_frame(), digest))
    report.add_result("concurrence_reconstructed_max", float(conc_rec.values.max()))


def cmd_scan(config, report, initial_state=None, angles_deg=None):
    """Probabilidad en un puerto del PBS frente al ángulo de la λ/2."""
    out = io.ensure_output_dir(config.output_dir)
    digest = config.config_hash()
    scan = config.scan
    label = initial_state or scan.initial_state
    angles = [math.radians(a) for a in angles_deg] if angles_deg else scan.hwp_angles()

    paso(1, 2, f"Barriendo la lámina λ/2 para el estado inicial {label}")
    shots = None if config.noiseless else scan.shots
    result = an.polarization_scan(
        qc.cardinal_state(label), angles, config.geometry, config.noise, qwp=math.radians(scan.qwp_deg),
        port=scan.port, shots=shots, seed=config.require_seed() if shots else None, nodes=config.quadrature_nodes)
    report.add_result("visibility", result.visibility)
    report.add_result("visibility_extrema", result.visibility_extrema)
    print(f"Visibilidad ajustada: {result.visibility:.4f}")

    paso(2, 2, "Guardando resultados")
    report.add_file("polarization_scan", io.write_csv(out / "polarization_scan.csv", result.to_frame(), digest))
    sidecar = dict(result.to_dict(), initial_state=label, port=scan.port, qwp_deg=scan.qwp_deg, shots=shots)
    report.add_file("polarization_scan_fit", io.write_json(out / "polarization_scan.json", sidecar, digest))


def cmd_sweep(config, report, windows_deg=None):
    """Relación de aspecto en el plano x-y frente al ancho de la ventana de fase, analítica y ajustada."""
    out = io.ensure_output_dir(config.output_dir)
    windows = windows_deg or config.sweep.windows_deg

    paso(1, 3, f"Barriendo {len(windows)} ventanas de fase")
    sweep = an.aspect_ratio_sweep(windows, config.geometry, nodes=config.quadrature_nodes)
    report.add_result("monotone", sweep.monotone)

    paso(2, 3, "Ajustando elipsoides a la tomografía de proceso simulada")
    shots = None if config.noiseless else config.counts_per_setting
    fitted = an.tomography_aspect_ratios(
        sweep.widths_deg, config.geometry, an.BlochGrid.fibonacci(config.grid_points), shots=shots,
        seed=None if shots is None else config.require_seed(), nodes=config.quadrature_nodes)
    frame = sweep.to_frame()
    frame["ratio_fitted"] = fitted

    paso(3, 3, "Guardando resultados")
    report.add_file("aspect_ratio", io.write_csv(out / "aspect_ratio.csv", frame, config.config_hash()))


def cmd_selftest(config, report):
    from ionscatter.selftest import run_selftest
    run_selftest(report, seed=config.seed if config.seed is not None else 0)


COMMANDS = {
    "process": cmd_process,
    "maps": cmd_maps,
    "scan": cmd_scan,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


# --------------------------------------------------------------------------
# argumentos
# --------------------------------------------------------------------------

def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de números no válida: {text!r}") from None


def _global_flags():
    # SUPPRESS: el valor dado antes o después del subcomando no se pisa con un defecto
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="Ruta al archivo de configuración JSON")
    common.add_argument("--seed", type=int, help="Semilla de las simulaciones muestreadas")
    common.add_argument("--output-dir", help="Directorio de salida")
    common.add_argument("--noiseless", action="store_true", help="Expectativas exactas, sin ruido de proyección")
    common.add_argument("--window-deg", type=float, help="Ancho total de la ventana de fase en grados")
    common.add_argument("--na", type=float, help="Apertura numérica del objetivo")
    common.add_argument("--background", type=float, help="Fracción de eventos de fondo")
    common.add_argument("--counts", type=int, help="Repeticiones por ajuste de medida")
    common.add_argument("--grid-points", type=int, help="Puntos de la malla de Bloch")
    common.add_argument("--verbose", action="store_true", help="Mostrar información detallada")
    common.add_argument("--log-file", help="Fichero de log adicional")
    return common


def build_parser():
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="ionscatter",
        description="Simulador del canal de dispersión de un fotón por un ion atrapado",
        epilog="Precedencia: valores por defecto < --config < flags de la línea de órdenes.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("process", parents=[common], help="χ ideal, promediada y reconstruida; elipsoide")
    sub.add_parser("maps", parents=[common], help="Mapas de entropía y concurrencia")
    scan = sub.add_parser("scan", parents=[common], help="Barrido de polarización con la λ/2")
    scan.add_argument("--initial-state", choices=("x", "-x", "y", "-y", "z", "-z"), default=None,
                      help="Estado de espín inicial")
    scan.add_argument("--angles-deg", type=_float_list, default=None,
                      help="Ángulos de la λ/2 en grados separados por comas")
    sweep = sub.add_parser("sweep", parents=[common], help="Relación de aspecto frente a la ventana de fase")
    sweep.add_argument("--windows", type=_float_list, default=None,
                       help="Anchos de ventana en grados separados por comas")
    sub.add_parser("selftest", parents=[common], help="Criterios de aceptación")
    return parser


def _extra_arguments(args):
    if args.command == "scan":
        return {"initial_state": args.initial_state, "angles_deg": args.angles_deg}
    if args.command == "sweep":
        return {"windows_deg": args.windows}
    return {}


def main(argv=None):
    args = build_parser().parse_args(argv)
    colorama.init()
    opts = vars(args)
    configurar_logging(opts.get("verbose", False), opts.get("log_file"))

    report = RunReport(args.command)
    handler = ReportLogHandler(report)
    logging.getLogger("ionscatter").addHandler(handler)
    code = EXIT_OK
    config = None
    try:
        config = cargar_configuracion(
            opts.get("config"), seed=opts.get("seed"), output_dir=opts.get("output_dir"),
            noiseless=opts.get("noiseless"), window_deg=opts.get("window_deg"), na=opts.get("na"),
            background=opts.get("background"), counts=opts.get("counts"), grid_points=opts.get("grid_points"))
        report = _rebind(report, handler, RunReport(args.command, config))
        print("=" * 60)
        print(f"ionscatter {args.command} -> {config.output_dir}")
        print("=" * 60)
        COMMANDS[args.command](config, report, **_extra_arguments(args))
    except ConfigError as e:
        report.add_error(f"Error de configuración: {e}")
        code = EXIT_CONFIG
    except OSError as e:
        report.add_error(f"Error de E/S: {e}")
        code = EXIT_IO
    except (NumericalError, InsufficientDataError) as e:
        report.add_error(f"Fallo numérico: {e}")
        code = EXIT_NUMERICAL
    except (np.linalg.LinAlgError, FloatingPointError) as e:
        report.add_error(f"Fallo numérico: {type(e).__name__}: {e}")
        code = EXIT_NUMERICAL
    except ScatterError as e:
        report.add_error(str(e))
        code = EXIT_OTHER
    except Exception as e:
        logger.exception("Error inesperado en %s", args.command)
        report.add_error(f"Error inesperado: {type(e).__name__}: {e}")
        code = EXIT_OTHER
    finally:
        logging.getLogger("ionscatter").removeHandler(handler)

    if code == EXIT_OK and not report.ok:
        code = EXIT_OTHER
    print("\n" + report.get_summary_text(color=sys.stdout.isatty()))
    if config is not None and code != EXIT_IO:
        try:
            path = report.save(io.ensure_output_dir(config.output_dir) / "run_summary.json")
            print(f"\nInforme guardado en: {path}")
        except OSError as e:
            print(f"\nNo se pudo guardar el informe: {e}")
            code = code or EXIT_IO
    return code


def _rebind(old, handler, new):
    """Pasa al informe definitivo los avisos recogidos mientras se cargaba la configuración."""
    for warning in old.report["warnings"]:
        new.add_warning(warning)
    handler.run_report = new
    return new


if __name__ == "__main__":
    sys.exit(main())
