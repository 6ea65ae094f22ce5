"""Criterios de aceptación ejecutables desde `ionscatter selftest`."""

import logging
import math

import numpy as np

from ionscatter import analysis as an
from ionscatter import quantum_core as qc
from ionscatter import scattering as sc
from ionscatter import tomography as tomo

logger = logging.getLogger(__name__)

CHECK_WINDOWS_DEG = (40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140)


def ratio_closed_form(width_deg):
    """(1 + |sinc W|)/(1 − |sinc W|): relación en el plano x-y con medida uniforme en φ."""
    w = math.radians(width_deg)
    s = abs(math.sin(w) / w)
    return math.inf if s >= 1 else (1 + s) / (1 - s)


def _ideal_chi():
    return sc.chi_single_direction(math.pi / 2, 0.0)


def check_closed_form(report, rng):
    ok = np.allclose(sc.chi_single_direction(math.pi / 2, 0).chi, np.diag([0.5, 0.5, 0, 0]), atol=1e-12)
    ok &= np.allclose(sc.chi_single_direction(0, 1.234).chi, np.diag([0, 0.5, 0.5, 0]), atol=1e-12)
    worst = 0.0
    for theta, phi in zip(rng.uniform(0, math.pi, 50), rng.uniform(0, 2 * math.pi, 50)):
        kraus = qc.chi_from_kraus(sc.scattering_kraus(sc.direction(theta, phi)))
        worst = max(worst, np.abs(kraus.chi - sc.chi_single_direction(theta, phi).chi).max())
    return report.add_check("1. χ analítica y oráculo de Kraus", bool(ok and worst < 1e-9),
                            f"desviación máxima {worst:.2e}")


def check_predictability_sieve(report):
    grid = an.BlochGrid.from_labels(("x", "-x", "y", "-y", "z", "-z"))
    values = an.entropy_map(_ideal_chi(), grid).values
    ok = np.allclose(values, [0, 0, math.log(2), math.log(2), math.log(2), math.log(2)], atol=1e-9)
    fib = an.BlochGrid.fibonacci(2048)
    argmin = an.entropy_map(sc.chi_averaged(sc.ScatteringGeometry()), fib).argmin()
    dist = min(np.linalg.norm(argmin - [1, 0, 0]), np.linalg.norm(argmin + [1, 0, 0]))
    return report.add_check("2. Criba de predictibilidad", bool(ok and dist <= fib.spacing),
                            f"argmin a {dist:.4f} rad de ±x̂ (separación {fib.spacing:.4f})")


def check_entanglement(report):
    ideal = sc.averaged_joint_map(sc.ScatteringGeometry.ideal())
    angles = np.linspace(0, 2 * math.pi, 16, endpoint=False)
    circle = an.BlochGrid(np.stack([np.zeros_like(angles), np.cos(angles), np.sin(angles)], axis=1))
    on_circle = an.concurrence_map(None, 0.0, circle, joint_map=ideal).values
    pointers = an.concurrence_map(None, 0.0, an.BlochGrid.from_labels(("x", "-x")), joint_map=ideal).values
    ok_ideal = np.allclose(on_circle, 1, atol=1e-9) and np.allclose(pointers, 0, atol=1e-9)
    grid = an.BlochGrid.fibonacci(2048)
    conc = an.concurrence_map(sc.ScatteringGeometry(), sc.NoiseModel(), grid)
    c_max, c_min = conc.values.max(), conc.values.min()
    low = conc.argmin()
    near = min(np.linalg.norm(low - [1, 0, 0]), np.linalg.norm(low + [1, 0, 0])) <= 2 * grid.spacing
    ok = ok_ideal and 0.55 <= c_max <= 0.9 and c_min < 0.05 and near
    return report.add_check("3. Estructura de entrelazamiento", bool(ok),
                            f"C máx {c_max:.3f}, C mín {c_min:.4f}")


def check_disk_limit(report):
    disk = an.ellipsoid_summary(sc.chi_averaged(sc.ScatteringGeometry().with_window_deg(360)))
    ok = abs(disk.in_plane_aspect_ratio - 1) <= 0.02 and disk.semi_axes[2] < 0.05
    worst = 0.0
    for center_deg in (0, 30, 60, 90):
        geometry = sc.ScatteringGeometry(phase_center=math.radians(center_deg))
        azimuth = math.degrees(an.ellipsoid_summary(sc.chi_averaged(geometry)).main_axis_azimuth)
        worst = max(worst, abs((azimuth - center_deg + 90) % 180 - 90))
    return report.add_check("4. Límite de disco y eje principal", bool(ok and worst < 0.5),
                            f"relación {disk.in_plane_aspect_ratio:.4f}, tercer eje {disk.semi_axes[2]:.4f}, "
                            f"error de azimut {worst:.3f}°")


def check_aspect_curve(report):
    sweep = an.aspect_ratio_sweep(CHECK_WINDOWS_DEG)
    oracle = np.array([ratio_closed_form(w) for w in sweep.widths_deg])
    worst = float(np.max(np.abs(sweep.ratios / oracle - 1)))
    return report.add_check("5. Curva de relación de aspecto", bool(sweep.monotone and worst < 0.01),
                            f"error relativo máximo {worst:.2e}")


def check_tomography(report, seed, trials=500):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        channel = qc.random_channel(rng, n_kraus=3)
        truth = qc.chi_from_kraus(channel)
        rec = tomo.reconstruct_process_from_counts(None, tomo.exact_process_data(channel))
        worst = max(worst, float(np.linalg.norm(rec.chi - truth.chi)))
    truth = sc.chi_averaged(sc.ScatteringGeometry())
    seeds = np.random.SeedSequence(seed).spawn(trials)
    errors = [np.linalg.norm(tomo.reconstruct_process_from_counts(
        None, tomo.simulate_process_counts(truth, None, 900, int(s.generate_state(1)[0]))).chi - truth.chi)
        for s in seeds]
    fraction = float(np.mean(np.array(errors) <= 0.15))

    shots = np.array([1e2, 1e3, 1e4, 1e5])
    mean_errors = []
    for n in shots:
        errs = [np.linalg.norm(tomo.reconstruct_process_from_counts(
            None, tomo.simulate_process_counts(truth, None, int(n), int(seed) + k)).chi - truth.chi)
            for k in range(40)]
        mean_errors.append(np.mean(errs))
    slope = float(np.polyfit(np.log(shots), np.log(mean_errors), 1)[0])
    ok = worst < 1e-9 and fraction >= 0.95 and abs(slope + 0.5) <= 0.1
    return report.add_check("6. Tomografía", bool(ok),
                            f"sin ruido {worst:.1e}, N=900 dentro de 0.15: {fraction:.1%}, pendiente {slope:.3f}")


def check_conditional_collapse(report):
    joint = sc.averaged_joint_map(sc.ScatteringGeometry.ideal())
    data = tomo.exact_process_data(joint, None, tomo.process_settings(conditional=True))
    grid = an.BlochGrid.fibonacci(512)
    worst = 0.0
    for outcome, target in (("E-", [1, 0, 0]), ("E+", [-1, 0, 0])):
        points, _ = an.conditional_collapse(tomo.conditional_process(outcome, None, data), grid)
        valid = ~np.isnan(points).any(axis=1)
        worst = max(worst, float(np.linalg.norm(points[valid] - target, axis=1).max()))
    return report.add_check("7. Colapso condicionado", worst <= 0.02, f"distancia máxima {worst:.2e}")


def check_scans(report):
    angles = np.radians(np.arange(0, 90.1, 2.5))
    v_pointer = an.polarization_scan(qc.cardinal_state("x"), angles).visibility
    v_y = an.polarization_scan(qc.cardinal_state("y"), angles, noise=0.125).visibility
    ideal = an.pointer_readout_correlation()
    blind = an.pointer_readout_correlation(noise=1.0)
    measured = an.pointer_readout_correlation(sc.ScatteringGeometry(), sc.NoiseModel())
    ok = (abs(v_pointer - 1) < 1e-9 and abs(v_y) < 1e-9 and abs(ideal - 1) < 1e-9 and abs(blind - 0.5) < 1e-9
          and 0.7 < measured < 0.95)
    return report.add_check("8. Barridos de polarización", bool(ok),
                            f"V(x̂)={v_pointer:.6f}, V(ŷ)={v_y:.1e}, correlación {measured:.3f}")


def check_determinism(report, seed):
    first = tomo.count_records_frame(tomo.simulate_process_counts(_ideal_chi(), None, 900, seed)).to_csv()
    second = tomo.count_records_frame(tomo.simulate_process_counts(_ideal_chi(), None, 900, seed)).to_csv()
    geometry = sc.ScatteringGeometry()
    mc_serial, _ = sc.monte_carlo_chi(geometry, samples=200_000, seed=seed)
    mc_parallel, _ = sc.monte_carlo_chi(geometry, samples=200_000, seed=seed, workers=4)
    ok = first == second and np.array_equal(mc_serial.chi, mc_parallel.chi)
    return report.add_check("9. Determinismo", bool(ok))


def run_selftest(report, seed=0):
    rng = np.random.default_rng(seed)
    checks = [
        lambda: check_closed_form(report, rng),
        lambda: check_predictability_sieve(report),
        lambda: check_entanglement(report),
        lambda: check_disk_limit(report),
        lambda: check_aspect_curve(report),
        lambda: check_tomography(report, seed),
        lambda: check_conditional_collapse(report),
        lambda: check_scans(report),
        lambda: check_determinism(report, seed),
    ]
    for i, check in enumerate(checks, start=1):
        print(f"\n[{i}/{len(checks)}] Ejecutando criterio {i}...")
        check()
    return report.ok
