"""Pruebas de las magnitudes derivadas: elipsoides, barridos, mapas y lectura puntero."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ionscatter import analysis as an
from ionscatter import quantum_core as qc
from ionscatter import scattering as sc
from ionscatter.errors import InvalidInputError, NumericalError
from ionscatter.selftest import ratio_closed_form


class TestBlochGrid:

    def test_fibonacci_points_are_unit_vectors(self):
        grid = an.BlochGrid.fibonacci(2048)
        assert len(grid) == 2048
        assert_allclose(np.linalg.norm(grid.points, axis=1), 1.0, atol=1e-12)
        assert grid.spacing == pytest.approx(math.sqrt(4 * math.pi / 2048))

    def test_fibonacci_is_roughly_uniform(self):
        points = an.BlochGrid.fibonacci(4096).points
        assert_allclose(points.mean(axis=0), 0.0, atol=1e-2)

    def test_rejects_points_off_the_sphere(self):
        with pytest.raises(InvalidInputError):
            an.BlochGrid([[0.5, 0.0, 0.0]])
        with pytest.raises(InvalidInputError):
            an.BlochGrid.fibonacci(0)

    def test_states_are_pure(self):
        for rho in an.BlochGrid.fibonacci(16).states():
            assert qc.purity(rho) == pytest.approx(1.0)


class TestEllipsoid:

    def test_ideal_channel_collapses_onto_pointer_axis(self, ideal_chi):
        grid = an.BlochGrid.fibonacci(256)
        images = an.collapse_surface(ideal_chi, grid)
        assert_allclose(images[:, 1:], 0.0, atol=1e-12)
        assert_allclose(images[:, 0], grid.points[:, 0], atol=1e-12)
        summary = an.ellipsoid_summary(ideal_chi)
        assert_allclose(summary.semi_axes, [1, 0, 0], atol=1e-12)
        assert summary.unbounded and math.isinf(summary.in_plane_aspect_ratio)

    def test_collapse_requires_cptp(self):
        with pytest.raises(InvalidInputError):
            an.collapse_surface(qc.ProcessMatrix(np.diag([0.5, 0, 0, 0])), an.BlochGrid.fibonacci(8))

    def test_full_disk_limit(self, default_geometry):
        summary = an.ellipsoid_summary(sc.chi_averaged(default_geometry.with_window_deg(360)))
        assert summary.in_plane_aspect_ratio == pytest.approx(1.0, abs=0.02)
        assert summary.semi_axes[2] == pytest.approx(0.0325, abs=5e-3)

    @pytest.mark.parametrize("center_deg", [0, 30, 60, 90])
    def test_main_axis_follows_phase_center(self, center_deg):
        geometry = sc.ScatteringGeometry(phase_center=math.radians(center_deg))
        azimuth = math.degrees(an.ellipsoid_summary(sc.chi_averaged(geometry)).main_axis_azimuth)
        assert abs((azimuth - center_deg + 90) % 180 - 90) < 0.5

    def test_fit_recovers_synthetic_ellipsoid(self):
        rotation = np.linalg.qr(np.random.default_rng(5).normal(size=(3, 3)))[0]
        M = rotation @ np.diag([0.9, 0.5, 0.3]) @ rotation.T
        center = np.array([0.05, -0.02, 0.1])
        points = an.BlochGrid.fibonacci(500).points @ M.T + center
        fitted = an.fit_ellipsoid(points)
        assert_allclose(fitted.semi_axes, [0.9, 0.5, 0.3], atol=1e-8)
        assert_allclose(fitted.center, center, atol=1e-8)

    def test_fit_matches_affine_axes_for_random_channels(self, rng):
        grid = an.BlochGrid.fibonacci(200)
        for _ in range(100):
            process = qc.chi_from_kraus(qc.random_channel(rng))
            summary = an.ellipsoid_summary(process)
            fitted = an.fit_ellipsoid(an.collapse_surface(process, grid))
            assert_allclose(fitted.semi_axes, summary.semi_axes, atol=1e-3)
            assert_allclose(fitted.center, summary.center, atol=1e-3)

    def test_fit_needs_enough_points(self):
        with pytest.raises(InvalidInputError):
            an.fit_ellipsoid(np.eye(3))

    def test_summary_dict_has_azimuth(self, default_geometry):
        data = an.ellipsoid_summary(sc.chi_averaged(default_geometry)).to_dict()
        assert set(data) >= {"semi_axes", "center", "in_plane_aspect_ratio", "main_axis_azimuth_deg"}


class TestAspectRatioSweep:

    def test_matches_closed_form(self):
        widths = (40, 60, 90, 120, 140)
        sweep = an.aspect_ratio_sweep(widths)
        oracle = np.array([ratio_closed_form(w) for w in widths])
        assert_allclose(sweep.ratios, oracle, rtol=0.01)
        assert sweep.monotone

    def test_closed_form_landmarks(self):
        assert ratio_closed_form(180) == pytest.approx(1.0)
        assert ratio_closed_form(360) == pytest.approx(1.0)
        assert ratio_closed_form(270) > 1.0

    def test_non_monotone_above_half_turn_is_reported(self):
        sweep = an.aspect_ratio_sweep((90, 180, 270, 360), nodes=32)
        assert not sweep.monotone
        assert sweep.ratios[0] > sweep.ratios[1]
        assert list(sweep.to_frame().columns) == ["width_deg", "ratio", "unbounded"]

    def test_widths_are_sorted(self):
        sweep = an.aspect_ratio_sweep((120, 40), nodes=16)
        assert list(sweep.widths_deg) == [40, 120]

    def test_invalid_widths(self):
        with pytest.raises(InvalidInputError):
            an.aspect_ratio_sweep((0, 90))
        with pytest.raises(InvalidInputError):
            an.aspect_ratio_sweep(())

    def test_tomography_ratios_match_analytic_without_noise(self):
        grid = an.BlochGrid.fibonacci(64)
        sweep = an.aspect_ratio_sweep((90, 40), nodes=16)
        fitted = an.tomography_aspect_ratios((90, 40), grid=grid, nodes=16)
        assert_allclose(fitted, sweep.ratios, rtol=1e-4)

    def test_sampled_tomography_ratios(self):
        grid = an.BlochGrid.fibonacci(64)
        first = an.tomography_aspect_ratios((60, 120), grid=grid, shots=900, seed=2, nodes=16)
        second = an.tomography_aspect_ratios((60, 120), grid=grid, shots=900, seed=2, nodes=16)
        assert_allclose(first, second)
        with pytest.raises(InvalidInputError):
            an.tomography_aspect_ratios((60,), grid=grid, shots=900, nodes=16)

    def test_numerical_aperture_override(self):
        sweep = an.aspect_ratio_sweep((60,), numerical_aperture=0.1, nodes=16)
        assert sweep.ratios[0] == pytest.approx(ratio_closed_form(60), rel=0.01)


class TestMaps:

    def test_entropy_sieve_on_cardinal_states(self, ideal_chi):
        grid = an.BlochGrid.from_labels(("x", "-x", "y", "-y", "z", "-z"))
        values = an.entropy_map(ideal_chi, grid).values
        assert_allclose(values, [0, 0] + [math.log(2)] * 4, atol=1e-9)

    def test_entropy_minimum_near_pointer_axis(self, default_geometry):
        grid = an.BlochGrid.fibonacci(2048)
        low = an.entropy_map(sc.chi_averaged(default_geometry), grid).argmin()
        assert min(np.linalg.norm(low - [1, 0, 0]), np.linalg.norm(low + [1, 0, 0])) <= grid.spacing

    def test_ideal_concurrence_structure(self, ideal_joint_map):
        angles = np.linspace(0, 2 * math.pi, 12, endpoint=False)
        circle = an.BlochGrid(np.stack([np.zeros_like(angles), np.cos(angles), np.sin(angles)], axis=1))
        assert_allclose(an.concurrence_map(None, 0.0, circle, joint_map=ideal_joint_map).values, 1.0, atol=1e-9)
        pointers = an.BlochGrid.from_labels(("x", "-x"))
        assert_allclose(an.concurrence_map(None, 0.0, pointers, joint_map=ideal_joint_map).values, 0.0, atol=1e-9)

    def test_concurrence_with_default_noise(self, default_geometry):
        grid = an.BlochGrid.fibonacci(2048)
        conc = an.concurrence_map(default_geometry, sc.NoiseModel(), grid, nodes=32)
        assert 0.55 <= conc.values.max() <= 0.9
        assert conc.values.min() < 0.05
        frame = conc.to_frame()
        assert list(frame.columns) == ["bx", "by", "bz", "concurrence"]

    def test_concurrence_from_cardinal_outputs_matches_direct_map(self, default_geometry):
        joint_map = sc.averaged_joint_map(default_geometry, nodes=16)
        noise = sc.NoiseModel()
        outputs = {label: sc.scattered_joint_states(qc.cardinal_state(label).rho, joint_map, noise)
                   for label in ("x", "-x", "y", "-y", "z", "-z")}
        grid = an.BlochGrid.fibonacci(128)
        combined = an.concurrence_map_from_outputs(outputs, grid)
        direct = an.concurrence_map(default_geometry, noise, grid, joint_map=joint_map)
        assert_allclose(combined.values, direct.values, atol=1e-6)

    def test_cardinal_combination_needs_all_six(self, ideal_joint_map):
        outputs = {label: ideal_joint_map.apply(qc.cardinal_state(label)) for label in ("x", "-x", "y", "z")}
        with pytest.raises(InvalidInputError):
            an.combine_cardinal_outputs(outputs, an.BlochGrid.fibonacci(8))

    def test_cardinal_combination_is_physical_for_noisy_outputs(self, rng):
        outputs = {label: qc.random_density(rng, 4) for label in ("x", "-x", "y", "-y", "z", "-z")}
        states = an.combine_cardinal_outputs(outputs, an.BlochGrid.fibonacci(64))
        assert_allclose(np.trace(states, axis1=1, axis2=2).real, 1.0, atol=1e-12)
        assert np.linalg.eigvalsh(states).min() >= -1e-12

    def test_conditional_collapse_marks_impossible_outcomes(self, ideal_joint_map):
        grid = an.BlochGrid.from_labels(("x", "-x", "y"))
        points, probs = an.conditional_collapse(ideal_joint_map.conditional_spin_process("E-"), grid)
        assert_allclose(probs, [1.0, 0.0, 0.5], atol=1e-9)
        assert_allclose(points[0], [1, 0, 0], atol=1e-9)
        assert np.isnan(points[1]).all()
        assert_allclose(points[2], [1, 0, 0], atol=1e-9)


class TestPolarizationScan:

    def test_pointer_state_follows_sin_squared(self, cardinal):
        angles = np.radians(np.arange(0, 90.1, 2.5))
        scan = an.polarization_scan(cardinal("x"), angles)
        assert_allclose(scan.probabilities, np.sin(2 * angles) ** 2, atol=1e-9)
        assert scan.visibility == pytest.approx(1.0, abs=1e-9)
        assert scan.fit == pytest.approx((0.5, -0.5, 0.0), abs=1e-9)

    def test_superposition_shows_no_fringe(self, cardinal):
        angles = np.radians(np.arange(0, 90.1, 2.5))
        scan = an.polarization_scan(cardinal("y"), angles, noise=0.125)
        assert scan.visibility == pytest.approx(0.0, abs=1e-9)
        assert_allclose(scan.probabilities, 0.5, atol=1e-9)

    def test_sampled_scan_is_reproducible(self, cardinal):
        angles = np.radians(np.arange(0, 90.1, 5))
        a = an.polarization_scan(cardinal("x"), angles, shots=400, seed=3)
        b = an.polarization_scan(cardinal("x"), angles, shots=400, seed=3)
        assert_allclose(a.probabilities, b.probabilities)
        assert a.exact is not None and 0.8 < a.visibility < 1.2
        assert "p_exact" in a.to_frame().columns

    def test_sampled_scan_needs_seed(self, cardinal):
        with pytest.raises(InvalidInputError):
            an.polarization_scan(cardinal("x"), np.radians([0, 10, 20]), shots=100)

    def test_needs_three_angles(self, cardinal):
        with pytest.raises(InvalidInputError):
            an.polarization_scan(cardinal("x"), [0.0, 0.1])


class TestPointerReadout:

    def test_ideal_and_blind_limits(self):
        assert an.pointer_readout_correlation() == pytest.approx(1.0, abs=1e-9)
        assert an.pointer_readout_correlation(noise=1.0) == pytest.approx(0.5, abs=1e-9)

    def test_default_geometry_and_noise(self, default_geometry):
        value = an.pointer_readout_correlation(default_geometry, sc.NoiseModel())
        assert value == pytest.approx(0.93, abs=0.01)


def test_numerical_error_is_arithmetic():
    assert issubclass(NumericalError, ArithmeticError)
