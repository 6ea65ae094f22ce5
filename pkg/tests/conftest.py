"""Fixtures comunes de las pruebas."""

import math

import numpy as np
import pytest

from ionscatter import quantum_core as qc
from ionscatter import scattering as sc


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


@pytest.fixture
def ideal_geometry():
    return sc.ScatteringGeometry.ideal()


@pytest.fixture
def default_geometry():
    return sc.ScatteringGeometry()


@pytest.fixture
def ideal_chi():
    return sc.chi_single_direction(math.pi / 2, 0.0)


@pytest.fixture
def ideal_joint_map(ideal_geometry):
    return sc.averaged_joint_map(ideal_geometry)


@pytest.fixture
def bell_state():
    """(|−x̂,E₊⟩ + |x̂,E₋⟩)/√2 en la base documentada."""
    ket = np.zeros(4, dtype=complex)
    ket[1] = ket[2] = 1 / np.sqrt(2)
    return qc.JointState(np.outer(ket, ket.conj()))


@pytest.fixture
def cardinal():
    return qc.cardinal_state
