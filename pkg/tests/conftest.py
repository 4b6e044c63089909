"""Shared fixtures: the standard torsional/harmonic setups used across the
suite and a session cache directory for grid-reference results."""

from __future__ import annotations

import numpy as np
import pytest

from egorov import harmonic_potential, torsional_potential
from egorov.potentials import Hamiltonian


@pytest.fixture
def torsional_2d():
    return torsional_potential(2)


@pytest.fixture
def torsional_1d():
    return torsional_potential(1)


@pytest.fixture
def harmonic_2d():
    return harmonic_potential(2, (1.0, 2.0))


@pytest.fixture
def ham_torsional_2d(torsional_2d):
    return Hamiltonian(torsional_2d)


@pytest.fixture
def ham_harmonic_2d(harmonic_2d):
    return Hamiltonian(harmonic_2d)


@pytest.fixture
def z0():
    """The reference initial phase-space point (q, p) = ((1, 0.5), (0, 0))."""
    return np.array([1.0, 0.5, 0.0, 0.0])


@pytest.fixture(scope="session")
def grid_cache(tmp_path_factory):
    """Session-wide cache directory so repeated grid-reference runs inside
    one pytest invocation are computed once."""
    return tmp_path_factory.mktemp("grid_cache")
