"""Shared builders for the test suite."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from fixtures.generators import FIXED, PIN, cantilever, random_model, spring  # noqa: E402
from sso_model import BeamColumnSpec, ModelBuilder, QuadShellSpec  # noqa: E402


def rigid_translations(n_nodes: int) -> np.ndarray:
    """(3, 6*n_nodes) unit translations along X, Y and Z."""
    modes = np.zeros((3, 6 * n_nodes))
    for axis in range(3):
        modes[axis, axis::6] = 1.0
    return modes


def rigid_rotation(coords: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Small rigid rotation: u_i = omega x x_i, theta_i = omega."""
    out = np.zeros(6 * len(coords))
    for i, x in enumerate(coords):
        out[6 * i:6 * i + 3] = np.cross(omega, x)
        out[6 * i + 3:6 * i + 6] = omega
    return out


def spring_with_isolated_node():
    """The axial spring plus a node no element or support touches."""
    b = ModelBuilder()
    b.add_node(1, 0.0, 0.0, 0.0).add_node(2, 1.0, 0.0, 0.0).add_node(3, 5.0, 5.0, 5.0)
    b.add_beamcol(BeamColumnSpec(1, 1, 2, E=2.0, G=1.0, Iy=1.0, Iz=1.0, J=1.0, A=1.0))
    b.add_support(1, FIXED)
    b.add_support(2, (0, 1, 1, 1, 1, 1))
    b.add_nodal_load(2, (4.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    return b.finalize()


def single_quad(coords=None, t=0.1, E=1.0e4, nu=0.3, **kwargs):
    """One shell on a unit square (or the given corners), two corners pinned, one roller."""
    coords = coords if coords is not None else [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
    b = ModelBuilder()
    for i, (x, y, z) in enumerate(coords):
        b.add_node(i + 1, x, y, z)
    b.add_quad(QuadShellSpec(1, (1, 2, 3, 4), t, E, nu, **kwargs))
    b.add_support(1, FIXED)
    b.add_support(2, PIN)
    b.add_support(4, PIN)
    b.add_nodal_load(3, (0.0, 0.0, -1.0, 0.0, 0.0, 0.0))
    return b.finalize()


@pytest.fixture
def spring_model():
    return spring()


@pytest.fixture
def cantilever_model():
    return cantilever()


@pytest.fixture
def small_random_model():
    return random_model(seed=3)


@pytest.fixture(params=["dense", "sparse"])
def solver_kind(request):
    return request.param
