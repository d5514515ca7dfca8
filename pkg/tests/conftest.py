from __future__ import annotations

import numpy as np
import pytest

from chiralflow.model import GaussianPacket, Grid, PhysParams, make_gaussian_wavefunction


def circ_dist(a: float, b: float, length: float) -> float:
    """Distance between ring coordinates a and b."""
    d = (a - b) % length
    return min(d, length - d)


@pytest.fixture
def params() -> PhysParams:
    return PhysParams()


@pytest.fixture
def ring40() -> Grid:
    return Grid.ring(40.0, 512)


@pytest.fixture
def sigma1_psi(ring40):
    return make_gaussian_wavefunction(GaussianPacket(sigma=1.0), ring40)


@pytest.fixture(autouse=True)
def _seeded_numpy():
    # tests draw their own generators; this guards against accidental
    # dependence on global RNG state
    state = np.random.get_state()
    yield
    np.random.set_state(state)
