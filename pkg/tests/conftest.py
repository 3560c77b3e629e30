from pathlib import Path

import numpy as np
import pytest

from potential import Delta, Potential, Segment, barrier_on_step, pure_step, step_delta

POTENTIALS_DIR = Path(__file__).resolve().parents[1] / "potentials"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def step():
    return pure_step(1.0)


@pytest.fixture
def fig1():
    """Step plus delta with V0 = 1, V1 = 0.01 in atomic units."""
    return step_delta(1.0, 0.01)


@pytest.fixture
def barrier():
    return barrier_on_step(1.0, 2.0)


@pytest.fixture
def layered():
    """Two segments and a delta on each side of the origin."""
    return Potential(
        0.8,
        -0.6,
        0.9,
        (Segment(-0.6, 0.0, 0.4), Segment(0.0, 0.9, 1.7)),
        (Delta(-0.2, 0.25), Delta(0.5, -0.15)),
    )


@pytest.fixture
def potentials_dir():
    return POTENTIALS_DIR
