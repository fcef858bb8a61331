import numpy as np
import pytest

from gmsfem_wave import build_hierarchy
from gmsfem_wave.media import constant_field, synth_periodic_inclusions


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small():
    """16x16 fine cells in 2x2 blocks of 8x8 cells, contrast-10 inclusions."""
    fine, coarse = build_hierarchy(16, 16, 2, 2)
    field = synth_periodic_inclusions(fine, 1.0, 10.0, 4)
    return fine, coarse, field


@pytest.fixture(scope="session")
def small_unit():
    fine, coarse = build_hierarchy(16, 16, 2, 2)
    return fine, coarse, constant_field(fine, 1.0)
