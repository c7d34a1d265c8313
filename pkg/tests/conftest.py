import numpy as np
import pytest

from batchlab.spectral import Grid, SpectralField, dealias, transform_forward


def random_real_field(grid, rank="scalar", seed=0, mean_zero=True, dealiased=True):
    """Deterministic random field for tests, built from real samples so the
    reality invariant holds by construction."""
    rng = np.random.default_rng(seed)
    shape = grid.shape if rank == "scalar" else (grid.dim,) + grid.shape
    f = transform_forward(rng.standard_normal(shape), grid)
    if mean_zero:
        idx = (0,) * grid.dim
        if rank == "vector":
            f.coeffs[(slice(None),) + idx] = 0.0
        else:
            f.coeffs[idx] = 0.0
    if dealiased:
        f = dealias(f)
    return f


def random_divfree_field(grid, seed=0):
    from batchlab.spectral import project_leray
    return project_leray(random_real_field(grid, "vector", seed=seed))


@pytest.fixture
def grid2d():
    return Grid(2, 16)


@pytest.fixture
def grid2d_32():
    return Grid(2, 32)


@pytest.fixture
def grid3d():
    return Grid(3, 16)
