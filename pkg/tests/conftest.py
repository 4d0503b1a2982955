import numpy as np
import pytest

from tdks.fields import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid8():
    return GridSpec.cube(8.0, 8)


@pytest.fixture
def unit8():
    return GridSpec.cube(1.0, 8)


def dense_laplacian(grid):
    """Dense 7-point Laplacian built entry by entry, independent of the sparse kron form."""
    nx, ny, nz = grid.points
    hx, hy, hz = grid.spacing
    idx = np.arange(grid.size).reshape(grid.shape)
    A = np.zeros((grid.size, grid.size))
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                p = idx[i, j, k]
                A[p, p] = -2 / hx ** 2 - 2 / hy ** 2 - 2 / hz ** 2
                for (di, dj, dk), h in (((1, 0, 0), hx), ((0, 1, 0), hy), ((0, 0, 1), hz)):
                    for s in (-1, 1):
                        a, b, c = i + s * di, j + s * dj, k + s * dk
                        if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz:
                            A[p, idx[a, b, c]] = 1 / h ** 2
    return A
