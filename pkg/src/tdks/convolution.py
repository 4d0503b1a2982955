"""Zero-extended convolution of grid fields with tabulated even kernels.

A field on the interior points is extended by zero outside the box and
convolved with a kernel sampled at the grid offsets.  Offsets between
interior points span ``-(n-1)..(n-1)`` per axis, so a circular transform
on the doubled grid gives the linear convolution exactly.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .fields import GridSpec, fft_workers


def offset_distances(grid: GridSpec) -> np.ndarray:
    """|z| for every offset on the doubled circular grid."""
    axes = []
    for n, h in zip(grid.points, grid.spacing):
        idx = np.arange(2 * n)
        idx = np.where(idx < n, idx, idx - 2 * n)
        # index n is never reached by a difference of two interior indices
        axes.append(h * idx.astype(float))
    x, y, z = np.meshgrid(*axes, indexing="ij")
    return np.sqrt(x * x + y * y + z * z)


def offset_vectors(grid: GridSpec, radius_cells: tuple[int, int, int]):
    """Offset index and position arrays for a box of half-widths ``radius_cells``."""
    idx = [np.arange(-r, r + 1) for r in radius_cells]
    pos = [h * i for h, i in zip(grid.spacing, idx)]
    return idx, np.meshgrid(*pos, indexing="ij")


class GridConvolver:
    """out[p] = sum_q K(x_p - x_q) f[q] dV for an even kernel K."""

    def __init__(self, grid: GridSpec, kernel_on_offsets: np.ndarray):
        self.grid = grid
        self.shape2 = tuple(2 * n for n in grid.points)
        if kernel_on_offsets.shape != self.shape2:
            raise ValueError("kernel must be tabulated on the doubled grid")
        self.kernel = kernel_on_offsets
        self._kernel_hat = scipy.fft.rfftn(kernel_on_offsets * grid.cell_volume,
                                           workers=fft_workers())
        self.kernel_l1 = float(np.sum(np.abs(kernel_on_offsets)) * grid.cell_volume)

    @classmethod
    def radial(cls, grid: GridSpec, profile) -> GridConvolver:
        return cls(grid, profile(offset_distances(grid)))

    def __call__(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.ndim == 4:
            return np.stack([self(fk) for fk in f])
        if np.iscomplexobj(f):
            return self(f.real) + 1j * self(f.imag)
        if not np.any(f):
            return np.zeros(self.grid.shape)
        nx, ny, nz = self.grid.points
        fhat = scipy.fft.rfftn(f, s=self.shape2, workers=fft_workers())
        out = scipy.fft.irfftn(fhat * self._kernel_hat, s=self.shape2, workers=fft_workers())
        return out[:nx, :ny, :nz].copy()


def direct_convolution(grid: GridSpec, f: np.ndarray, kernel) -> np.ndarray:
    """O(n^2) reference sum, for tests on small grids."""
    pts = np.stack([c.ravel() for c in grid.mesh()], axis=1)
    vals = np.asarray(f).ravel()
    out = np.empty(len(pts), dtype=np.result_type(vals.dtype, float))
    for i, p in enumerate(pts):
        r = np.sqrt(np.sum((pts - p) ** 2, axis=1))
        out[i] = np.sum(kernel(r) * vals) * grid.cell_volume
    return out.reshape(grid.shape)
