"""Mollification by the standard C-infinity bump.

The kernel is sampled on grid offsets and renormalised so that its discrete
integral is exactly one, which makes the L^p nonexpansion hold to rounding.
"""

from __future__ import annotations

import math

import numpy as np

from .convolution import GridConvolver, offset_distances, offset_vectors
from .errors import KernelUnderresolved
from .fields import GridSpec, l2_norm


def bump(r: np.ndarray) -> np.ndarray:
    """Unnormalised exp(-1/(1-r^2)) on r < 1, zero outside."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    out = np.zeros_like(r)
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


class MollifierKernel:
    def __init__(self, grid: GridSpec, epsilon: float):
        if not epsilon >= 2 * grid.h * (1 - 1e-12):
            raise KernelUnderresolved(
                f"epsilon={epsilon:g} is below twice the grid spacing ({2 * grid.h:g})")
        self.grid = grid
        self.epsilon = float(epsilon)
        self.radius_cells = tuple(int(math.ceil(epsilon / h)) for h in grid.spacing)
        _, (x, y, z) = offset_vectors(grid, self.radius_cells)
        raw = bump(np.sqrt(x * x + y * y + z * z) / epsilon)
        # eps^-3 scaling folded into the normalisation constant
        self.norm = 1.0 / (raw.sum() * grid.cell_volume)
        self.stencil = raw * self.norm
        self._conv = GridConvolver(grid, bump(offset_distances(grid) / epsilon) * self.norm)

    def integral(self) -> float:
        return float(self.stencil.sum() * self.grid.cell_volume)

    def values(self, r) -> np.ndarray:
        """phi_eps at distance r."""
        return bump(np.asarray(r) / self.epsilon) * self.norm

    def interior_mask(self) -> np.ndarray:
        """Points whose kernel support lies entirely inside the box."""
        masks = []
        for n, h in zip(self.grid.points, self.grid.spacing):
            # largest offset index with phi > 0
            r = int(math.ceil(self.epsilon / h)) - 1
            idx = np.arange(n)
            masks.append((idx - r >= 0) & (idx + r <= n - 1))
        mx, my, mz = np.meshgrid(*masks, indexing="ij")
        return mx & my & mz


def mollify(f: np.ndarray, kernel: MollifierKernel) -> np.ndarray:
    f = np.asarray(f)
    out = kernel._conv(f)
    if not np.iscomplexobj(f) and f.size and f.min() >= 0:
        # exact result is >= 0; strip FFT rounding of order 1e-16 * max
        np.maximum(out, 0.0, out=out)
    return out


def mollifier_convergence(grid: GridSpec, f: np.ndarray, eps_sequence) -> list[float]:
    """||phi_eps * f - f||_L2 for each epsilon."""
    return [l2_norm(grid, mollify(f, MollifierKernel(grid, e)) - f) for e in eps_sequence]


def smooth_stack(stack, grid: GridSpec, epsilon: float | None = None):
    """Evaluator for ``stack`` with LDA and Coulomb terms mollified at ``epsilon``."""
    from dataclasses import replace

    from .potentials import StackEvaluator

    eps = stack.epsilon if epsilon is None else epsilon
    if not eps > 0:
        raise ValueError("smoothing requires epsilon > 0")
    MollifierKernel(grid, eps)
    return StackEvaluator(replace(stack, epsilon=eps), grid)
