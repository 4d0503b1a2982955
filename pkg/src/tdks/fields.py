"""Uniform Dirichlet grids on a box, orbital sets and discrete norms.

Fields are plain numpy arrays whose trailing three axes match
``GridSpec.shape``; only interior points are stored and the boundary is
an implicit layer of zeros.  Orbital sets carry a leading orbital axis,
so every norm below accepts arrays of shape ``(..., nx, ny, nz)`` and
sums over the leading axes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidExponent, SolverFailure


def fft_workers() -> int:
    """Thread cap for FFT work, from ``TDKS_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("TDKS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GridSpec:
    extents: tuple[float, float, float]
    points: tuple[int, int, int]

    def __post_init__(self):
        ext = tuple(float(e) for e in self.extents)
        pts = tuple(int(n) for n in self.points)
        if len(ext) != 3 or len(pts) != 3:
            raise ValueError("GridSpec needs three extents and three point counts")
        if any(e <= 0 or not np.isfinite(e) for e in ext):
            raise ValueError(f"extents must be positive, got {ext}")
        if any(n < 8 for n in pts):
            raise ValueError(f"points_per_axis must be >= 8, got {pts}")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "points", pts)

    @classmethod
    def cube(cls, length: float, n: int) -> GridSpec:
        return cls((length,) * 3, (n,) * 3)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(e / (n + 1) for e, n in zip(self.extents, self.points))

    @property
    def h(self) -> float:
        """Largest spacing; the resolution limit for kernels."""
        return max(self.spacing)

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.spacing
        return hx * hy * hz

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum(e * e for e in self.extents)))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * np.asarray(self.extents)

    def axes(self) -> list[np.ndarray]:
        return [h * np.arange(1, n + 1) for h, n in zip(self.spacing, self.points)]

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def zeros(self, n_orbitals: int | None = None, dtype=float) -> np.ndarray:
        shape = self.shape if n_orbitals is None else (n_orbitals, *self.shape)
        return np.zeros(shape, dtype=dtype)


@dataclass
class OrbitalSet:
    """The state: ``psi`` has shape ``(N, nx, ny, nz)``."""

    grid: GridSpec
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.ndim == 3:
            psi = psi[None]
        if psi.ndim != 4 or psi.shape[1:] != self.grid.shape or psi.shape[0] < 1:
            raise ValueError(f"orbital array shape {psi.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(psi)):
            raise ValueError("orbital values must be finite")
        self.psi = psi
        if self.t < 0:
            raise ValueError("time must be nonnegative")

    @property
    def n_orbitals(self) -> int:
        return self.psi.shape[0]

    def density(self) -> np.ndarray:
        return density(self.psi)

    def copy(self) -> OrbitalSet:
        return OrbitalSet(self.grid, self.psi.copy(), self.t)


def density(psi: np.ndarray) -> np.ndarray:
    """rho = sum_k |psi_k|^2 over the orbital axis."""
    psi = np.asarray(psi)
    if psi.ndim == 3:
        return np.abs(psi) ** 2
    return np.sum(psi.real ** 2 + psi.imag ** 2, axis=0)


def inner(grid: GridSpec, f: np.ndarray, g: np.ndarray) -> complex:
    """Midpoint-quadrature inner product, conjugate-linear in ``f``."""
    return complex(np.vdot(f, g) * grid.cell_volume)


def pairing(grid: GridSpec, f: np.ndarray, g: np.ndarray):
    """Bilinear pairing sum(f*g)*dV, no conjugation."""
    return np.sum(f * g) * grid.cell_volume


def l2_norm(grid: GridSpec, f: np.ndarray) -> float:
    a = np.abs(f)
    return float(np.sqrt(np.sum(a * a) * grid.cell_volume))


def lp_norm(grid: GridSpec, f: np.ndarray, p: float) -> float:
    if not p >= 1:
        raise InvalidExponent(f"L^p exponent must be >= 1, got {p}")
    if p == 2:
        return l2_norm(grid, f)
    a = np.abs(f)
    if a.ndim == 4:
        a = np.sqrt(np.sum(a * a, axis=0))
    return float(np.sum(a ** p) * grid.cell_volume) ** (1.0 / p)


def sup_norm(f: np.ndarray) -> float:
    return float(np.max(np.abs(f))) if np.size(f) else 0.0


def _spatial_axis(f: np.ndarray, axis: int) -> int:
    return f.ndim - 3 + axis


def gradient(grid: GridSpec, f: np.ndarray) -> list[np.ndarray]:
    """Forward differences over all n+1 edges per axis (zero ghosts both ends)."""
    grads = []
    for axis, h in enumerate(grid.spacing):
        ax = _spatial_axis(f, axis)
        pad = [(0, 0)] * f.ndim
        pad[ax] = (1, 1)
        grads.append(np.diff(np.pad(f, pad), axis=ax) / h)
    return grads


def h1_seminorm(grid: GridSpec, f: np.ndarray) -> float:
    total = 0.0
    for d in gradient(grid, f):
        a = np.abs(d)
        total += np.sum(a * a)
    return float(np.sqrt(total * grid.cell_volume))


def h1_distance(grid: GridSpec, f: np.ndarray, g: np.ndarray) -> float:
    return h1_seminorm(grid, np.asarray(f) - np.asarray(g))


def laplacian_apply(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """Seven-point Laplacian with zero Dirichlet ghosts (no physical prefactor)."""
    f = np.asarray(f)
    out = np.zeros(f.shape, dtype=np.result_type(f.dtype, float))
    for axis, h in enumerate(grid.spacing):
        ax = _spatial_axis(f, axis)
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        out -= (2.0 / h ** 2) * f
        out[lo] += f[hi] / h ** 2
        out[hi] += f[lo] / h ** 2
    return out


def laplacian_eigenvalue(grid: GridSpec, modes) -> float:
    """Eigenvalue of the discrete Laplacian for sine mode numbers ``modes``."""
    total = 0.0
    for k, h, L in zip(modes, grid.spacing, grid.extents):
        total += (4.0 / h ** 2) * np.sin(k * np.pi * h / (2 * L)) ** 2
    return -total


def sine_mode(grid: GridSpec, modes=(1, 1, 1)) -> np.ndarray:
    x, y, z = grid.mesh()
    (lx, ly, lz), (kx, ky, kz) = grid.extents, modes
    return (np.sin(kx * np.pi * x / lx) * np.sin(ky * np.pi * y / ly)
            * np.sin(kz * np.pi * z / lz))


@lru_cache(maxsize=8)
def laplacian_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Sparse form of ``laplacian_apply`` in C (row-major) ordering."""
    mats = []
    for n, h in zip(grid.points, grid.spacing):
        mats.append(sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / h ** 2)
    ix, iy, iz = (sp.identity(n, format="csr") for n in grid.points)
    lap = (sp.kron(sp.kron(mats[0], iy), iz)
           + sp.kron(sp.kron(ix, mats[1]), iz)
           + sp.kron(sp.kron(ix, iy), mats[2]))
    return lap.tocsr()


def smallest_dirichlet_eigenvalue(grid: GridSpec) -> float:
    """lambda_min of -Laplacian, closed form for the box."""
    return -laplacian_eigenvalue(grid, (1, 1, 1))


def poincare_constant(grid: GridSpec) -> float:
    return 1.0 / np.sqrt(smallest_dirichlet_eigenvalue(grid))


def poisson_solve(grid: GridSpec, f: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Solve -Laplacian u = f with Dirichlet data by conjugate gradients."""
    f = np.asarray(f)
    if f.ndim == 4:
        return np.stack([poisson_solve(grid, fk, rtol) for fk in f])
    if np.iscomplexobj(f):
        return poisson_solve(grid, f.real, rtol) + 1j * poisson_solve(grid, f.imag, rtol)
    b = f.ravel().astype(float)
    if not np.any(b):
        return np.zeros(grid.shape)
    A = -laplacian_matrix(grid)
    u, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=10 * grid.size)
    res = np.linalg.norm(A @ u - b) / np.linalg.norm(b)
    if info != 0 or res > rtol * 10:
        raise SolverFailure(f"Poisson CG stopped with relative residual {res:.3e} (info={info})")
    return u.reshape(grid.shape)


def hminus1_norm(grid: GridSpec, f: np.ndarray) -> float:
    """Dual norm of H^1_0: |u|_1 with -Laplacian u = f."""
    f = np.asarray(f)
    if not np.any(f):
        return 0.0
    return h1_seminorm(grid, poisson_solve(grid, f))


def random_smooth_field(grid: GridSpec, rng: np.random.Generator, max_mode: int = 4,
                        complex_valued: bool = False, n_orbitals: int | None = None) -> np.ndarray:
    """Random combination of the lowest sine modes; vanishes on the boundary."""
    if n_orbitals is not None:
        return np.stack([random_smooth_field(grid, rng, max_mode, complex_valued)
                         for _ in range(n_orbitals)])
    axes = []
    for ax, L in zip(grid.axes(), grid.extents):
        k = np.arange(1, max_mode + 1)
        axes.append(np.sin(np.pi * np.outer(k, ax) / L))
    coef = rng.standard_normal((max_mode,) * 3)
    if complex_valued:
        coef = coef + 1j * rng.standard_normal((max_mode,) * 3)
    return np.einsum("abc,ai,bj,ck->ijk", coef, *axes)
