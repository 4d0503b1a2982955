"""Crank-Nicolson propagation with Picard resolution of the density coupling.

One step solves

    (I + i dt/(2 hbar) H_mid) psi^{n+1} = (I - i dt/(2 hbar) H_mid) psi^n

where ``H_mid`` uses the effective potential at ``t_n + dt/2`` built from the
midpoint density ``(rho^n + rho^{n+1}) / 2``.  Every sweep solves with a
Hermitian operator, so the l2 norm is conserved up to the linear-solve
tolerance regardless of how far the fixed-point iteration has converged.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveFailure, PicardDivergence, StepFailure
from .fields import (GridSpec, OrbitalSet, density, gradient, h1_seminorm, l2_norm,
                     laplacian_apply, laplacian_matrix, pairing, random_smooth_field)
from .potentials import DensityHistory, StackEvaluator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    picard_tol: float = 1e-10
    picard_max: int = 50
    linear_tol: float = 1e-11
    hbar: float = 1.0
    mass: float = 1.0
    frozen_potential: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be positive")

    @property
    def kinetic_prefactor(self) -> float:
        return self.hbar ** 2 / (2 * self.mass)

    def with_dt(self, dt: float) -> StepperConfig:
        return StepperConfig(dt, self.picard_tol, self.picard_max, self.linear_tol,
                             self.hbar, self.mass, self.frozen_potential)


def hamiltonian_apply(psi: np.ndarray, ve: np.ndarray, grid: GridSpec, cfg: StepperConfig) -> np.ndarray:
    """-(hbar^2/2m) Laplacian + diag(ve), applied orbital-wise."""
    return -cfg.kinetic_prefactor * laplacian_apply(grid, psi) + ve * psi


def cayley_factor(energy: float, dt: float, hbar: float = 1.0) -> complex:
    """Per-step multiplier of an eigenstate with energy ``energy``."""
    z = 0.5j * dt * energy / hbar
    return (1 - z) / (1 + z)


class _CrankNicolsonSolver:
    """Solves (I + i a H) x = b for H = -c L + diag(v) by BiCGSTAB."""

    def __init__(self, grid: GridSpec, cfg: StepperConfig, dt: float):
        self.grid = grid
        self.cfg = cfg
        self.a = dt / (2 * cfg.hbar)
        self.kin = -cfg.kinetic_prefactor * laplacian_matrix(grid)
        self.eye = sp.identity(grid.size, format="csr")

    def solve(self, psi_n: np.ndarray, v: np.ndarray, x0: np.ndarray) -> np.ndarray:
        H = self.kin + sp.diags(v.ravel())
        A = (self.eye + 1j * self.a * H).tocsr()
        B = (self.eye - 1j * self.a * H).tocsr()
        out = np.empty_like(psi_n)
        for k in range(psi_n.shape[0]):
            b = B @ psi_n[k].ravel()
            bnorm = np.linalg.norm(b)
            if bnorm == 0:
                out[k] = 0
                continue
            x, info = spla.bicgstab(A, b, x0=x0[k].ravel(), rtol=self.cfg.linear_tol,
                                    atol=0.0, maxiter=10 * self.grid.size)
            res = np.linalg.norm(A @ x - b) / bnorm
            if info != 0 or not res <= 10 * self.cfg.linear_tol:
                raise LinearSolveFailure(f"BiCGSTAB residual {res:.3e} (info={info})")
            out[k] = x.reshape(self.grid.shape)
        return out


def cn_step(psi_n: np.ndarray, ev: StackEvaluator, t_n: float, cfg: StepperConfig,
            history: DensityHistory | None = None, dt: float | None = None,
            frozen_density: np.ndarray | None = None) -> np.ndarray:
    """Advance ``psi_n`` from ``t_n`` by ``dt`` (default ``cfg.dt``; may be negative)."""
    dt = cfg.dt if dt is None else dt
    grid = ev.grid
    solver = _CrankNicolsonSolver(grid, cfg, dt)
    t_mid = t_n + 0.5 * dt
    rho_n = density(psi_n)
    if not np.any(psi_n):
        return np.zeros_like(psi_n)
    if cfg.frozen_potential or frozen_density is not None:
        rho_fixed = rho_n if frozen_density is None else frozen_density
        return solver.solve(psi_n, ev(rho_fixed, t_mid, history), psi_n)
    if not ev.stack.density_dependent:
        return solver.solve(psi_n, ev(rho_n, t_mid, history), psi_n)
    psi_k = psi_n
    for sweep in range(cfg.picard_max):
        rho_mid = 0.5 * (rho_n + density(psi_k))
        psi_new = solver.solve(psi_n, ev(rho_mid, t_mid, history), psi_k)
        change = np.linalg.norm(psi_new - psi_k) / max(np.linalg.norm(psi_new), 1e-300)
        psi_k = psi_new
        if change <= cfg.picard_tol:
            return psi_k
    raise PicardDivergence(f"Picard sweeps stalled at relative change {change:.3e} "
                           f"after {cfg.picard_max} sweeps")


@dataclass
class Trajectory:
    grid: GridSpec
    dt: float
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    ledger: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    def snapshot(self, k: int) -> OrbitalSet:
        return OrbitalSet(self.grid, self.states[k], self.times[k])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def step_count(t_final: float, dt: float) -> int:
    return max(0, int(math.ceil(t_final / dt - 1e-9)))


def propagate(psi0: OrbitalSet, ev: StackEvaluator, cfg: StepperConfig, t_final: float,
              resume: Trajectory | None = None, with_ledger: bool = True,
              frozen_density: np.ndarray | None = None) -> Trajectory:
    """Run ``ceil(t_final/dt)`` steps from ``psi0`` (or continue ``resume``)."""
    from .diagnostics import LedgerBuilder

    grid = ev.grid
    n_steps = step_count(t_final, cfg.dt)
    traj = Trajectory(grid, cfg.dt, provenance={"config": asdict(cfg), "t_final": t_final})
    history = DensityHistory()
    ledger = LedgerBuilder(ev, cfg.hbar, cfg.mass) if with_ledger else None
    if frozen_density is None and cfg.frozen_potential:
        frozen_density = psi0.density()

    start = [psi0.psi] if resume is None else resume.states
    for k, psi in enumerate(start):
        _accept(traj, history, ledger, ev, k * cfg.dt, psi)
    _check_first_step(ev, cfg, traj.states[0], history)

    for n in range(len(traj.states) - 1, n_steps):
        t_n = n * cfg.dt
        try:
            psi_next = _step_with_retry(traj.states[-1], ev, t_n, cfg, history, frozen_density)
        except (PicardDivergence, LinearSolveFailure) as exc:
            raise StepFailure(n, exc) from exc
        _accept(traj, history, ledger, ev, (n + 1) * cfg.dt, psi_next)
    if ledger is not None:
        traj.ledger = ledger.rows
    return traj


def _accept(traj, history, ledger, ev, t, psi):
    rho = density(psi)
    traj.times.append(t)
    traj.states.append(psi)
    if ledger is not None:
        ledger.add(t, psi, rho, history)
    ev.record(history, t, rho)


def _step_with_retry(psi, ev, t_n, cfg, history, frozen_density):
    try:
        return cn_step(psi, ev, t_n, cfg, history, frozen_density=frozen_density)
    except PicardDivergence:
        log.warning("Picard divergence at t=%g; retrying with two half steps", t_n)
        half = 0.5 * cfg.dt
        mid = cn_step(psi, ev, t_n, cfg, history, dt=half, frozen_density=frozen_density)
        return cn_step(mid, ev, t_n + half, cfg, history, dt=half, frozen_density=frozen_density)


def _check_first_step(ev, cfg, psi0, history):
    ve = ev(density(psi0), 0.0, history)
    bound = cfg.dt * float(np.max(np.abs(ve))) / cfg.hbar if ve.size else 0.0
    if bound >= 10:
        raise ValueError(f"dt*max|V_e| = {bound:.3g} >= 10: time step far too coarse")
    if bound > 1:
        warnings.warn(f"dt*max|V_e| = {bound:.3g} exceeds 1; dynamics may be under-resolved")


def history_from_trajectory(traj: Trajectory, ev: StackEvaluator, upto: int) -> DensityHistory:
    history = DensityHistory()
    for t, psi in zip(traj.times[:upto + 1], traj.states[:upto + 1]):
        ev.record(history, t, density(psi))
    return history


def weak_residual(traj: Trajectory, ev: StackEvaluator, num_test: int, cfg: StepperConfig | None = None,
                  seed: int = 0) -> float:
    """Max weak-form defect of the centred time derivative against random unit-H^1 test fields."""
    if len(traj) < 3:
        raise ValueError("weak residual needs at least three snapshots")
    cfg = cfg or StepperConfig(traj.dt)
    grid = traj.grid
    rng = np.random.default_rng(seed)
    tests = []
    for _ in range(num_test):
        z = random_smooth_field(grid, rng)
        tests.append(z / h1_seminorm(grid, z))
    worst = 0.0
    for n in range(1, len(traj) - 1):
        psi = traj.states[n]
        if not np.any(psi) and not np.any(traj.states[n + 1]) and not np.any(traj.states[n - 1]):
            continue
        dpsi = (traj.states[n + 1] - traj.states[n - 1]) / (traj.times[n + 1] - traj.times[n - 1])
        ve = ev(density(psi), traj.times[n], history_from_trajectory(traj, ev, n - 1))
        grads = gradient(grid, psi)
        vpsi = ve * psi
        for z in tests:
            zg = gradient(grid, z)
            for k in range(psi.shape[0]):
                lhs = 1j * cfg.hbar * pairing(grid, dpsi[k], z)
                kin = sum(pairing(grid, g[k], gz) for g, gz in zip(grads, zg))
                rhs = cfg.kinetic_prefactor * kin + pairing(grid, vpsi[k], z)
                worst = max(worst, abs(lhs - rhs))
    return float(worst)


def charge(grid: GridSpec, psi: np.ndarray) -> float:
    return l2_norm(grid, psi) ** 2


def run(scenario, resume: Trajectory | None = None) -> Trajectory:
    """Propagate a scenario (anything with ``build()`` and ``t_final``)."""
    psi0, ev, cfg = scenario.build()
    traj = propagate(psi0, ev, cfg, scenario.t_final, resume=resume)
    traj.provenance["scenario"] = getattr(scenario, "digest", lambda: None)()
    return traj
