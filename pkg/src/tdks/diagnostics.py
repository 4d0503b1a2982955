"""Energy functional, energy-identity residuals and smallness checks.

The energy at time t is

    E = (hbar^2/4m)|grad psi|^2 + 1/4 <W*rho, rho> + 1/2 <V, rho> + 1/2 <Phi_eps, rho>

and the identity compared against it is

    E(t) = E(0) + 1/2 int_0^t <dV/ds + phi, rho(s)> ds,

with the time integral taken by the trapezoid rule at step times.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .fields import GridSpec, OrbitalSet, density, h1_seminorm, l2_norm, lp_norm, pairing, random_smooth_field
from .potentials import DensityHistory, LdaSpec, PotentialStack, StackEvaluator

LEDGER_FIELDS = ("t", "charge", "kinetic", "hartree", "external", "correction",
                 "E_total", "identity_rhs", "identity_residual", "h1_norm")


@dataclass
class LedgerRow:
    t: float
    charge: float
    kinetic: float
    hartree: float
    external: float
    correction: float
    E_total: float
    identity_rhs: float = math.nan
    identity_residual: float = math.nan
    h1_norm: float = 0.0

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in LEDGER_FIELDS)


def energy(psi: np.ndarray, ev: StackEvaluator, t: float, hbar: float = 1.0, mass: float = 1.0,
           history: DensityHistory | None = None, rho: np.ndarray | None = None) -> LedgerRow:
    grid = ev.grid
    if isinstance(psi, OrbitalSet):
        psi = psi.psi
    rho = density(psi) if rho is None else rho
    h1 = h1_seminorm(grid, psi)
    kinetic = hbar ** 2 / (4 * mass) * h1 ** 2
    hartree = 0.25 * float(pairing(grid, ev.hartree(rho), rho))
    external = 0.5 * float(pairing(grid, ev.external(t), rho))
    correction = 0.5 * float(pairing(grid, ev.correction(rho, t, history), rho))
    return LedgerRow(t=t, charge=l2_norm(grid, psi) ** 2, kinetic=kinetic, hartree=hartree,
                     external=external, correction=correction,
                     E_total=kinetic + hartree + external + correction, h1_norm=h1)


def identity_source(ev: StackEvaluator, rho: np.ndarray, t: float, history: DensityHistory | None) -> float:
    """1/2 <dV/dt + phi, rho> at time t."""
    rate = ev.external_rate(t)
    if ev.stack.has_history:
        rate = rate + ev.history_rate(rho, t, history)
    return 0.5 * float(pairing(ev.grid, rate, rho))


class LedgerBuilder:
    """Accumulates ledger rows step by step during a run."""

    def __init__(self, ev: StackEvaluator, hbar: float = 1.0, mass: float = 1.0):
        self.ev = ev
        self.hbar = hbar
        self.mass = mass
        self.rows: list[LedgerRow] = []
        self._last_source = None

    def add(self, t, psi, rho, history):
        row = energy(psi, self.ev, t, self.hbar, self.mass, history, rho)
        source = identity_source(self.ev, rho, t, history)
        if not self.rows:
            row.identity_rhs = row.E_total
        else:
            prev = self.rows[-1]
            row.identity_rhs = prev.identity_rhs + 0.5 * (t - prev.t) * (self._last_source + source)
        row.identity_residual = row.E_total - row.identity_rhs
        self._last_source = source
        self.rows.append(row)


def ledger_rows(traj, ev: StackEvaluator, hbar: float = 1.0, mass: float = 1.0) -> list[LedgerRow]:
    builder = LedgerBuilder(ev, hbar, mass)
    history = DensityHistory()
    for t, psi in zip(traj.times, traj.states):
        rho = density(psi)
        builder.add(t, psi, rho, history)
        ev.record(history, t, rho)
    return builder.rows


def energy_identity_residual(traj, ev: StackEvaluator, hbar: float = 1.0, mass: float = 1.0) -> np.ndarray:
    if len(traj.states) < 2:
        raise ValueError("energy identity needs at least two snapshots")
    return np.array([r.identity_residual for r in ledger_rows(traj, ev, hbar, mass)])


@dataclass
class AprioriReport:
    r_observed: float
    h1_norms: list[float]
    blow_up: bool


def apriori_bound_report(traj) -> AprioriReport:
    norms = [h1_seminorm(traj.grid, psi) for psi in traj.states]
    first = norms[0] if norms else 0.0
    blow_up = bool(norms) and first > 0 and max(norms) > 10 * first
    return AprioriReport(max(norms, default=0.0), norms, blow_up)


def sobolev_constant(grid: GridSpec, samples: int = 200, seed: int = 0) -> float:
    """Largest L^6 norm seen over random unit-H^1 fields: a lower bound for S in |f|_6 <= S |grad f|_2."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for k in range(samples):
        f = random_smooth_field(grid, rng, max_mode=1 + k % 6)
        f = f / h1_seminorm(grid, f)
        best = max(best, lp_norm(grid, f, 6))
    return best


@dataclass
class ConstraintReport:
    c1_estimate: float
    c1_lda: float
    c1_coulomb: float
    c2_estimate: float
    eta: float
    sobolev: float
    limit: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def constraint_check(psi0, stack: PotentialStack, grid: GridSpec, hbar: float = 1.0, mass: float = 1.0,
                     sobolev: float | None = None, seed: int = 0) -> ConstraintReport:
    """Estimate C1 for the negative parts of the correction and test C1 < hbar^2/2m.

    LDA part: |lambda| |Omega|^(2/3 - alpha/2) |psi0|_2^alpha S^2.
    Coulomb part: (eta^2/2) |phi_eps * Phi_c|_3^2 S^2 with eta chosen so this uses
    half of the margin left by the LDA part; C2 = |psi0|_2^2 / (2 eta^2).
    """
    if isinstance(psi0, OrbitalSet):
        psi0 = psi0.psi
    limit = hbar ** 2 / (2 * mass)
    lam_neg = stack.lda.lam < 0
    ions_neg = stack.ions.has_negative
    if not (lam_neg or ions_neg):
        return ConstraintReport(0.0, 0.0, 0.0, 0.0, math.nan, math.nan, limit, True)
    S = sobolev_constant(grid, seed=seed) if sobolev is None else sobolev
    norm2 = l2_norm(grid, psi0)
    c1_lda = 0.0
    if lam_neg:
        a = stack.lda.alpha
        c1_lda = abs(stack.lda.lam) * grid.volume ** (2 / 3 - a / 2) * norm2 ** a * S ** 2
    c1_coul, c2, eta = 0.0, 0.0, math.nan
    if ions_neg:
        margin = limit - c1_lda
        ev = StackEvaluator(PotentialStack(ions=stack.ions, hartree=False, epsilon=stack.epsilon), grid)
        l3 = lp_norm(grid, ev.coulomb(), 3)
        if margin > 0 and l3 > 0:
            c1_coul = 0.5 * margin
            eta = math.sqrt(2 * c1_coul) / (l3 * S)
            c2 = norm2 ** 2 / (2 * eta ** 2)
    c1 = c1_lda + c1_coul
    return ConstraintReport(c1, c1_lda, c1_coul, c2, eta, S, limit, c1 < limit)


def lambda_threshold(psi0, alpha: float, grid: GridSpec, hbar: float = 1.0, mass: float = 1.0,
                     sobolev: float | None = None, tol: float = 1e-6, seed: int = 0) -> float:
    """Largest |lambda| (lambda < 0) passing the smallness check, by bisection."""
    S = sobolev_constant(grid, seed=seed) if sobolev is None else sobolev

    def passes(mag):
        stack = PotentialStack(lda=LdaSpec(-mag, alpha), hartree=False)
        return constraint_check(psi0, stack, grid, hbar, mass, sobolev=S).passed

    lo, hi = 0.0, 1.0
    while passes(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if passes(mid) else (lo, mid)
    return lo
