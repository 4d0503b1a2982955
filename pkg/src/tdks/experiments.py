"""Scripted studies: epsilon ladder, perturbation stability, dt refinement,
and a sampled check of two elementary power inequalities."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import InsufficientLadder
from .fields import OrbitalSet, h1_seminorm, hminus1_norm, l2_norm, random_smooth_field
from .propagator import propagate, run


@dataclass
class StudyReport:
    kind: str
    digest: str
    rows: list[dict]
    verdict: str
    runtime: float
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _centred_rates(traj) -> list[np.ndarray]:
    s, t = traj.states, traj.times
    return [(s[n + 1] - s[n - 1]) / (t[n + 1] - t[n - 1]) for n in range(1, len(s) - 1)]


def trajectory_distances(a, b) -> tuple[float, float]:
    """max_t |a-b|_{H^1} and max_t |da/dt - db/dt|_{H^-1} over shared snapshots."""
    grid = a.grid
    d1 = max(h1_seminorm(grid, x - y) for x, y in zip(a.states, b.states))
    rates = [hminus1_norm(grid, x - y) for x, y in zip(_centred_rates(a), _centred_rates(b))]
    return d1, max(rates, default=0.0)


def _decreasing(seq, floor) -> bool:
    return all(y < x or max(x, y) <= floor for x, y in zip(seq, seq[1:]))


def epsilon_convergence_study(scenario, eps_list) -> StudyReport:
    """Cauchy differences between runs at successive smoothing lengths."""
    start = time.perf_counter()
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise InsufficientLadder("epsilon ladder needs at least three values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon ladder must be strictly decreasing")
    trajs = [run(scenario.with_epsilon(e)) for e in eps_list]
    rows = []
    for k in range(len(eps_list) - 1):
        d1, dm1 = trajectory_distances(trajs[k], trajs[k + 1])
        rows.append({"eps_coarse": eps_list[k], "eps_fine": eps_list[k + 1],
                     "h1_distance": d1, "hminus1_rate_distance": dm1})
    charge = l2_norm(scenario.grid, trajs[0].states[0]) ** 2
    floor = 10 * scenario.stepper.picard_tol * max(1.0, charge) * max(
        1.0, h1_seminorm(scenario.grid, trajs[0].states[0]))
    ok = (_decreasing([r["h1_distance"] for r in rows], floor)
          and _decreasing([r["hminus1_rate_distance"] for r in rows], floor))
    return StudyReport("eps-study", scenario.digest(), rows, _verdict(ok),
                       time.perf_counter() - start, {"noise_floor": floor})


def perturbed_initial(psi0: OrbitalSet, delta: float, rng: np.random.Generator) -> OrbitalSet:
    """psi0 + delta * (random unit-H^1 field), rescaled to the charge of psi0."""
    if delta == 0:
        return psi0.copy()
    grid = psi0.grid
    zeta = random_smooth_field(grid, rng, complex_valued=True, n_orbitals=psi0.n_orbitals)
    zeta /= h1_seminorm(grid, zeta)
    psi = psi0.psi + delta * zeta
    psi *= l2_norm(grid, psi0.psi) / l2_norm(grid, psi)
    return OrbitalSet(grid, psi, 0.0)


def gronwall_fit(times, g) -> tuple[float, float]:
    """Least-squares K in log g ~ K t (through the origin) and max |g e^{-Kt} - 1|."""
    t = np.asarray(times, dtype=float)
    lg = np.log(np.asarray(g, dtype=float))
    denom = float(np.dot(t, t))
    K = float(np.dot(t, lg) / denom) if denom > 0 else 0.0
    resid = float(np.max(np.abs(np.exp(lg - K * t) - 1.0))) if len(t) else 0.0
    return K, resid


def stability_study(scenario, delta: float, trials: int, seed: int | None = None) -> StudyReport:
    start = time.perf_counter()
    psi0, ev, cfg = scenario.build()
    if delta > 1e-3 * l2_norm(scenario.grid, psi0.psi):
        raise ValueError("delta must not exceed 1e-3 * |psi0|")
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    base = propagate(psi0, ev, cfg, scenario.t_final, with_ledger=False)
    rows, ok, Ks = [], True, []
    for trial in range(trials):
        other = propagate(perturbed_initial(psi0, delta, rng), ev, cfg, scenario.t_final, with_ledger=False)
        diffs = [h1_seminorm(scenario.grid, a - b) for a, b in zip(base.states, other.states)]
        if diffs[0] == 0:
            identical = all(np.array_equal(a, b) for a, b in zip(base.states, other.states))
            rows.append({"trial": trial, "exact": identical, "max_difference": max(diffs)})
            ok &= identical
            continue
        g = np.array(diffs) / diffs[0]
        K, resid = gronwall_fit(base.times, g)
        envelope = bool(np.all(np.log(g) <= K * np.asarray(base.times) + math.log(2)))
        passed = envelope and resid <= 0.2
        ok &= passed
        Ks.append(K)
        rows.append({"trial": trial, "K": K, "fit_residual": resid, "g_max": float(g.max()),
                     "g_final": float(g[-1]), "envelope": envelope, "passed": passed})
    summary = {"delta": delta, "K_max": max(Ks, default=0.0)}
    return StudyReport("stability", scenario.digest(), rows, _verdict(ok), time.perf_counter() - start, summary)


def dt_refinement_study(scenario, dt_list, low: float = 1.7, high: float = 2.3) -> StudyReport:
    """Observed order from consecutive final-state differences along a dt ladder."""
    start = time.perf_counter()
    dt_list = [float(d) for d in dt_list]
    if len(dt_list) < 3:
        raise InsufficientLadder("dt ladder needs at least three entries")
    finals = [run(scenario.with_dt(dt)).final for dt in dt_list]
    grid = scenario.grid
    diffs = [l2_norm(grid, a - b) for a, b in zip(finals, finals[1:])]
    rows = []
    for k in range(len(diffs) - 1):
        ratio = dt_list[k] / dt_list[k + 1]
        p = math.log(diffs[k] / diffs[k + 1]) / math.log(ratio) if diffs[k + 1] > 0 else math.inf
        rows.append({"dt": dt_list[k + 1], "difference": diffs[k], "next_difference": diffs[k + 1], "order": p})
    ok = all(low <= r["order"] <= high for r in rows)
    return StudyReport("dt-study", scenario.digest(), rows, _verdict(ok), time.perf_counter() - start,
                       {"orders": [r["order"] for r in rows]})


def _ratio_mean(y, z, r, s):
    """((y^r - z^r)/(y^s - z^s) * s/r)^(1/(r-s)), computed without cancellation."""
    lo, hi = np.minimum(y, z), np.maximum(y, z)
    L = np.log(hi / lo)
    log_ratio = np.log(np.expm1(r * L) / np.expm1(s * L)) + np.log(s / r)
    return lo * np.exp(log_ratio / (r - s))


def _ratio_mean_exact(y, z, r, s):
    with mpmath.workdps(60):
        y, z, r, s = (mpmath.mpf(float(v)) for v in (y, z, r, s))
        return ((y ** r - z ** r) / (y ** s - z ** s) * s / r) ** (1 / (r - s))


def pointwise_power_sides(a, b, alpha):
    """Both sides of ||a|^alpha - |b|^alpha| <= alpha max(|a|,|b|)^(alpha-1) ||a| - |b||."""
    A, B = np.abs(a), np.abs(b)
    m = np.maximum(A, B)
    return np.abs(A ** alpha - B ** alpha), alpha * m ** (alpha - 1) * np.abs(A - B)


def inequality_suite(samples: int = 100_000, seed: int = 42, slack: float = 1e-12) -> StudyReport:
    """Sampled check of the power-mean bound and the pointwise |a|^alpha Lipschitz bound.

    A double-precision violation is re-evaluated at 60 digits before it counts.
    """
    start = time.perf_counter()
    if samples < 10_000:
        raise ValueError("inequality suite needs at least 1e4 samples")
    rng = np.random.default_rng(seed)
    y = 10.0 * (1.0 - rng.random(samples))
    z = 10.0 * (1.0 - rng.random(samples))
    r = 5.0 * (1.0 - rng.random(samples))
    s = 5.0 * (1.0 - rng.random(samples))
    keep = (y != z) & (r != s)
    filtered = int(samples - keep.sum())
    y, z, r, s = y[keep], z[keep], r[keep], s[keep]
    bound = np.maximum(y, z)
    lhs = _ratio_mean(y, z, r, s)
    suspects = np.flatnonzero(~(lhs <= bound * (1 + slack)))
    mean_violations = sum(
        1 for i in suspects if _ratio_mean_exact(y[i], z[i], r[i], s[i]) > bound[i] * (1 + slack))

    a = rng.uniform(-10, 10, samples) + 1j * rng.uniform(-10, 10, samples)
    b = rng.uniform(-10, 10, samples) + 1j * rng.uniform(-10, 10, samples)
    alpha = 1.0 + 3.0 * rng.random(samples)
    lhs2, rhs2 = pointwise_power_sides(a, b, alpha)
    m = np.maximum(np.abs(a), np.abs(b))
    power_violations = int(np.sum(lhs2 > rhs2 + slack * m ** alpha))

    rows = [
        {"inequality": "power_mean", "samples": int(keep.sum()), "filtered": filtered,
         "suspects": int(len(suspects)), "violations": mean_violations},
        {"inequality": "pointwise_power", "samples": samples, "filtered": 0,
         "suspects": 0, "violations": power_violations},
    ]
    ok = mean_violations == 0 and power_violations == 0
    return StudyReport("inequalities", f"seed={seed}", rows, _verdict(ok), time.perf_counter() - start)
