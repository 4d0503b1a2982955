"""Acceptance criteria 1-10. Run with ``pytest tests/test_acceptance.py -s`` to see the verdict lines."""
import numpy as np
import pytest

from tdks.diagnostics import constraint_check, energy_identity_residual, lambda_threshold, sobolev_constant
from tdks.errors import InvalidLdaParams
from tdks.experiments import epsilon_convergence_study, inequality_suite, stability_study
from tdks.fields import GridSpec, OrbitalSet, l2_norm, laplacian_eigenvalue, lp_norm, random_smooth_field, sine_mode
from tdks.mollifier import MollifierKernel, mollifier_convergence, mollify
from tdks.persistence import checkpoint, read_ledger, restore, write_ledger
from tdks.potentials import (ExternalPotentialSpec, HistorySpec, IonSpec, LdaSpec, PotentialStack, StackEvaluator,
                             validate_lda_params)
from tdks.propagator import StepperConfig, cayley_factor, propagate, run
from tdks.scenario import InitialStateSpec, Scenario

pytestmark = pytest.mark.slow


def verdict(n, ok, detail):
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def full_stack(g, external=None):
    h = g.h
    external = external or ExternalPotentialSpec("dipole_pulse", amplitude=0.3, frequency=2.0, width=0.5)
    return PotentialStack(external, LdaSpec(1.0, 3.0), IonSpec(((5.3, 5.1, 4.9),), (-1.0,)),
                          HistorySpec(0.2, 2.0, 0.2, 2.0, 1.0), epsilon=2 * h)


def two_gaussians():
    return InitialStateSpec("gaussian", centers=((4.0, 5.0, 5.0), (6.0, 5.0, 5.0)), width=1.2,
                            kick=(0.5, 0.0, 0.0))


def test_criterion_01_charge_conservation():
    g = GridSpec.cube(10.0, 24)
    traj = run(Scenario(g, 1.0, StepperConfig(0.005), full_stack(g), two_gaussians()))
    q = np.array([r.charge for r in traj.ledger])
    drift = float(np.max(np.abs(q - q[0])) / q[0])
    verdict(1, len(traj) == 201 and drift <= 1e-8, f"relative charge drift {drift:.2e} over {len(traj) - 1} steps")


def dipole_scenario(g, dt):
    stack = PotentialStack(ExternalPotentialSpec("dipole_pulse", amplitude=0.5, frequency=3.0, width=0.4),
                           ions=IonSpec(((4.0, 4.0, 4.0),), (-1.0,)), epsilon=2 * g.h)
    return Scenario(g, 0.5, StepperConfig(dt), stack,
                    InitialStateSpec("gaussian", centers=((3.5, 4.0, 4.0),), width=1.0, kick=(0.5, 0.0, 0.0)))


def test_criterion_02_energy_identity():
    g = GridSpec.cube(8.0, 16)
    peaks = []
    for dt in (0.02, 0.01):
        sc = dipole_scenario(g, dt)
        peaks.append(float(np.max(np.abs(energy_identity_residual(run(sc), sc.evaluator())))))
    ratio = peaks[0] / peaks[1]
    static = Scenario(g, 0.5, StepperConfig(0.02),
                      PotentialStack(ExternalPotentialSpec("harmonic", strength=0.1),
                                     ions=IonSpec(((4.0, 4.0, 4.0),), (-1.0,)), epsilon=2 * g.h),
                      dipole_scenario(g, 0.02).initial)
    e = np.array([r.E_total for r in run(static).ledger])
    drift = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    verdict(2, 3.2 <= ratio <= 4.8 and drift <= 1e-7,
            f"residual ratio {ratio:.3f} on dt halving, static energy drift {drift:.2e}")


def test_criterion_03_cayley_phase():
    g = GridSpec.cube(8.0, 16)
    modes = (2, 1, 1)
    f = sine_mode(g, modes).astype(complex)
    f /= l2_norm(g, f)
    cfg = StepperConfig(0.01)
    traj = propagate(OrbitalSet(g, f[None]), StackEvaluator(PotentialStack(hartree=False), g), cfg, 1.0,
                     with_ledger=False)
    c = cayley_factor(-0.5 * laplacian_eigenvalue(g, modes), cfg.dt)
    err = max(float(np.max(np.abs(s - c ** n * f[None]))) for n, s in enumerate(traj.states))
    verdict(3, len(traj) == 101 and err <= 1e-9, f"max pointwise phase error {err:.2e} over 100 steps")


def test_criterion_04_mollifier_laws():
    g = GridSpec.cube(8.0, 16)
    h = g.h
    rng = np.random.default_rng(4)
    kernels = [MollifierKernel(g, k * h) for k in (2, 3)]
    worst = 0.0
    for _ in range(200):
        f = rng.standard_normal(g.shape)
        for k in kernels:
            fe = mollify(f, k)
            for p in (1, 2):
                worst = max(worst, lp_norm(g, fe, p) / lp_norm(g, f, p))
    const_err = max(float(np.max(np.abs(mollify(np.full(g.shape, 2.5), k)[k.interior_mask()] - 2.5)))
                    for k in kernels)
    smooth = random_smooth_field(g, rng)
    dist = mollifier_convergence(g, smooth, [8 * h, 4 * h, 2 * h])
    decreasing = dist[0] > dist[1] > dist[2]
    verdict(4, worst <= 1 + 1e-10 and const_err <= 1e-10 and decreasing,
            f"max norm ratio {worst:.12f}, constant error {const_err:.1e}, L2 distances {dist}")


def test_criterion_05_inequality_suite():
    rep = inequality_suite(100_000, 42)
    violations = sum(r["violations"] for r in rep.rows)
    verdict(5, rep.passed and violations == 0, f"{violations} violations over {len(rep.rows)} inequalities")


def eps_scenario(stack):
    g = GridSpec.cube(10.0, 24)
    return Scenario(g, 0.5, StepperConfig(0.01), stack,
                    InitialStateSpec("gaussian", centers=((4.0, 5.0, 5.0),), width=1.2, kick=(0.5, 0.0, 0.0)))


def test_criterion_06_epsilon_cauchy():
    cases = {"coulomb": PotentialStack(ions=IonSpec(((5.3, 5.1, 4.9),), (-2.0,)), hartree=False),
             "lda": PotentialStack(lda=LdaSpec(5.0, 3.0), hartree=False)}
    ok, details = True, []
    for name, stack in cases.items():
        sc = eps_scenario(stack)
        h = sc.grid.h
        rows = epsilon_convergence_study(sc, [8 * h, 4 * h, 2 * h]).rows
        d1 = [r["h1_distance"] for r in rows]
        dm1 = [r["hminus1_rate_distance"] for r in rows]
        ok &= d1[0] > d1[1] and dm1[0] > dm1[1]
        details.append(f"{name}: H1 {d1[0]:.3e}>{d1[1]:.3e}, H-1 rate {dm1[0]:.3e}>{dm1[1]:.3e}")
    verdict(6, ok, "; ".join(details))


def test_criterion_07_gronwall_stability():
    g = GridSpec.cube(10.0, 24)
    sc = Scenario(g, 0.5, StepperConfig(0.01), full_stack(g), two_gaussians(), seed=11)
    rep = stability_study(sc, 1e-4, 3)
    zero = stability_study(sc.with_dt(0.05), 0.0, 1)
    resid = max(r["fit_residual"] for r in rep.rows)
    verdict(7, rep.passed and len(rep.rows) == 3 and zero.passed and zero.rows[0]["exact"],
            f"max fit residual {resid:.3f}, K max {rep.summary['K_max']:.3f}, delta=0 pair bitwise identical")


def test_criterion_08_parameter_gates():
    table = [(1.0, 1.0, True), (1.0, 3.999, True), (1.0, 0.99, False), (1.0, 4.0, False),
             (-1.0, 1.0, True), (-1.0, 4 / 3, True), (-1.0, 1.34, False)]
    wrong = []
    for lam, alpha, accepted in table:
        try:
            validate_lda_params(LdaSpec(lam, alpha))
            got = True
        except InvalidLdaParams:
            got = False
        if got != accepted:
            wrong.append((lam, alpha))
    verdict(8, not wrong, f"{len(table) - len(wrong)}/{len(table)} verdicts exact")


def test_criterion_09_smallness():
    g = GridSpec.cube(8.0, 12)
    f = sine_mode(g) / l2_norm(g, sine_mode(g))
    psi0 = OrbitalSet(g, f[None])
    S = sobolev_constant(g)
    at_zero = constraint_check(psi0, PotentialStack(lda=LdaSpec(0.0, 4 / 3), hartree=False), g, sobolev=S).passed
    verdicts, estimates = [], []
    for mag in np.geomspace(1e-4, 10, 25):
        rep = constraint_check(psi0, PotentialStack(lda=LdaSpec(-mag, 4 / 3), hartree=False), g, sobolev=S)
        verdicts.append(rep.passed)
        estimates.append(rep.c1_estimate)
    monotone = (all(a >= b for a, b in zip(verdicts, verdicts[1:]))
                and all(a < b for a, b in zip(estimates, estimates[1:])))
    t1 = lambda_threshold(psi0, 4 / 3, g)
    t2 = lambda_threshold(psi0, 4 / 3, g)
    same = float(f"{t1:.3g}") == float(f"{t2:.3g}")
    verdict(9, at_zero and monotone and same, f"threshold |lambda| {t1:.4g} and {t2:.4g}, monotone {monotone}")


def test_criterion_10_persistence(tmp_path):
    g = GridSpec.cube(10.0, 12)
    sc = Scenario(g, 0.12, StepperConfig(0.02), full_stack(g), two_gaussians())
    straight = run(sc)
    half = run(Scenario(g, 0.06, sc.stepper, sc.stack, sc.initial))
    checkpoint(half, tmp_path / "c.tdks")
    resumed = run(sc, resume=restore(tmp_path / "c.tdks", g, sc.stepper.dt))
    bitwise = (len(resumed) == len(straight)
               and all(np.array_equal(a, b) for a, b in zip(resumed.states, straight.states))
               and [r.as_tuple() for r in resumed.ledger] == [r.as_tuple() for r in straight.ledger])
    write_ledger(straight, tmp_path / "l.csv")
    round_trip = [r.as_tuple() for r in read_ledger(tmp_path / "l.csv")] == [r.as_tuple() for r in straight.ledger]
    verdict(10, bitwise and round_trip, f"split run bitwise {bitwise}, ledger round trip {round_trip}")
