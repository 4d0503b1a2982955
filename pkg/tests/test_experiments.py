import numpy as np
import pytest

from tdks.errors import InsufficientLadder
from tdks.experiments import (_ratio_mean, _ratio_mean_exact, dt_refinement_study, epsilon_convergence_study,
                              gronwall_fit, inequality_suite, perturbed_initial, pointwise_power_sides,
                              stability_study)
from tdks.fields import GridSpec, h1_seminorm, l2_norm
from tdks.potentials import ExternalPotentialSpec, IonSpec, LdaSpec, PotentialStack
from tdks.propagator import StepperConfig, propagate
from tdks.scenario import InitialStateSpec, Scenario


def small(stack, t_final=0.1, dt=0.02, n=10):
    g = GridSpec.cube(8.0, n)
    return Scenario(g, t_final, StepperConfig(dt), stack,
                    InitialStateSpec("gaussian", centers=((3.5, 4.0, 4.0),), width=1.0, kick=(0.5, 0.0, 0.0)))


def test_eps_study_smoothing_free_is_flat():
    sc = small(PotentialStack(ExternalPotentialSpec("harmonic", strength=0.1)))
    h = sc.grid.h
    rep = epsilon_convergence_study(sc, [8 * h, 4 * h, 2 * h])
    assert rep.passed
    for row in rep.rows:
        assert row["h1_distance"] <= 10 * sc.stepper.picard_tol
        assert row["hminus1_rate_distance"] <= 10 * sc.stepper.picard_tol


def test_eps_study_coulomb_decreasing():
    g = GridSpec.cube(10.0, 16)
    sc = Scenario(g, 0.3, StepperConfig(0.01), PotentialStack(ions=IonSpec(((5.3, 5.1, 4.9),), (1.0,)), hartree=False),
                  InitialStateSpec("gaussian", centers=((4.0, 5.0, 5.0),), width=1.2, kick=(0.5, 0.0, 0.0)))
    h = g.h
    rep = epsilon_convergence_study(sc, [8 * h, 4 * h, 2 * h])
    d = [r["h1_distance"] for r in rep.rows]
    assert np.all(np.isfinite(d))
    assert rep.passed and d[0] > d[1]


def test_eps_study_ladder_checks():
    sc = small(PotentialStack())
    h = sc.grid.h
    with pytest.raises(InsufficientLadder):
        epsilon_convergence_study(sc, [4 * h, 2 * h])
    with pytest.raises(ValueError):
        epsilon_convergence_study(sc, [2 * h, 4 * h, 8 * h])


def test_stability_zero_delta_exact():
    rep = stability_study(small(PotentialStack(lda=LdaSpec(1.0, 3.0))), 0.0, 2)
    assert rep.passed
    assert all(r["exact"] for r in rep.rows)


def test_stability_linear_isometry():
    sc = small(PotentialStack(hartree=False), t_final=0.2)
    psi0, ev, cfg = sc.build()
    rng = np.random.default_rng(5)
    other = perturbed_initial(psi0, 1e-4, rng)
    assert l2_norm(sc.grid, other.psi) == pytest.approx(l2_norm(sc.grid, psi0.psi), rel=1e-13)
    a = propagate(psi0, ev, cfg, sc.t_final, with_ledger=False)
    b = propagate(other, ev, cfg, sc.t_final, with_ledger=False)
    g = [h1_seminorm(sc.grid, x - y) for x, y in zip(a.states, b.states)]
    assert max(abs(v / g[0] - 1) for v in g) <= 1e-9
    rep = stability_study(sc, 1e-4, 2)
    assert rep.passed and all(abs(r["K"]) < 1e-6 for r in rep.rows)


def test_stability_delta_bound():
    with pytest.raises(ValueError):
        stability_study(small(PotentialStack()), 0.1, 1)


def test_stability_deterministic():
    sc = small(PotentialStack(lda=LdaSpec(1.0, 3.0)))
    a = stability_study(sc, 1e-4, 2, seed=3)
    b = stability_study(sc, 1e-4, 2, seed=3)
    assert a.rows == b.rows


def test_gronwall_fit_exact_exponential():
    t = np.linspace(0, 1, 11)
    K, resid = gronwall_fit(t, np.exp(0.7 * t))
    assert K == pytest.approx(0.7, rel=1e-12)
    assert resid < 1e-12


def test_dt_study_free_mode():
    g = GridSpec.cube(6.0, 10)
    sc = Scenario(g, 0.5, StepperConfig(0.05), PotentialStack(hartree=False))
    rep = dt_refinement_study(sc, [0.05, 0.025, 0.0125])
    assert rep.passed
    for r in rep.rows:
        assert 1.9 <= r["order"] <= 2.1


def test_dt_study_full_stack():
    sc = small(PotentialStack(ExternalPotentialSpec("harmonic", strength=0.1), LdaSpec(1.0, 3.0),
                              IonSpec(((4.0, 4.0, 4.0),), (-1.0,)), epsilon=1.6), t_final=0.2)
    rep = dt_refinement_study(sc, [0.04, 0.02, 0.01])
    assert rep.passed, rep.rows


def test_dt_study_needs_three():
    with pytest.raises(InsufficientLadder):
        dt_refinement_study(small(PotentialStack()), [0.02, 0.01])


def test_inequality_suite_seed_42():
    rep = inequality_suite(100_000, 42)
    assert rep.passed
    assert all(r["violations"] == 0 for r in rep.rows)
    assert rep.rows == inequality_suite(100_000, 42).rows
    with pytest.raises(ValueError):
        inequality_suite(100)


def test_ratio_mean_matches_high_precision():
    rng = np.random.default_rng(0)
    y, z = 10 * rng.random(20) + 1e-3, 10 * rng.random(20) + 1e-3
    r, s = 5 * rng.random(20) + 1e-3, 5 * rng.random(20) + 1e-3
    fast = _ratio_mean(y, z, r, s)
    for i in range(20):
        assert fast[i] == pytest.approx(float(_ratio_mean_exact(y[i], z[i], r[i], s[i])), rel=1e-10)
        assert fast[i] <= max(y[i], z[i]) * (1 + 1e-12)


def test_pointwise_alpha_one_is_equality():
    rng = np.random.default_rng(1)
    a = rng.uniform(-10, 10, 100) + 1j * rng.uniform(-10, 10, 100)
    b = rng.uniform(-10, 10, 100) + 1j * rng.uniform(-10, 10, 100)
    lhs, rhs = pointwise_power_sides(a, b, 1.0)
    assert np.array_equal(lhs, rhs)
    lhs, rhs = pointwise_power_sides(a, b, rng.uniform(1, 4, 100))
    assert np.all(lhs <= rhs * (1 + 1e-12))
