import numpy as np
import pytest

from tdks.convolution import direct_convolution
from tdks.errors import KernelUnderresolved
from tdks.fields import GridSpec, l2_norm, lp_norm, sine_mode, sup_norm
from tdks.mollifier import MollifierKernel, bump, mollifier_convergence, mollify, smooth_stack
from tdks.potentials import (ExternalPotentialSpec, IonSpec, PotentialStack, StackEvaluator,
                             coulomb_field)


@pytest.fixture
def grid16():
    return GridSpec.cube(8.0, 16)


def test_kernel_integral_is_one(grid16):
    for m in (2, 3, 4, 8):
        k = MollifierKernel(grid16, m * grid16.h)
        assert k.integral() == pytest.approx(1.0, abs=1e-14)
        assert k.stencil.min() >= 0


def test_bump_profile():
    assert bump(np.array([0.0]))[0] == pytest.approx(np.exp(-1))
    assert bump(np.array([1.0, 1.5]))[0] == 0.0


def test_underresolved(grid16):
    with pytest.raises(KernelUnderresolved):
        MollifierKernel(grid16, 1.9 * grid16.h)
    MollifierKernel(grid16, 2 * grid16.h)


def test_mollify_zero(grid16):
    k = MollifierKernel(grid16, 3 * grid16.h)
    assert not np.any(mollify(np.zeros(grid16.shape), k))


def test_mollify_direct_sum(grid8, rng):
    eps = 2.5 * grid8.h
    k = MollifierKernel(grid8, eps)
    f = rng.standard_normal(grid8.shape)
    raw = lambda r: np.where(r < eps, np.exp(-1 / (1 - np.minimum(r / eps, 0.999999) ** 2)), 0.0)
    unnorm = direct_convolution(grid8, f, raw)
    # normalisation: discrete integral of the kernel is one
    offs = np.arange(-3, 4) * grid8.h
    x, y, z = np.meshgrid(offs, offs, offs, indexing="ij")
    total = raw(np.sqrt(x * x + y * y + z * z)).sum() * grid8.cell_volume
    np.testing.assert_allclose(mollify(f, k), unnorm / total, rtol=1e-10, atol=1e-13)


def test_constant_reproduction(grid16):
    for m in (2, 3, 4):
        k = MollifierKernel(grid16, m * grid16.h)
        out = mollify(np.full(grid16.shape, 2.5), k)
        mask = k.interior_mask()
        assert mask.any()
        assert np.max(np.abs(out[mask] - 2.5)) <= 1e-10
        assert np.all(out[~mask] < 2.5)


def test_nonexpansion_200_fields(grid8, rng):
    kernels = [MollifierKernel(grid8, m * grid8.h) for m in (2, 4, 8)]
    for trial in range(200):
        f = rng.standard_normal(grid8.shape)
        if trial % 2:
            f *= rng.random(grid8.shape) > 0.8
        for k in kernels:
            out = mollify(f, k)
            for p in (1, 2):
                assert lp_norm(grid8, out, p) <= lp_norm(grid8, f, p) * (1 + 1e-10)


def test_sign_preserved(grid16, rng):
    f = rng.random(grid16.shape) ** 4
    f[f < 0.5] = 0.0
    out = mollify(f, MollifierKernel(grid16, 2 * grid16.h))
    assert out.min() >= 0


def test_linearity(grid16, rng):
    k = MollifierKernel(grid16, 3 * grid16.h)
    f, g = rng.standard_normal((2,) + grid16.shape)
    np.testing.assert_allclose(mollify(2 * f - g, k), 2 * mollify(f, k) - mollify(g, k), atol=1e-13)


def test_translation_commutes(grid16, rng):
    k = MollifierKernel(grid16, 2 * grid16.h)
    f = np.zeros(grid16.shape)
    f[5:9, 6:10, 4:8] = rng.standard_normal((4, 4, 4))
    shifted = np.roll(f, (2, -1, 1), axis=(0, 1, 2))
    a = mollify(shifted, k)
    b = np.roll(mollify(f, k), (2, -1, 1), axis=(0, 1, 2))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_convergence_smooth_mode(grid16):
    f = sine_mode(grid16, (1, 2, 1))
    d = mollifier_convergence(grid16, f, [8 * grid16.h, 4 * grid16.h, 2 * grid16.h])
    assert d[0] > d[1] > d[2] > 0


def test_convergence_constant(grid16):
    d = mollifier_convergence(grid16, np.ones(grid16.shape), [8 * grid16.h, 4 * grid16.h, 2 * grid16.h])
    assert d[0] > d[1] > d[2]


def test_convergence_coulomb(grid16):
    h = grid16.h
    f = coulomb_field(IonSpec(((7.5 * h, 7.5 * h, 7.5 * h),), (1.0,)), grid16)
    d = mollifier_convergence(grid16, f, [8 * h, 4 * h, 2 * h])
    assert d[0] > d[1] > d[2]
    assert d[2] <= d[0] / 2


def test_smooth_stack_external_untouched(grid16, rng):
    stack = PotentialStack(ExternalPotentialSpec("dipole_pulse", amplitude=0.3, frequency=2.0, width=0.5),
                           hartree=False)
    raw = StackEvaluator(stack, grid16)
    smooth = smooth_stack(stack, grid16, 3 * grid16.h)
    for _ in range(5):
        rho, t = rng.random(grid16.shape), float(rng.random())
        assert np.array_equal(raw(rho, t), smooth(rho, t))


def test_smooth_stack_coulomb(grid16):
    h = grid16.h
    ions = IonSpec(((7.5 * h, 7.5 * h, 7.5 * h),), (1.0,))
    stack = PotentialStack(ions=ions, hartree=False)
    raw = StackEvaluator(stack, grid16).coulomb()
    s4 = smooth_stack(stack, grid16, 4 * h).coulomb()
    s2 = smooth_stack(stack, grid16, 2 * h).coulomb()
    assert np.all(np.isfinite(s4))
    assert sup_norm(s4) < sup_norm(raw)
    assert l2_norm(grid16, s2 - raw) < l2_norm(grid16, s4 - raw)
    with pytest.raises(KernelUnderresolved):
        smooth_stack(stack, grid16, h)


def test_smooth_stack_history_untouched(grid16, rng):
    from tdks.potentials import DensityHistory, HistorySpec

    stack = PotentialStack(history=HistorySpec(0.5, 2.0, 0.3, 2.0, 1.0), hartree=False)
    raw = StackEvaluator(stack, grid16)
    smooth = smooth_stack(stack, grid16, 2 * grid16.h)
    hist = DensityHistory()
    raw.record(hist, 0.0, rng.random(grid16.shape))
    rho = rng.random(grid16.shape)
    assert np.array_equal(raw.history_term(rho, 0.1, hist), smooth.history_term(rho, 0.1, hist))
