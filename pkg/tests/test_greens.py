import numpy as np
import pytest

from errors import ConfigError
from greens import (
    KernelKind,
    ResolventKernel,
    Side,
    g_free,
    g_inout,
    g_shifted,
    g_step,
    projector_kernel,
    projector_kernel_quadrature,
    residual_check,
    step_kernel_params,
)


def gaussian(x):
    return np.exp(-((x - 0.3) ** 2))


def test_free_kernel_diagonal():
    assert g_free(2.0, Side.PLUS, 0.4, 0.4) == pytest.approx(-0.5j)
    assert g_free(2.0, Side.MINUS, 0.4, 0.4) == pytest.approx(0.5j)
    # below zero both sides decay
    assert g_free(-0.5, Side.PLUS, 0.0, 2.0) == pytest.approx(-np.exp(-2.0))


def test_shifted_kernel_is_free_kernel_at_shifted_energy():
    x, xp = np.meshgrid(np.linspace(-2, 2, 7), np.linspace(-1, 3, 5))
    np.testing.assert_allclose(g_shifted(3.0, 1, x, xp, 1.0), g_free(2.0, 1, x, xp))


def test_step_kernel_reduces_to_free_kernel(rng):
    x = rng.uniform(-3, 3, 40)
    xp = rng.uniform(-3, 3, 40)
    np.testing.assert_allclose(g_step(1.7, 1, x, xp, 0.0), g_free(1.7, 1, x, xp), atol=1e-14)


@pytest.mark.parametrize("energy", [2.0, 0.4])
def test_step_kernel_symmetry_and_side_conjugation(rng, energy):
    x = rng.uniform(-3, 3, 40)
    xp = rng.uniform(-3, 3, 40)
    plus = g_step(energy, Side.PLUS, x, xp, 1.0)
    np.testing.assert_allclose(plus, g_step(energy, Side.PLUS, xp, x, 1.0), atol=1e-14)
    np.testing.assert_allclose(g_step(energy, Side.MINUS, x, xp, 1.0), np.conj(plus), atol=1e-14)


def test_step_kernel_params():
    par = step_kernel_params(2.0, 1, 1.0)
    assert par.p == pytest.approx(2.0)
    assert par.mu == pytest.approx(np.sqrt(2.0))
    assert par.t == pytest.approx(1.0 + par.r)
    below = step_kernel_params(0.4, -1, 1.0)
    assert below.mu.real == 0.0
    assert below.mu.imag < 0.0


@pytest.mark.parametrize(
    "kernel",
    [
        ResolventKernel(KernelKind.FREE, 2.0, Side.PLUS),
        ResolventKernel(KernelKind.FREE, 2.0, Side.MINUS),
        ResolventKernel(KernelKind.SHIFTED, 2.0, Side.PLUS, 1.0),
        ResolventKernel(KernelKind.FREE, -0.7, Side.PLUS),
    ],
)
def test_local_kernels_invert_the_reference_operator(kernel):
    assert residual_check(kernel, gaussian) < 5e-3


@pytest.mark.parametrize("energy", [2.0, 0.6])
def test_step_kernel_inverts_the_step_operator(energy):
    kernel = ResolventKernel(KernelKind.STEP, energy, Side.PLUS, 1.0)
    assert residual_check(kernel, gaussian) < 2e-2


def test_residual_converges_at_second_order():
    kernel = ResolventKernel(KernelKind.FREE, 2.0, Side.PLUS)
    coarse = residual_check(kernel, gaussian, n=600)
    fine = residual_check(kernel, gaussian, n=1200)
    assert coarse / fine > 3.0


def test_residual_check_rejects_projector_kernels():
    with pytest.raises(ConfigError):
        residual_check(ResolventKernel(KernelKind.IN, 2.0, Side.PLUS, 1.0), gaussian)


@pytest.mark.parametrize("side", [Side.PLUS, Side.MINUS])
@pytest.mark.parametrize("zeta", [2.0, 0.5, -0.8])
def test_projector_halves_sum_to_free_kernel(zeta, side, rng):
    x = rng.uniform(-4, 4, 30)
    xp = rng.uniform(-4, 4, 30)
    total = projector_kernel(zeta, +1, side, x, xp) + projector_kernel(zeta, -1, side, x, xp)
    np.testing.assert_allclose(total, g_free(zeta, side, x, xp), atol=1e-12)


@pytest.mark.parametrize("zeta", [2.0, -0.8])
def test_projector_kernel_matches_quadrature_at_random_points(zeta, rng):
    pairs = rng.uniform(-5, 5, (400, 2))
    pairs = pairs[np.abs(pairs[:, 0] - pairs[:, 1]) > 0.2][:100]
    assert len(pairs) == 100
    for (x, xp), xi, side in zip(pairs, rng.choice([1, -1], 100), rng.choice([1, -1], 100)):
        closed = projector_kernel(zeta, int(xi), int(side), x, xp)
        oracle = projector_kernel_quadrature(zeta, int(xi), int(side), x - xp)
        assert closed == pytest.approx(oracle, abs=1e-8)


def test_projector_kernel_large_distance_branch():
    # past the exponential-integral switch the closed form uses its asymptotic series
    near = projector_kernel(-2.0, +1, 1, 349.0, 0.0)
    far = projector_kernel(-2.0, +1, 1, 351.0, 0.0)
    # both sides of the switch follow the same 1/distance law
    assert near * 349.0 == pytest.approx(far * 351.0, rel=1e-4)


def test_projector_kernel_rejects_coincident_points():
    with pytest.raises(ConfigError):
        projector_kernel(2.0, +1, 1, 0.5, 0.5)


def test_inout_kernels_without_step_are_free():
    x = np.array([-1.0, 0.5, 2.0])
    for kind in (KernelKind.IN, KernelKind.OUT):
        np.testing.assert_allclose(g_inout(kind, 2.0, 1, x, 0.1, 0.0), g_free(2.0, 1, x, 0.1), atol=1e-12)


def test_in_and_out_kernels_swap_under_reflection():
    x = np.array([-1.0, 0.5, 2.0])
    inner = g_inout(KernelKind.IN, 2.0, 1, x, 0.1, 1.0)
    mirrored = g_inout(KernelKind.OUT, 2.0, 1, -x, -0.1, 1.0)
    np.testing.assert_allclose(inner, mirrored, atol=1e-12)


def test_side_must_be_plus_or_minus():
    with pytest.raises(ConfigError):
        g_free(2.0, 0, 0.0, 1.0)
