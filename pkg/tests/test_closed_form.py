import math

import numpy as np
import pytest
from scipy import integrate

from closed_form import (
    LEFT,
    RIGHT,
    amplitudes_at,
    check_unitarity,
    scattering_wave,
    smatrix,
    step_amplitudes,
    step_delta_exact,
    step_delta_exact_rl,
    step_wave,
    transfer_matrix_amplitudes,
    unitarity_residuals,
)
from errors import ConfigError, InvariantViolation
from potential import Channel, branch_momentum, pure_step, random_potential, step_delta

MOMENTA = np.concatenate([np.linspace(0.05, 1.4, 12), np.linspace(1.45, 4.0, 12), -np.linspace(1.5, 3.0, 4)])


@pytest.mark.parametrize("p", MOMENTA)
def test_transfer_matches_pure_step(step, p):
    bm = branch_momentum(p, step.v0)
    got = transfer_matrix_amplitudes(step, bm)
    want = step_amplitudes(bm)
    assert got.t_l == pytest.approx(want.t_l, abs=1e-12)
    assert got.r_l == pytest.approx(want.r_l, abs=1e-12)
    if bm.is_open:
        assert got.t_r == pytest.approx(want.t_r, abs=1e-12)
        assert got.r_r == pytest.approx(want.r_r, abs=1e-12)
    else:
        assert got.t_r is None and got.r_r is None


@pytest.mark.parametrize("p", MOMENTA)
def test_transfer_matches_step_delta(p):
    pot = step_delta(1.0, 0.3)
    bm = branch_momentum(p, pot.v0)
    got = transfer_matrix_amplitudes(pot, bm)
    want = step_delta_exact(bm, 0.3)
    assert got.t_l == pytest.approx(want.t_l, abs=1e-12)
    assert got.r_l == pytest.approx(want.r_l, abs=1e-12)
    if bm.is_open:
        assert got.t_r == pytest.approx(want.t_r, abs=1e-12)
        assert got.r_r == pytest.approx(want.r_r, abs=1e-12)


def test_pure_step_at_p2():
    amp = amplitudes_at(pure_step(1.0), 2.0)
    s2 = math.sqrt(2.0)
    assert amp.t_l == pytest.approx(4.0 / (2.0 + s2))
    assert amp.r_l == pytest.approx((2.0 - s2) / (2.0 + s2))
    assert amp.t_r == pytest.approx(2.0 * s2 / (2.0 + s2))
    assert amp.r_r == pytest.approx((s2 - 2.0) / (2.0 + s2))


def test_reflectance_below_threshold_is_one(fig1):
    for p in np.linspace(0.05, 1.41, 30):
        amp = amplitudes_at(fig1, p)
        assert amp.channel is Channel.EVANESCENT
        assert amp.reflectance == pytest.approx(1.0, abs=1e-10)


def test_step_delta_reflectance_value(fig1):
    assert amplitudes_at(fig1, 2.0).reflectance == pytest.approx(0.029471, rel=1e-4)


def test_unitarity_over_random_ensemble(rng):
    for _ in range(20):
        pot = random_potential(rng)
        for p in (0.3, 1.1, 2.5, -2.5):
            bm = branch_momentum(p, pot.v0)
            if bm.channel is Channel.THRESHOLD:
                continue
            amp = transfer_matrix_amplitudes(pot, bm)
            residuals = check_unitarity(amp, tol=1e-9)
            if bm.is_open:
                assert set(residuals) == {"flux_left", "flux_right", "cross", "time_reversal"}
                assert smatrix(amp).is_unitary(1e-9)
            else:
                assert set(residuals) == {"evanescent_modulus"}


def test_corrupted_amplitude_names_invariant(barrier):
    amp = amplitudes_at(barrier, 2.0)
    bad = type(amp)(amp.p, amp.q, amp.t_l, amp.r_l * 1.01, amp.t_r, amp.r_r, amp.channel)
    with pytest.raises(InvariantViolation) as err:
        check_unitarity(bad)
    assert err.value.name == "flux_left"
    assert err.value.residual > 1e-4


def test_time_reversal_pairing(layered):
    amp = amplitudes_at(layered, 2.2)
    assert amp.t_r == pytest.approx((amp.q / amp.p).real * amp.t_l, abs=1e-12)
    assert unitarity_residuals(amp)["time_reversal"] < 1e-12


def test_threshold_is_rejected(step):
    with pytest.raises(ConfigError):
        transfer_matrix_amplitudes(step, branch_momentum(math.sqrt(2.0), 1.0))


def test_evanescent_smatrix_is_phase(barrier):
    s = smatrix(amplitudes_at(barrier, 0.7))
    assert s.matrix.shape == (1, 1)
    assert abs(s.matrix[0, 0]) == pytest.approx(1.0, abs=1e-12)


def _schrodinger_defect(wave, pot, x, h=1e-3):
    psi = wave.unnormalized(np.array([x - h, x, x + h]))
    lap = (psi[2] - 2 * psi[1] + psi[0]) / h ** 2
    return abs(-0.5 * lap + pot(x) * psi[1] - wave.energy * psi[1])


@pytest.mark.parametrize("x", [-0.7, 0.3, 0.5, 0.8, 1.6])
def test_wave_solves_schrodinger(barrier, x):
    bm = branch_momentum(2.5, barrier.v0)
    for side, sign in ((LEFT, 1), (RIGHT, -1)):
        wave = scattering_wave(barrier, bm, sign, side)
        assert _schrodinger_defect(wave, barrier, x) < 1e-4


def test_schrodinger_defect_is_second_order_in_step(barrier):
    bm = branch_momentum(2.5, barrier.v0)
    wave = scattering_wave(barrier, bm, 1, LEFT)
    xs = [-0.7, 0.3, 0.5, 0.8, 1.6]
    coarse = max(_schrodinger_defect(wave, barrier, x, h=2e-2) for x in xs)
    fine = max(_schrodinger_defect(wave, barrier, x, h=1e-2) for x in xs)
    assert coarse / fine > 3.0


def test_scattering_states_are_delta_normalized(step):
    # <p'|p> over a box of half-width L is a nascent delta of width ~ 1/L
    dx = 0.05
    x = np.arange(-400.0, 400.0 + 0.5 * dx, dx)
    p = 2.0
    ref = np.conj(scattering_wave(step, branch_momentum(p, step.v0), 1, LEFT)(x))
    labels = np.linspace(1.5, 2.5, 801)
    overlap = np.array(
        [integrate.trapezoid(ref * scattering_wave(step, branch_momentum(k, step.v0), 1, LEFT)(x), x) for k in labels]
    )
    assert abs(labels[np.argmax(overlap.real)] - p) <= 2 * (labels[1] - labels[0])
    assert integrate.trapezoid(overlap.real, labels) == pytest.approx(1.0, abs=1e-2)


def test_wave_is_continuous_at_edges(layered):
    bm = branch_momentum(1.9, layered.v0)
    wave = scattering_wave(layered, bm, 1, LEFT)
    for edge in (layered.a, layered.b, 0.0):
        assert wave(edge - 1e-10) == pytest.approx(wave(edge + 1e-10), abs=1e-7)


def test_delta_kink(layered):
    bm = branch_momentum(1.9, layered.v0)
    wave = scattering_wave(layered, bm, 1, LEFT)
    x0, strength = layered.deltas[0].x0, layered.deltas[0].strength
    h = 1e-6
    jump = (wave(x0 + h) - wave(x0)) / h - (wave(x0) - wave(x0 - h)) / h
    assert jump == pytest.approx(2.0 * strength * wave(x0), rel=1e-3, abs=1e-6)


def test_asymptotic_forms(barrier):
    bm = branch_momentum(2.5, barrier.v0)
    amp = transfer_matrix_amplitudes(barrier, bm)
    wave = scattering_wave(barrier, bm, 1, LEFT)
    x = -3.0
    assert wave.unnormalized(x) == pytest.approx(np.exp(2.5j * x) + amp.r_l * np.exp(-2.5j * x))
    x = 4.0
    assert wave.unnormalized(x) == pytest.approx(amp.t_l * np.exp(1j * bm.q * x))
    assert wave.norm == pytest.approx(1.0 / math.sqrt(2.0 * math.pi))


def test_right_wave_needs_open_channel(barrier):
    with pytest.raises(ConfigError):
        scattering_wave(barrier, branch_momentum(1.0, barrier.v0), -1, RIGHT)
    with pytest.raises(ConfigError):
        scattering_wave(barrier, branch_momentum(2.0, barrier.v0), 1, RIGHT)


def test_step_wave_matches_pure_step():
    bm = branch_momentum(2.0, 1.0)
    wave = step_wave(bm, LEFT)
    amp = step_amplitudes(bm)
    assert wave.left_coeffs[1] == pytest.approx(amp.r_l)
    assert wave.right_coeffs[0] == pytest.approx(amp.t_l)


@pytest.mark.parametrize("p", [0.3, 1.2, 2.0, -2.5])
def test_step_delta_reflection_shortcut(p):
    bm = branch_momentum(p, 1.0)
    assert step_delta_exact_rl(bm, 0.2) == step_delta_exact(bm, 0.2).r_l
