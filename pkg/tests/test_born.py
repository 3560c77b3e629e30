import numpy as np
import pytest

from born import (
    BornScheme,
    born_inout1,
    born_lp1,
    born_mm1,
    born_mm1_right,
    born_mm2,
    inout1_coefficient,
)
from closed_form import step_delta_exact
from errors import ConfigError
from potential import Delta, Potential, branch_momentum, step_delta

V0, V1 = 1.0, 0.01


def fig1_at(p):
    pot = step_delta(V0, V1)
    return pot, branch_momentum(p, V0)


def test_mm1_closed_form():
    pot, bm = fig1_at(2.0)
    res = born_mm1(pot, bm)
    assert res.scheme is BornScheme.MM1
    assert res.value == pytest.approx(V0 / 8.0 - 1j * V1 / 2.0, abs=1e-14)
    assert abs(res.value) ** 2 == pytest.approx(0.01565, rel=1e-12)


def test_lp1_close_to_exact_reflection():
    pot, bm = fig1_at(2.0)
    q = bm.q
    t_s = 2 * bm.p / (bm.p + q)
    r_s = (bm.p - q) / (bm.p + q)
    res = born_lp1(pot, bm)
    assert res.value == pytest.approx(r_s - 1j / bm.p * t_s ** 2 * V1, abs=1e-14)
    exact = abs(step_delta_exact(bm, V1).r_l) ** 2
    assert abs(res.value) ** 2 == pytest.approx(exact, rel=1e-3)
    # MM1 misses the step reflection at this order
    assert abs(abs(born_mm1(pot, bm).value) ** 2 - exact) > 1e-2 * exact


def test_lp1_below_threshold_is_total_reflection_without_delta():
    pot = Potential(V0, 0.0, 0.0)
    bm = branch_momentum(0.9, V0)
    assert abs(born_lp1(pot, bm).value) == pytest.approx(1.0, abs=1e-14)


def test_mm1_right_closed_form():
    pot, bm = fig1_at(2.0)
    q = bm.q.real
    res = born_mm1_right(pot, bm)
    assert res.value == pytest.approx(-1j * V1 / q - V0 / (2 * q * q), abs=1e-14)


def test_mm1_right_needs_open_channel():
    pot, bm = fig1_at(1.0)
    with pytest.raises(ConfigError):
        born_mm1_right(pot, bm)


def test_mm2_delta_without_step():
    pot = Potential(0.0, 0.0, 0.0, (), (Delta(0.0, 0.3),))
    bm = branch_momentum(1.5, 0.0)
    assert born_mm2(pot, bm).value == pytest.approx(-(0.3 ** 2) / 1.5 ** 2, rel=1e-12)


@pytest.mark.parametrize("p", [0.5, 2.0])
def test_mm2_step_delta_closed_form(p):
    pot, bm = fig1_at(p)
    expected = -(V1 ** 2) / p ** 2 - 1j * V1 * V0 / p ** 3 + V0 ** 2 / (2 * p ** 4)
    res = born_mm2(pot, bm)
    assert res.value == pytest.approx(expected, rel=1e-3)
    assert res.error is not None and res.error < 1e-3 * abs(res.value)


def test_mm2_diverges_like_inverse_fourth_power():
    pot = step_delta(V0, V1)
    ps = np.geomspace(0.02, 0.2, 6) * pot.p0
    results = [born_mm2(pot, branch_momentum(p, V0)) for p in ps]
    for res in results:
        assert res.error is not None and np.isfinite(res.error)
        assert res.error < 1e-3 * abs(res.value)
    (slope, _), cov = np.polyfit(np.log(ps), np.log([abs(res.value) for res in results]), 1, cov=True)
    assert -4.5 < slope < -3.5
    assert np.sqrt(cov[0, 0]) < 0.1


def test_inout1_coefficient_closed_form():
    pot, bm = fig1_at(2.0)
    q = bm.q.real
    expected = (bm.p - q) / (2 * q) + V1 / (1j * q)
    assert inout1_coefficient(pot, bm) == pytest.approx(expected, abs=1e-14)


def test_inout1_asymptotic_fit():
    pot, bm = fig1_at(2.0)
    res = born_inout1(pot, bm)
    assert res.error < 1e-6
    assert res.wavenumber == pytest.approx(bm.q.real / pot.units.hbar, abs=1e-6)
    assert len(res.metadata["samples"]) > 3


def test_inout1_rejects_samples_inside_support():
    pot, bm = fig1_at(2.0)
    with pytest.raises(ConfigError):
        born_inout1(pot, bm, xs=[-3.0, 0.5])


def test_inout1_needs_open_channel():
    pot, bm = fig1_at(1.0)
    with pytest.raises(ConfigError):
        born_inout1(pot, bm)


@pytest.mark.parametrize("fn", [born_mm1, born_lp1, born_mm2, born_inout1])
def test_negative_label_rejected(fn):
    pot = step_delta(V0, V1)
    with pytest.raises(ConfigError):
        fn(pot, branch_momentum(-2.0, V0))


def test_lp1_tracks_exact_reflectance_while_mm1_diverges():
    from closed_form import transfer_matrix_amplitudes

    pot = step_delta(V0, V1)
    lp_gap, mm_gap = [], []
    for p in np.linspace(0.05, 3.0, 300):
        bm = branch_momentum(p, V0)
        exact = abs(transfer_matrix_amplitudes(pot, bm).r_l) ** 2
        if p < pot.p0:
            assert exact == pytest.approx(1.0, abs=1e-10)
            continue
        lp_gap.append(abs(abs(born_lp1(pot, bm).value) ** 2 - exact))
        mm_gap.append(abs(abs(born_mm1(pot, bm).value) ** 2 - exact))
    assert max(lp_gap) < 1e-3
    assert max(mm_gap) > 1e-2
    assert abs(born_mm1(pot, branch_momentum(0.1, V0)).value) ** 2 > 1e3
