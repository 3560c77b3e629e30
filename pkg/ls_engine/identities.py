from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from closed_form import LEFT, RIGHT, scattering_wave
from errors import ConfigError, NumericalError
from greens import g_free, g_shifted
from ls_engine.quadrature import QuadratureGrid, build_grid
from ls_engine.solver import (
    Coeffs,
    LSolution,
    Partitioning,
    phase,
    piecewise_plane,
    solve_ls,
    state_coefficients,
    step_left_coeffs,
    step_right_coeffs,
)
from potential import BranchMomentum, PartitionKind, Potential, branch_momentum, partition


def check_alternative_ls(sol: LSolution) -> float:
    """
    max |psi - tail - G_other V_other psi| / max |psi| over the collocation nodes,
    with the kernel and residual potential of the complementary channel.
    The tail is the closed-form contribution of the constant piece outside [a, b].
    """
    pot, bm = sol.pot, sol.bm
    hb = pot.units.hbar
    x, u = sol.grid.points, sol.values
    if u.size == 0:
        return 0.0
    left, right = state_coefficients(sol)
    if sol.is_left_type:
        p, q = bm.p, bm.q
        r = left[1]
        kernel = sol.grid.kernel_matrix(lambda t, xp: g_shifted(bm.energy, sol.sign, t, xp, pot.v0, pot.units))
        v = sol.grid.potential_values(partition(pot, PartitionKind.RIGHT))
        tail = phase(q, x, hb) * (
            (p + q) / (2 * q) * phase(p - q, pot.a, hb) - (p - q) / (2 * q) * r * phase(-(p + q), pot.a, hb)
        )
    else:
        k, q = -bm.p, bm.q
        d = right[1]
        kernel = sol.grid.kernel_matrix(lambda t, xp: g_free(bm.energy, sol.sign, t, xp, pot.units))
        v = sol.grid.potential_values(partition(pot, PartitionKind.LEFT))
        tail = phase(-k, x, hb) * (
            (k - q) / (2 * k) * phase(k + q, pot.b, hb) + d * (k + q) / (2 * k) * phase(k - q, pot.b, hb)
        )
    resid = u - tail - kernel @ (v * u)
    return float(np.max(np.abs(resid)) / np.max(np.abs(u)))


# ----------------
# Two-potential formula
# ----------------
@dataclass(frozen=True)
class _Ket:
    bm: BranchMomentum
    values: np.ndarray
    left: Coeffs
    right: Coeffs
    step_left: Coeffs
    step_right: Coeffs
    norm: complex


def _ket(pot: Potential, bm: BranchMomentum, left_type: bool, method: str, grid: QuadratureGrid) -> _Ket:
    step = step_left_coeffs(bm.p, bm.q) if left_type else step_right_coeffs(bm.p, bm.q)
    if method == "lp":
        sign = bm.sign if left_type else -bm.sign
        sol = solve_ls(pot, bm, Partitioning.LP, sign, grid)
        left, right = state_coefficients(sol)
        return _Ket(bm, sol.values, left, right, step[0], step[1], sol.norm)
    if method == "transfer":
        wave = scattering_wave(pot, bm, bm.sign if left_type else -bm.sign, LEFT if left_type else RIGHT)
        values = np.asarray(wave.unnormalized(grid.points), dtype=complex)
        return _Ket(bm, values, wave.left_coeffs, wave.right_coeffs, step[0], step[1], wave.norm)
    raise ConfigError(f"check_two_potential: method must be 'lp' or 'transfer', got {method!r}")


def _tail(coeffs: Coeffs, k: complex, bra: complex, edge: float, hbar: float, upward: bool) -> complex:
    """int e^{-i bra x} (c0 e^{ikx} + c1 e^{-ikx}) over [edge, inf) or (-inf, edge], Abel-regularized."""
    total = 0j
    for c, kappa in ((coeffs[0], k), (coeffs[1], -k)):
        if c == 0:
            continue
        diff = kappa - bra
        if abs(diff) == 0.0:
            raise NumericalError(f"tail integral degenerate: exponent {kappa} matches bra momentum {bra}")
        factor = 1j * hbar if upward else -1j * hbar
        total += c * factor * complex(phase(diff, edge, hbar)) / diff
    return total


def check_two_potential(
    pot: Potential,
    bm: BranchMomentum,
    sign_combo: int,
    channel: str = "p",
    method: str = "lp",
    grid: Optional[QuadratureGrid] = None,
) -> Tuple[complex, complex]:
    """
    Both sides of the two-potential formula splitting V = V0 theta + V_s.

    channel="p":   <p|V|+-p^{-sign(p)}> = <p|V0 theta|+-p_s^{-sign(p)}> + <p_s^{sign(p)}|V_s|+-p^{-sign(p)}>
    channel="q_N": <q_N|V - V0|+-p^{sign(p)}> = <q_N|V0 theta - V0|+-p_s^{sign(p)}> + <q_N,s|V_s|+-p^{sign(p)}>

    Bras are continued from real momenta without conjugation.
    """
    if sign_combo not in (1, -1):
        raise ConfigError(f"check_two_potential: sign_combo must be +1 or -1, got {sign_combo}")
    bm.require_off_threshold("check_two_potential")
    grid = grid if grid is not None else build_grid(pot)
    hb, h, v0 = pot.units.hbar, pot.units.h, pot.v0
    p, q = bm.p, bm.q
    x = grid.points
    ws = grid.potential_weights(partition(pot, PartitionKind.STEP))

    if channel == "p":
        if sign_combo > 0:
            bm.require_open("check_two_potential")
            ket = _ket(pot, bm, False, method, grid)
        else:
            ket = _ket(pot, branch_momentum(-p, v0, pot.units), True, method, grid)
        kq = ket.bm.q
        scale = ket.norm / math.sqrt(h)
        wl = grid.potential_weights(partition(pot, PartitionKind.LEFT))
        lhs = np.sum(wl * phase(-p, x, hb) * ket.values)
        first = 0j
        if v0 != 0.0:
            lhs += v0 * _tail(ket.right, kq, p, pot.b, hb, upward=True)
            first = v0 * _tail(ket.step_right, kq, p, 0.0, hb, upward=True)
        bra_s = piecewise_plane(x, -p, -q, *step_left_coeffs(-p, -q), hb)
        second = np.sum(bra_s * ws * ket.values)
        return complex(scale * lhs), complex(scale * (first + second))

    if channel == "q_N":
        bm.require_open("check_two_potential")
        if sign_combo > 0:
            ket = _ket(pot, bm, True, method, grid)
        else:
            ket = _ket(pot, bm.flipped(), False, method, grid)
        kp = ket.bm.p
        scale = ket.norm * complex(np.sqrt(complex(p / q) / h))
        wr = grid.potential_weights(partition(pot, PartitionKind.RIGHT))
        lhs = np.sum(wr * phase(-q, x, hb) * ket.values)
        first = 0j
        if v0 != 0.0:
            lhs += -v0 * _tail(ket.left, kp, q, pot.a, hb, upward=False)
            first = -v0 * _tail(ket.step_left, kp, q, 0.0, hb, upward=False)
        bra_s = piecewise_plane(x, -p, -q, *step_right_coeffs(-p, -q), hb)
        second = np.sum(bra_s * ws * ket.values)
        return complex(scale * lhs), complex(scale * (first + second))

    raise ConfigError(f"check_two_potential: channel must be 'p' or 'q_N', got {channel!r}")
