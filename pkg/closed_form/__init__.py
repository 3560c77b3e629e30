from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigError, InvariantViolation, NumericalError
from potential import BranchMomentum, Channel, Potential, Segment, branch_momentum, pure_step

LEFT = "left"
RIGHT = "right"

# |alpha| of the incident-wave coefficient below this (after renormalization) is singular matching.
SINGULAR_TOL = 1e-300


@dataclass(frozen=True)
class AmplitudeSet:
    """
    T^l, R^l, T^r, R^r at label p, multiplying the plane waves of the
    left-incident and right-incident scattering states. t_r/r_r are None
    when only the left channel is open.
    """

    p: float
    q: complex
    t_l: complex
    r_l: complex
    t_r: Optional[complex]
    r_r: Optional[complex]
    channel: Channel
    method: str = "closed_form"

    @property
    def reflectance(self) -> float:
        return abs(self.r_l) ** 2


@dataclass(frozen=True)
class SMatrix:
    matrix: np.ndarray
    channel: Channel

    def defect(self) -> float:
        s = self.matrix
        return float(np.max(np.abs(s @ s.conj().T - np.eye(s.shape[0]))))

    def is_unitary(self, tol: float = 1e-10) -> bool:
        return self.defect() <= tol


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    anchor: float
    psi: complex
    dpsi: complex
    k2: float


@dataclass(frozen=True)
class ScatteringWave:
    """
    <x|p^sign> for one incidence side.

    x < a:  left_coeffs[0] e^{ipx/hbar} + left_coeffs[1] e^{-ipx/hbar}
    x > b:  right_coeffs[0] e^{iqx/hbar} + right_coeffs[1] e^{-iqx/hbar}
    inside: propagated from the transfer sweep, times `norm` overall.
    """

    p: float
    q: complex
    sign: int
    side: str
    energy: float
    a: float
    b: float
    hbar: float
    left_coeffs: Tuple[complex, complex]
    right_coeffs: Tuple[complex, complex]
    norm: float
    pieces: Tuple[Piece, ...]

    def unnormalized(self, x):
        xs = np.asarray(x, dtype=float)
        out = np.zeros(xs.shape, dtype=complex)
        kp = self.p / self.hbar
        kq = self.q / self.hbar
        left = xs < self.a
        right = xs > self.b
        out[left] = self.left_coeffs[0] * np.exp(1j * kp * xs[left]) + self.left_coeffs[1] * np.exp(-1j * kp * xs[left])
        out[right] = self.right_coeffs[0] * np.exp(1j * kq * xs[right]) + self.right_coeffs[1] * np.exp(-1j * kq * xs[right])
        middle = ~(left | right)
        if np.any(middle):
            xm = xs[middle]
            if self.pieces:
                vals = evaluate_pieces(self.pieces, xm)
            else:
                # support collapsed to a point: both asymptotic forms agree there
                vals = self.left_coeffs[0] * np.exp(1j * kp * xm) + self.left_coeffs[1] * np.exp(-1j * kp * xm)
            out[middle] = vals
        if np.ndim(x) == 0:
            return complex(out)
        return out

    def __call__(self, x):
        return self.norm * self.unnormalized(x)


def _propagate_value(piece: Piece, x: np.ndarray) -> np.ndarray:
    d = x - piece.anchor
    k = np.sqrt(complex(piece.k2))
    return piece.psi * np.cos(k * d) + piece.dpsi * d * np.sinc(k * d / np.pi)


def evaluate_pieces(pieces: Tuple[Piece, ...], x: np.ndarray) -> np.ndarray:
    """Interior wave at points of [a, b] from the per-piece anchored states."""
    x = np.asarray(x, dtype=float)
    vals = np.zeros(x.shape, dtype=complex)
    his = np.array([pc.hi for pc in pieces])
    idx = np.clip(np.searchsorted(his, x, side="left"), 0, len(pieces) - 1)
    for j in np.unique(idx):
        sel = idx == j
        vals[sel] = _propagate_value(pieces[j], x[sel])
    return vals


def _piece_matrix(k2: float, d: float) -> np.ndarray:
    k = np.sqrt(complex(k2))
    c = np.cos(k * d)
    s = d * np.sinc(k * d / np.pi)
    return np.array([[c, s], [-k2 * s, c]], dtype=complex)


def _delta_jumps(pot: Potential) -> Dict[float, float]:
    g = 2.0 * pot.units.mass / pot.units.hbar ** 2
    jumps: Dict[float, float] = {}
    for d in pot.deltas:
        jumps[d.x0] = jumps.get(d.x0, 0.0) + g * d.strength
    return jumps


def _k2(pot: Potential, energy: float, height: float) -> float:
    return 2.0 * pot.units.mass * (energy - height) / pot.units.hbar ** 2


def _renorm(state: np.ndarray) -> Tuple[np.ndarray, float]:
    n = float(np.max(np.abs(state)))
    if n == 0.0 or not math.isfinite(n):
        raise NumericalError(f"transfer sweep: state norm became {n}")
    return state / n, math.log(n)


def sweep(pot: Potential, energy: float, state: np.ndarray, direction: int):
    """
    Carry (psi, psi') across [a, b]. direction=-1 starts at b+ and ends at a-,
    direction=+1 starts at a- and ends at b+. Returns the end state, the total
    log-scale, and the per-piece anchors with the log-scale at each anchor.
    """
    jumps = _delta_jumps(pot)
    pieces = pot.pieces()
    scale = 0.0
    anchors: List[Tuple[Segment, float, np.ndarray, float]] = []
    state = np.asarray(state, dtype=complex)
    if direction < 0:
        state = state - np.array([0.0, jumps.get(pot.b, 0.0) * state[0]])
        for seg in reversed(pieces):
            anchors.append((seg, seg.hi, state.copy(), scale))
            state = _piece_matrix(_k2(pot, energy, seg.height), seg.lo - seg.hi) @ state
            state, ds = _renorm(state)
            scale += ds
            state = state - np.array([0.0, jumps.get(seg.lo, 0.0) * state[0]])
        anchors.reverse()
    else:
        state = state + np.array([0.0, jumps.get(pot.a, 0.0) * state[0]])
        for seg in pieces:
            anchors.append((seg, seg.lo, state.copy(), scale))
            state = _piece_matrix(_k2(pot, energy, seg.height), seg.hi - seg.lo) @ state
            state, ds = _renorm(state)
            scale += ds
            state = state + np.array([0.0, jumps.get(seg.hi, 0.0) * state[0]])
    return state, scale, anchors


def _split_waves(state: np.ndarray, k: complex, x: float) -> Tuple[complex, complex]:
    """Coefficients (alpha, beta) of alpha e^{ikx} + beta e^{-ikx} matching (psi, psi') at x."""
    psi, dpsi = state
    alpha = 0.5 * (psi + dpsi / (1j * k)) * np.exp(-1j * k * x)
    beta = 0.5 * (psi - dpsi / (1j * k)) * np.exp(1j * k * x)
    return complex(alpha), complex(beta)


def build_pieces(pot: Potential, energy: float, anchors, total: float, lead: complex) -> Tuple[Piece, ...]:
    out = []
    for seg, anchor, st, s in anchors:
        factor = math.exp(s - total) / lead
        out.append(Piece(seg.lo, seg.hi, anchor, complex(st[0] * factor), complex(st[1] * factor), _k2(pot, energy, seg.height)))
    return tuple(out)


def _left_solution(pot: Potential, bm: BranchMomentum):
    """u = e^{ipx} + R e^{-ipx} (x<a), T e^{iqx} (x>b); returns (T, R, pieces)."""
    hbar = pot.units.hbar
    kq = bm.q / hbar
    start = np.array([np.exp(1j * kq * pot.b), 1j * kq * np.exp(1j * kq * pot.b)])
    end, total, anchors = sweep(pot, bm.energy, start, -1)
    alpha, beta = _split_waves(end, bm.p / hbar, pot.a)
    if abs(alpha) < SINGULAR_TOL:
        raise NumericalError(f"transfer matching is singular at p={bm.p}")
    t = math.exp(-total) / alpha
    r = beta / alpha
    return complex(t), complex(r), build_pieces(pot, bm.energy, anchors, total, alpha)


def _right_solution(pot: Potential, bm: BranchMomentum):
    """u = T e^{ipx} (x<a), e^{iqx} + R e^{-iqx} (x>b); label p; returns (T, R, pieces)."""
    hbar = pot.units.hbar
    kp = bm.p / hbar
    start = np.array([np.exp(1j * kp * pot.a), 1j * kp * np.exp(1j * kp * pot.a)])
    end, total, anchors = sweep(pot, bm.energy, start, +1)
    gamma, delta = _split_waves(end, bm.q / hbar, pot.b)
    if abs(gamma) < SINGULAR_TOL:
        raise NumericalError(f"transfer matching is singular at p={bm.p}")
    t = math.exp(-total) / gamma
    r = delta / gamma
    return complex(t), complex(r), build_pieces(pot, bm.energy, anchors, total, gamma)


# ----------------
# Closed forms
# ----------------
def step_amplitudes(bm: BranchMomentum) -> AmplitudeSet:
    p, q = bm.p, bm.q
    t_l = 2 * p / (q + p)
    r_l = (p - q) / (q + p)
    t_r = r_r = None
    if bm.is_open:
        t_r = 2 * q / (p + q)
        r_r = (q - p) / (p + q)
    return AmplitudeSet(p, q, complex(t_l), complex(r_l), t_r, r_r, bm.channel, "step")


def step_delta_exact_rl(bm: BranchMomentum, v1: float) -> complex:
    """R^l of V0 theta(x) + V1 delta(x)."""
    g = 2j * bm.units.mass * v1 / bm.units.hbar
    return complex((bm.p - bm.q - g) / (bm.p + bm.q + g))


def step_delta_exact(bm: BranchMomentum, v1: float) -> AmplitudeSet:
    g = 2j * bm.units.mass * v1 / bm.units.hbar
    p, q = bm.p, bm.q
    t_l = 2 * p / (p + q + g)
    r_l = (p - q - g) / (p + q + g)
    t_r = r_r = None
    if bm.is_open:
        t_r = 2 * q / (p + q + g)
        r_r = (q - p - g) / (p + q + g)
    return AmplitudeSet(p, q, complex(t_l), complex(r_l), t_r, r_r, bm.channel, "step_delta")


# ----------------
# Transfer matrices
# ----------------
def transfer_matrix_amplitudes(pot: Potential, bm: BranchMomentum) -> AmplitudeSet:
    bm.require_off_threshold("transfer_matrix_amplitudes")
    t_l, r_l, _ = _left_solution(pot, bm)
    t_r = r_r = None
    if bm.is_open:
        t_r, r_r, _ = _right_solution(pot, bm.flipped())
    return AmplitudeSet(bm.p, bm.q, t_l, r_l, t_r, r_r, bm.channel, "transfer_matrix")


def scattering_wave(pot: Potential, bm: BranchMomentum, sign: int, side: str) -> ScatteringWave:
    """
    side=LEFT gives |p^{sign(p)}>, side=RIGHT gives |p^{-sign(p)}> (both channels open),
    with the h^{-1/2} and (p/q)^{1/2} prefactors in `norm`.
    """
    bm.require_off_threshold("scattering_wave")
    h = pot.units.h
    if side == LEFT:
        if sign != bm.sign:
            raise ConfigError(f"scattering_wave: left-incident state at p={bm.p} has sign {bm.sign}, got {sign}")
        t, r, pieces = _left_solution(pot, bm)
        return ScatteringWave(
            bm.p, bm.q, sign, side, bm.energy, pot.a, pot.b, pot.units.hbar,
            (1.0 + 0j, r), (t, 0j), 1.0 / math.sqrt(h), pieces,
        )
    if side == RIGHT:
        if bm.channel is Channel.EVANESCENT:
            raise ConfigError(f"scattering_wave: right-incident state needs |p| > p0, got p={bm.p}")
        if sign != -bm.sign:
            raise ConfigError(f"scattering_wave: right-incident state at p={bm.p} has sign {-bm.sign}, got {sign}")
        t, r, pieces = _right_solution(pot, bm)
        ratio = (bm.p / bm.q).real
        return ScatteringWave(
            bm.p, bm.q, sign, side, bm.energy, pot.a, pot.b, pot.units.hbar,
            (t, 0j), (1.0 + 0j, r), math.sqrt(ratio / h), pieces,
        )
    raise ConfigError(f"scattering_wave: side must be '{LEFT}' or '{RIGHT}', got {side!r}")


def step_wave(bm: BranchMomentum, side: str) -> ScatteringWave:
    """Eigenstate of the pure step V0 theta(x) with the same label."""
    v0 = bm.p0 ** 2 / (2.0 * bm.units.mass)
    sign = bm.sign if side == LEFT else -bm.sign
    return scattering_wave(pure_step(v0, bm.units), bm, sign, side)


def smatrix(amp: AmplitudeSet) -> SMatrix:
    if amp.channel is Channel.TWO_OPEN:
        if amp.t_r is None or amp.r_r is None:
            raise ConfigError(f"smatrix: right-incident amplitudes missing at p={amp.p}")
        ratio = (amp.q / amp.p).real
        s = np.array(
            [
                [math.sqrt(ratio) * amp.t_l, amp.r_l],
                [amp.r_r, amp.t_r / math.sqrt(ratio)],
            ],
            dtype=complex,
        )
        return SMatrix(s, amp.channel)
    if amp.channel is Channel.EVANESCENT:
        return SMatrix(np.array([[amp.r_l]], dtype=complex), amp.channel)
    raise ConfigError(f"smatrix: undefined on the threshold p={amp.p}")


def unitarity_residuals(amp: AmplitudeSet) -> Dict[str, float]:
    """Named deviations from flux conservation and time reversal."""
    if amp.channel is Channel.EVANESCENT:
        return {"evanescent_modulus": abs(abs(amp.r_l) - 1.0)}
    if amp.channel is not Channel.TWO_OPEN or amp.t_r is None or amp.r_r is None:
        return {}
    ratio = (amp.q / amp.p).real
    return {
        "flux_left": abs(ratio * abs(amp.t_l) ** 2 + abs(amp.r_l) ** 2 - 1.0),
        "flux_right": abs(abs(amp.t_r) ** 2 / ratio + abs(amp.r_r) ** 2 - 1.0),
        "cross": abs(amp.t_r * np.conj(amp.r_l) / ratio + amp.r_r * np.conj(amp.t_l)),
        "time_reversal": abs(amp.t_r - ratio * amp.t_l),
    }


def check_unitarity(amp: AmplitudeSet, tol: float = 1e-10) -> Dict[str, float]:
    residuals = unitarity_residuals(amp)
    for name, value in residuals.items():
        if not value <= tol:
            raise InvariantViolation(f"{name} residual {value:.3e} exceeds {tol:.1e} at p={amp.p}", name, value)
    return residuals


def amplitudes_at(pot: Potential, p: float) -> AmplitudeSet:
    return transfer_matrix_amplitudes(pot, branch_momentum(p, pot.v0, pot.units))
