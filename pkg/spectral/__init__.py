from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from closed_form import LEFT, RIGHT, Piece, build_pieces, evaluate_pieces, scattering_wave, sweep
from errors import ConfigError, NumericalError
from potential import BranchMomentum, Potential, branch_momentum, evaluate, pure_step

SCAN_POINTS = 600
ENERGY_XTOL = 1e-12
LEAKAGE_TOL = 1e-4


# ----------------
# Bound states
# ----------------
@dataclass(frozen=True)
class BoundState:
    """Normalized bound state; tails psi_a e^{kappa_left (x-a)} and psi_b e^{-kappa_right (x-b)}."""

    energy: float
    kappa_left: float
    kappa_right: float
    a: float
    b: float
    psi_a: float
    psi_b: float
    pieces: Tuple[Piece, ...]
    scale: float

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        out = np.zeros(xs.shape, dtype=float)
        left = xs < self.a
        right = xs > self.b
        out[left] = self.psi_a * np.exp(self.kappa_left * (xs[left] - self.a))
        out[right] = self.psi_b * np.exp(-self.kappa_right * (xs[right] - self.b))
        mid = ~(left | right)
        if np.any(mid):
            if self.pieces:
                out[mid] = self.scale * evaluate_pieces(self.pieces, xs[mid]).real
            else:
                out[mid] = self.psi_b
        if np.ndim(x) == 0:
            return float(out)
        return out


def _decay_constants(pot: Potential, energy: float) -> Tuple[float, float]:
    m, hb = pot.units.mass, pot.units.hbar
    return math.sqrt(-2.0 * m * energy) / hb, math.sqrt(2.0 * m * (pot.v0 - energy)) / hb


def _growing_coefficient(pot: Potential, energy: float) -> float:
    """Coefficient of e^{-kappa x} left of a for the solution decaying right of b (up to a positive factor)."""
    kl, kr = _decay_constants(pot, energy)
    end, _, _ = sweep(pot, energy, np.array([1.0, -kr]), -1)
    return float((end[0] - end[1] / kl).real)


def _energy_floor(pot: Potential) -> float:
    m, hb = pot.units.mass, pot.units.hbar
    lowest = min([0.0] + [s.height for s in pot.segments])
    attraction = sum(-d.strength for d in pot.deltas if d.strength < 0)
    return lowest - 2.0 * m * attraction ** 2 / hb ** 2


def _scan_energies(floor: float, count: int) -> np.ndarray:
    span = -floor
    uniform = np.linspace(floor, 0.0, count + 2)[1:-1]
    near_zero = -span * np.geomspace(1e-2, 1e-12, count // 4)
    return np.unique(np.concatenate([uniform, near_zero]))


def _bound_state(pot: Potential, energy: float) -> BoundState:
    kl, kr = _decay_constants(pot, energy)
    end, total, anchors = sweep(pot, energy, np.array([1.0, -kr]), -1)
    pieces = build_pieces(pot, energy, anchors, 0.0, 1.0)
    psi_a = float(end[0].real * math.exp(total))

    interior = 0.0
    ref_x, ref_w = np.polynomial.legendre.leggauss(48)
    for pc in pieces:
        half = 0.5 * (pc.hi - pc.lo)
        xs = pc.lo + half * (ref_x + 1.0)
        interior += half * float(np.dot(ref_w, np.abs(evaluate_pieces(pieces, xs)) ** 2))
    norm2 = interior + psi_a ** 2 / (2.0 * kl) + 1.0 / (2.0 * kr)
    scale = 1.0 / math.sqrt(norm2)
    return BoundState(energy, kl, kr, pot.a, pot.b, psi_a * scale, scale, pieces, scale)


def find_bound_states(pot: Potential, scan_points: int = SCAN_POINTS) -> List[BoundState]:
    """Roots of the growing-exponential coefficient below zero, bracketed on a scan and refined by brentq."""
    floor = _energy_floor(pot)
    if floor >= 0.0:
        return []
    energies = _scan_energies(floor, scan_points)
    values = np.array([_growing_coefficient(pot, e) for e in energies])
    states: List[BoundState] = []
    for lo, hi, flo, fhi in zip(energies[:-1], energies[1:], values[:-1], values[1:]):
        if flo == 0.0:
            states.append(_bound_state(pot, float(lo)))
            continue
        if flo * fhi < 0.0:
            root = optimize.brentq(lambda e: _growing_coefficient(pot, e), lo, hi, xtol=ENERGY_XTOL)
            states.append(_bound_state(pot, float(root)))
    return states


def _cell_averages(pot: Potential, x: np.ndarray, dx: float) -> np.ndarray:
    """Exact mean of the piecewise-constant part over [x - dx/2, x + dx/2]."""
    lo, hi = float(x[0]) - dx, float(x[-1]) + dx
    knots = np.array([lo] + [k for k in pot.breakpoints() if lo < k < hi] + [hi])
    mids = 0.5 * (knots[:-1] + knots[1:])
    steps = np.asarray(evaluate(pot, mids), dtype=float) * np.diff(knots)
    antiderivative = np.concatenate([[0.0], np.cumsum(steps)])
    upper = np.interp(x + 0.5 * dx, knots, antiderivative)
    lower = np.interp(x - 0.5 * dx, knots, antiderivative)
    return (upper - lower) / dx


def finite_difference_levels(pot: Potential, half_width: float = 20.0, n: int = 4000) -> np.ndarray:
    """
    Negative eigenvalues of the three-point discretized Hamiltonian on a Dirichlet box.
    Cells carry the averaged potential and deltas are shared between their two
    neighbouring nodes, so edges off the lattice cost O(dx^2).
    """
    m, hb = pot.units.mass, pot.units.hbar
    x = np.linspace(-half_width, half_width, n)
    dx = x[1] - x[0]
    diag = hb ** 2 / (m * dx ** 2) + _cell_averages(pot, x, dx)
    for d in pot.deltas:
        diag += d.strength * np.clip(1.0 - np.abs(x - d.x0) / dx, 0.0, None) / dx
    off = np.full(n - 1, -hb ** 2 / (2.0 * m * dx ** 2))
    floor = _energy_floor(pot)
    if floor >= 0.0:
        return np.zeros(0)
    return linalg.eigh_tridiagonal(diag, off, eigvals_only=True, select="v", select_range=(2.0 * floor, 0.0))


# ----------------
# Completeness
# ----------------
def _gauss(lo: float, hi: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def continuum_nodes(pot: Potential, n_p: int, p_max: float) -> List[Tuple[BranchMomentum, float, int, str]]:
    """
    Labels and weights for the |p^+> basis: left-incident states on (0, p_max) and
    right-incident ones on (-p_max, -p0). Below p0 the label is p0 sin(theta),
    above it sqrt(p0^2 + s^2), which removes the threshold square roots.
    """
    p0 = pot.p0
    if p_max <= p0:
        raise ConfigError(f"completeness: p_max={p_max} must exceed p0={p0}")
    s_max = math.sqrt(p_max ** 2 - p0 ** 2)
    n_low = n_p // 4 if p0 > 0 else 0
    n_high = (n_p - n_low) // 2
    out: List[Tuple[BranchMomentum, float, int, str]] = []
    if n_low:
        th, wt = _gauss(0.0, 0.5 * math.pi, n_low)
        for t, w in zip(th, wt):
            bm = branch_momentum(p0 * math.sin(t), pot.v0, pot.units)
            out.append((bm, p0 * math.cos(t) * w, +1, LEFT))
    ss, ws = _gauss(0.0, s_max, n_high)
    for s, w in zip(ss, ws):
        p = math.sqrt(p0 ** 2 + s ** 2)
        out.append((branch_momentum(p, pot.v0, pot.units), s / p * w, +1, LEFT))
        out.append((branch_momentum(-p, pot.v0, pot.units), s / p * w, +1, RIGHT))
    return out


def completeness_check(
    pot: Potential,
    test_function: Callable[[np.ndarray], np.ndarray],
    n_p: int = 800,
    p_max: float = 12.0,
    window: Optional[Tuple[float, float]] = None,
    nx: int = 1201,
    include_bound: bool = True,
) -> float:
    """Relative L2 defect of f against its expansion in bound states plus the |p^+> continuum."""
    lo, hi = window if window is not None else (pot.a - 4.0, pot.b + 4.0)
    x = np.linspace(lo, hi, nx)
    wx = np.full(nx, x[1] - x[0])
    wx[[0, -1]] *= 0.5
    f = np.asarray(test_function(x), dtype=complex)
    rec = np.zeros(nx, dtype=complex)
    for bm, weight, sign, side in continuum_nodes(pot, n_p, p_max):
        psi = scattering_wave(pot, bm, sign, side)(x)
        rec += weight * np.sum(wx * np.conj(psi) * f) * psi
    if include_bound:
        for state in find_bound_states(pot):
            phi = state(x)
            rec += np.sum(wx * phi * f) * phi
    return float(np.sqrt(np.sum(wx * np.abs(f - rec) ** 2) / np.sum(wx * np.abs(f) ** 2)))


# ----------------
# Wavepackets
# ----------------
@dataclass(frozen=True)
class Wavepacket:
    """Spectral synthesis sum_j w_j a_j e^{-i E_j t / hbar} <x|basis_j> on a box."""

    x: np.ndarray
    dx: float
    p_nodes: np.ndarray
    p_weights: np.ndarray
    amplitudes: np.ndarray
    energies: np.ndarray
    table: np.ndarray
    hbar: float

    @property
    def coefficients(self) -> np.ndarray:
        return self.p_weights * self.amplitudes

    def at(self, t: float) -> np.ndarray:
        return (self.coefficients * np.exp(-1j * self.energies * t / self.hbar)) @ self.table

    def norm(self, t: float) -> float:
        return float(math.sqrt(np.sum(np.abs(self.at(t)) ** 2) * self.dx))


@dataclass(frozen=True)
class MollerCurve:
    channel: str
    times: np.ndarray
    distances: np.ndarray
    norms: np.ndarray


MOLLER_CHANNELS = ("left", "right", "step")


def _gaussian(p: np.ndarray, center: float, width: float) -> np.ndarray:
    return (2.0 * math.pi * width ** 2) ** -0.25 * np.exp(-((p - center) ** 2) / (4.0 * width ** 2))


def _packet(x, dx, nodes, weights, amps, energies, rows, hbar) -> Wavepacket:
    return Wavepacket(x, dx, nodes, weights, amps, energies, np.array(rows), hbar)


def moller_limit_check(
    pot: Potential,
    p_center: float,
    p_width: float,
    channel: str,
    times: Optional[Sequence[float]] = None,
    half_width: Optional[float] = None,
    n_p: int = 400,
) -> MollerCurve:
    """
    ||psi(t) - phi(t)|| for a Gaussian asymptote. "left": free reference, p_center > 0.
    "right": shifted reference with p_center the momentum beyond b (< 0).
    "step": pure-step reference, in-states for t <= 0 and out-states for t > 0.
    The packet passes x = 0 at t = 0.
    """
    if channel not in MOLLER_CHANNELS:
        raise ConfigError(f"moller_limit_check: channel must be one of {MOLLER_CHANNELS}, got {channel!r}")
    if p_width <= 0:
        raise ConfigError(f"moller_limit_check: p_width must be > 0, got {p_width}")
    m, hb, h, p0 = pot.units.mass, pot.units.hbar, pot.units.h, pot.p0
    lo, hi = p_center - 6.0 * p_width, p_center + 6.0 * p_width
    if channel == "right":
        if hi >= 0.0:
            raise ConfigError("moller_limit_check: right-incident packet needs momenta < 0")
    else:
        if lo <= 0.0:
            raise ConfigError("moller_limit_check: left-incident packet needs momenta > 0")
        if lo <= p0 <= hi or (channel == "step" and lo <= p0):
            raise ConfigError(f"moller_limit_check: packet overlaps the threshold p0={p0}")

    p_fast = max(abs(lo), abs(hi))
    L = half_width if half_width is not None else 60.0 * hb / p_width
    if times is None:
        t_max = 0.6 * L * m / p_fast
        ts = np.geomspace(t_max / 50.0, t_max, 10)
        times = np.concatenate([-ts[::-1], ts])
    times = np.asarray(times, dtype=float)
    nx = int(8 * 2 * L * p_fast / (2 * math.pi * hb)) + 1
    x = np.linspace(-L, L, max(nx, 257))
    dx = x[1] - x[0]

    nodes, weights = _gauss(lo, hi, n_p)
    amps = _gaussian(nodes, p_center, p_width)
    inv = 1.0 / math.sqrt(h)
    step = pure_step(pot.v0, pot.units)

    full_in, ref_in, full_out, ref_out = [], [], [], []
    energies = nodes ** 2 / (2.0 * m)
    if channel == "left":
        for p in nodes:
            bm = branch_momentum(p, pot.v0, pot.units)
            full_in.append(scattering_wave(pot, bm, +1, LEFT)(x))
            ref_in.append(inv * np.exp(1j * p * x / hb))
    elif channel == "right":
        energies = nodes ** 2 / (2.0 * m) + pot.v0
        for k in nodes:
            bm = branch_momentum(-math.sqrt(k ** 2 + p0 ** 2), pot.v0, pot.units)
            full_in.append(inv * scattering_wave(pot, bm, +1, RIGHT).unnormalized(x))
            ref_in.append(inv * np.exp(1j * k * x / hb))
    else:
        for p in nodes:
            bm = branch_momentum(p, pot.v0, pot.units)
            full_in.append(scattering_wave(pot, bm, +1, LEFT)(x))
            ref_in.append(scattering_wave(step, bm, +1, LEFT)(x))
            full_out.append(scattering_wave(pot, bm, -1, RIGHT)(x))
            ref_out.append(scattering_wave(step, bm, -1, RIGHT)(x))

    packets_in = (_packet(x, dx, nodes, weights, amps, energies, full_in, hb), _packet(x, dx, nodes, weights, amps, energies, ref_in, hb))
    packets_out = packets_in
    if full_out:
        packets_out = (
            _packet(x, dx, nodes, weights, amps, energies, full_out, hb),
            _packet(x, dx, nodes, weights, amps, energies, ref_out, hb),
        )

    distances, norms = [], []
    for t in times:
        full, ref = packets_in if t <= 0 else packets_out
        phi = ref.at(t)
        psi = full.at(t)
        ref_norm = math.sqrt(np.sum(np.abs(phi) ** 2) * dx)
        if abs(ref_norm - 1.0) > LEAKAGE_TOL:
            raise NumericalError(f"moller_limit_check: packet leaves the box |x| <= {L} by t={t} (norm {ref_norm:.6f})")
        norms.append(math.sqrt(np.sum(np.abs(psi) ** 2) * dx))
        distances.append(math.sqrt(np.sum(np.abs(psi - phi) ** 2) * dx))
    return MollerCurve(channel, times, np.array(distances), np.array(norms))
