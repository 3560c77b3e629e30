from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy import integrate

from errors import ConfigError, NumericalError
from greens import KernelKind, Side, g_free, g_inout
from ls_engine.quadrature import QuadratureGrid, build_grid
from ls_engine.solver import phase, piecewise_plane, step_left_coeffs
from potential import BranchMomentum, Channel, PartitionKind, Potential, partition

DAMPING_LADDER = (0.2, 0.1, 0.05, 0.025)
RICHARDSON_RTOL = 1e-3
# Far-left window for the in/out asymptotic fit, in units of hbar/p.
INOUT_WINDOW = (-400.0, -200.0)
INOUT_SAMPLES = 8


class BornScheme(str, Enum):
    MM1 = "mm1"
    MM1_RIGHT = "mm1_right"
    MM2 = "mm2"
    LP1 = "lp1"
    INOUT1 = "inout1"


@dataclass(frozen=True)
class BornResult:
    scheme: BornScheme
    p: float
    value: complex
    wavenumber: Optional[float] = None
    error: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


def _require_positive(bm: BranchMomentum, what: str) -> None:
    if bm.p <= 0:
        raise ConfigError(f"{what}: needs p > 0, got {bm.p}")


def _grid(pot: Potential, grid: Optional[QuadratureGrid]) -> QuadratureGrid:
    return grid if grid is not None else build_grid(pot)


# ----------------
# First order
# ----------------
def born_mm1(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> BornResult:
    """(-2 pi i m / p) <-p|V_l|p>, the constant tail on [b, inf) in closed form."""
    _require_positive(bm, "born_mm1")
    grid = _grid(pot, grid)
    m, hb, p = pot.units.mass, pot.units.hbar, bm.p
    w = grid.potential_weights(partition(pot, PartitionKind.LEFT))
    inner = np.sum(w * phase(2 * p, grid.points, hb))
    tail = pot.v0 * 1j * hb * phase(2 * p, pot.b, hb) / (2 * p)
    return BornResult(BornScheme.MM1, p, complex(-1j * m / (hb * p) * (inner + tail)))


def born_mm1_right(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> BornResult:
    """First-order R^r: (-2 pi i m / q) <q|V_r|-q>, the constant tail on (-inf, a] in closed form."""
    _require_positive(bm, "born_mm1_right")
    bm.require_open("born_mm1_right")
    grid = _grid(pot, grid)
    m, hb, q = pot.units.mass, pot.units.hbar, bm.q.real
    w = grid.potential_weights(partition(pot, PartitionKind.RIGHT))
    inner = np.sum(w * phase(-2 * q, grid.points, hb))
    tail = -pot.v0 * 1j * hb * phase(-2 * q, pot.a, hb) / (2 * q)
    return BornResult(BornScheme.MM1_RIGHT, bm.p, complex(-1j * m / (hb * q) * (inner + tail)))


def born_lp1(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> BornResult:
    """R^l_s corrected by the first-order step-basis element of V_s."""
    _require_positive(bm, "born_lp1")
    grid = _grid(pot, grid)
    m, hb, p, q = pot.units.mass, pot.units.hbar, bm.p, bm.q
    coeffs = step_left_coeffs(p, q)
    phi = piecewise_plane(grid.points, p, q, *coeffs, hb)
    w = grid.potential_weights(partition(pot, PartitionKind.STEP))
    value = coeffs[0][1] - 1j * m / (hb * p) * np.sum(phi * w * phi)
    return BornResult(BornScheme.LP1, p, complex(value), metadata={"channel": bm.channel.value})


def inout1_coefficient(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> complex:
    """Coefficient of e^{-iqx} far to the left in the first-order in/out wave."""
    grid = _grid(pot, grid)
    m, hb, p, q = pot.units.mass, pot.units.hbar, bm.p, bm.q.real
    w = grid.potential_weights(partition(pot, PartitionKind.LEFT))
    inner = np.sum(w * phase(p + q, grid.points, hb))
    tail = pot.v0 * 1j * hb * phase(p + q, pot.b, hb) / (p + q)
    return complex(-1j * m / (hb * q) * (inner + tail))


def _inout1_wave(pot: Potential, bm: BranchMomentum, grid: QuadratureGrid, x: float) -> complex:
    """First-order scattered wave G_in V |p> at a point left of the support, by quadrature."""
    m, hb, p, q = pot.units.mass, pot.units.hbar, bm.p, bm.q.real
    energy, v0, units = bm.energy, pot.v0, pot.units
    pts = grid.points
    w = grid.potential_weights(partition(pot, PartitionKind.LEFT))
    inner = np.sum(g_inout(KernelKind.IN, energy, Side.PLUS, x, pts, v0, units) * w * phase(p, pts, hb))
    if v0 == 0.0:
        return complex(inner)
    # theta part of the F_- kernel over [b, inf) is the outgoing e^{-iqx} wave
    theta_tail = -1j * m / (hb * q) * phase(-q, x, hb) * v0 * 1j * hb * phase(p + q, pot.b, hb) / (p + q)

    def transient(xp: float) -> complex:
        full = g_inout(KernelKind.IN, energy, Side.PLUS, x, xp, v0, units)
        return complex(full - g_free(energy - v0, Side.PLUS, x, xp, units))

    wvar = p / hb
    parts = []
    for pick in (np.real, np.imag):
        f = lambda xp, pick=pick: float(pick(transient(xp)))
        c = integrate.quad(f, pot.b, np.inf, weight="cos", wvar=wvar, limlst=200)[0]
        s = integrate.quad(f, pot.b, np.inf, weight="sin", wvar=wvar, limlst=200)[0]
        parts.append(c + 1j * s)
    a_tail = v0 * (parts[0] + 1j * parts[1])
    return complex(inner + theta_tail + a_tail)


def born_inout1(
    pot: Potential,
    bm: BranchMomentum,
    xs: Optional[Sequence[float]] = None,
    grid: Optional[QuadratureGrid] = None,
) -> BornResult:
    """
    Reflected-wave coefficient of the first-order in/out wave, checked by a
    least-squares fit of the quadrature wave against {e^{-iqx}, 1/x, 1/x^2}
    far to the left. The reflected wavenumber (1/length) is the phase drift of
    the wave, fitted transient removed, across the sample window.
    """
    _require_positive(bm, "born_inout1")
    if bm.channel is not Channel.TWO_OPEN:
        raise ConfigError(f"born_inout1: needs p > p0, got p={bm.p} ({bm.channel.value})")
    grid = _grid(pot, grid)
    hb, p, q = pot.units.hbar, bm.p, bm.q.real
    scale = hb / p
    if xs is None:
        xs = pot.a + scale * np.linspace(*INOUT_WINDOW, INOUT_SAMPLES)
    xs = np.asarray(xs, dtype=float)
    if np.any(xs >= pot.a):
        raise ConfigError("born_inout1: sample points must lie left of the support")
    closed = inout1_coefficient(pot, bm, grid)
    waves = np.array([_inout1_wave(pot, bm, grid, x) for x in xs])
    s = scale / (xs - pot.a)
    basis = np.column_stack([phase(-q, xs, hb), s, s * s])
    fit, *_ = np.linalg.lstsq(basis, waves, rcond=None)

    wavenumber = None
    if abs(closed) > 0.0:
        def clean(x: float, wave: complex) -> complex:
            t = scale / (x - pot.a)
            return wave - fit[1] * t - fit[2] * t * t

        x0, x1 = float(xs[0]), float(xs[-1])
        dx = 0.05 * scale
        short = clean(x0 + dx, _inout1_wave(pot, bm, grid, x0 + dx)) / clean(x0, waves[0])
        rough = -np.angle(short) / dx
        # the long baseline wraps; pick the branch nearest the short-pair estimate
        span = x1 - x0
        angle = float(np.angle(clean(x1, waves[-1]) / clean(x0, waves[0])))
        n = round((-rough * span - angle) / (2.0 * np.pi))
        wavenumber = float(-(angle + 2.0 * np.pi * n) / span)
    return BornResult(
        BornScheme.INOUT1,
        p,
        closed,
        wavenumber=wavenumber,
        error=float(abs(fit[0] - closed)),
        metadata={"fitted": complex(fit[0]), "samples": xs.tolist()},
    )


# ----------------
# Second order
# ----------------
def _mm2_damped(pot: Potential, bm: BranchMomentum, grid: QuadratureGrid, eps: float) -> complex:
    m, hb, p, v0 = pot.units.mass, pot.units.hbar, bm.p, pot.v0
    k = p / hb
    x = grid.points
    w = grid.potential_weights(partition(pot, PartitionKind.LEFT))
    bra = w * phase(p, x, hb)
    f = grid.potential_values(partition(pot, PartitionKind.LEFT)) * phase(p, x, hb)
    inner = bra @ grid.kernel_matrix(lambda t, xp: g_free(bm.energy, Side.PLUS, t, xp, pot.units)) @ f if x.size else 0j
    edge = phase(2 * p, pot.b, hb)
    cross = 2.0 * np.sum(bra * (-1j * m * v0 / (hb * p)) * phase(-p, x, hb) * edge / (eps - 2j * k))
    tail = v0 * v0 * (-1j * m / (hb * p)) * edge / ((eps - 2j * k) * (eps - 1j * k))
    return complex(-1j * m / (hb * p) * (inner + cross + tail))


def _richardson(values: Sequence[complex]) -> tuple:
    """Extrapolate a sequence taken at halving steps to step 0; returns (value, last increment)."""
    table = [list(values)]
    for j in range(1, len(values)):
        prev = table[-1]
        factor = 2.0 ** j
        table.append([(factor * prev[i + 1] - prev[i]) / (factor - 1.0) for i in range(len(prev) - 1)])
    best = table[-1][0]
    err = abs(best - table[-2][-1]) if len(table) > 1 else float("inf")
    return complex(best), float(err)


def born_mm2(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> BornResult:
    """
    (-2 pi i m / p) <-p|V_l G_l(E+i0) V_l|p>. The [b, inf) tails carry e^{-eps (x-b)};
    eps runs down a halving ladder and the results are extrapolated to 0.
    """
    _require_positive(bm, "born_mm2")
    grid = _grid(pot, grid)
    unit = 1.0 / pot.width if pot.width > 0 else bm.p / pot.units.hbar
    ladder = [c * unit for c in DAMPING_LADDER]
    values = [_mm2_damped(pot, bm, grid, eps) for eps in ladder]
    value, err = _richardson(values)
    if not np.isfinite(value) or err > RICHARDSON_RTOL * abs(value) + 1e-14:
        raise NumericalError(f"born_mm2: extrapolation did not settle at p={bm.p} (increment {err:.2e})")
    return BornResult(BornScheme.MM2, bm.p, value, error=err, metadata={"damping": ladder})
