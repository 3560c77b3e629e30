from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from closed_form import AmplitudeSet, step_amplitudes
from errors import ConfigError, NumericalError
from greens import g_free, g_shifted, g_step
from ls_engine.quadrature import QuadratureGrid, build_grid
from potential import BranchMomentum, Channel, PartitionedPotential, PartitionKind, Potential, partition

SOLVE_TOL = 1e-10

Coeffs = Tuple[complex, complex]


class Partitioning(str, Enum):
    MM_LEFT = "mm_left"
    MM_RIGHT = "mm_right"
    LP = "lp"


def phase(k: complex, x, hbar: float):
    return np.exp(1j * k * np.asarray(x) / hbar)


def piecewise_plane(x, p: complex, q: complex, left: Coeffs, right: Coeffs, hbar: float, split: float = 0.0):
    """left[0] e^{ipx} + left[1] e^{-ipx} below `split`, right[0] e^{iqx} + right[1] e^{-iqx} above."""
    x = np.asarray(x, dtype=float)
    lo = left[0] * phase(p, x, hbar) + left[1] * phase(-p, x, hbar)
    hi = right[0] * phase(q, x, hbar) + right[1] * phase(-q, x, hbar)
    return np.where(x < split, lo, hi)


def step_left_coeffs(p: complex, q: complex) -> Tuple[Coeffs, Coeffs]:
    """Left-incident eigenfunction of the pure step, label p."""
    return (1.0 + 0j, (p - q) / (p + q)), (2 * p / (p + q), 0j)


def step_right_coeffs(p: complex, q: complex) -> Tuple[Coeffs, Coeffs]:
    """Right-incident eigenfunction of the pure step, label p: C e^{ipx} | e^{iqx} + D e^{-iqx}."""
    return (2 * q / (p + q), 0j), (1.0 + 0j, (q - p) / (p + q))


# ----------------
# Solutions
# ----------------
@dataclass(frozen=True)
class LSolution:
    """
    Grid solution of one LS equation. `values` hold the unnormalized wave
    (unit incident coefficient) at grid.points; `tail` is T for left-incident
    states and C (the transmitted coefficient on the left) for right-incident ones.
    """

    partitioning: Partitioning
    pot: Potential
    bm: BranchMomentum
    sign: int
    grid: QuadratureGrid
    values: np.ndarray
    tail: complex
    residual: float
    route: str = "direct"

    @property
    def is_left_type(self) -> bool:
        return self.sign == self.bm.sign

    @property
    def equation(self) -> Partitioning:
        return Partitioning.LP if self.route == "lp" else self.partitioning

    @property
    def norm(self) -> complex:
        h = self.pot.units.h
        if self.is_left_type:
            return 1.0 / math.sqrt(h)
        return complex(np.sqrt(complex(self.bm.p / self.bm.q) / h))

    @property
    def reference(self) -> str:
        if self.equation is Partitioning.LP:
            return "|p_s^%s>" % ("+" if self.sign > 0 else "-")
        return "|p>" if self.is_left_type else "|q_N>"

    def unnormalized(self, x):
        eq = _equation_parts(self.pot, self.bm, self.sign, self.equation)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        v = self.grid.potential_values(eq.residual)
        out = eq.reference(xs) + self.grid.kernel_matrix(eq.kernel, xs) @ (v * self.values)
        if eq.tail_term is not None:
            out = out + eq.tail_term(xs) * self.tail
            hb = self.pot.units.hbar
            if self.is_left_type:
                out = np.where(xs > self.pot.b, self.tail * phase(self.bm.q, xs, hb), out)
            else:
                out = np.where(xs < self.pot.a, self.tail * phase(self.bm.p, xs, hb), out)
        if np.ndim(x) == 0:
            return complex(out[0])
        return out

    def __call__(self, x):
        return self.norm * self.unnormalized(x)


@dataclass(frozen=True)
class TMatrixElement:
    """<bra|T|ket> with the bra and ket named by label and kind."""

    key: str
    bra: str
    ket: str
    value: complex
    operator: str = "T_s"


@dataclass(frozen=True)
class _Equation:
    reference: Callable[[np.ndarray], np.ndarray]
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]
    residual: PartitionedPotential
    tail_term: Optional[Callable[[np.ndarray], np.ndarray]] = None
    closure_x: float = 0.0
    closure_wave: complex = 0j


def _equation_parts(pot: Potential, bm: BranchMomentum, sign: int, kind: Partitioning) -> _Equation:
    hb, units = pot.units.hbar, pot.units
    p, q, energy = bm.p, bm.q, bm.energy
    left_type = sign == bm.sign

    if kind is Partitioning.LP:
        residual = partition(pot, PartitionKind.STEP)
        coeffs = step_left_coeffs(p, q) if left_type else step_right_coeffs(p, q)
        return _Equation(
            reference=lambda x: piecewise_plane(x, p, q, coeffs[0], coeffs[1], hb),
            kernel=lambda x, xp: g_step(energy, sign, x, xp, pot.v0, units),
            residual=residual,
        )
    if kind is Partitioning.MM_LEFT:
        residual = partition(pot, PartitionKind.LEFT)
        return _Equation(
            reference=lambda x: phase(p, x, hb),
            kernel=lambda x, xp: g_free(energy, sign, x, xp, units),
            residual=residual,
            tail_term=lambda x: (p - q) / (2 * p) * phase(p + q, pot.b, hb) * phase(-p, x, hb),
            closure_x=pot.b,
            closure_wave=complex(phase(q, pot.b, hb)),
        )
    residual = partition(pot, PartitionKind.RIGHT)
    return _Equation(
        reference=lambda x: phase(q, x, hb),
        kernel=lambda x, xp: g_shifted(energy, sign, x, xp, pot.v0, units),
        residual=residual,
        tail_term=lambda x: -(p - q) / (2 * q) * phase(p + q, pot.a, hb) * phase(-q, x, hb),
        closure_x=pot.a,
        closure_wave=complex(phase(p, pot.a, hb)),
    )


def _nystrom(eq: _Equation, grid: QuadratureGrid) -> Tuple[np.ndarray, complex, float]:
    """Solve (I - K W) u - c tail = ref on grid.points, closing on the tail amplitude when present."""
    pts = grid.points
    n = pts.size
    v = grid.potential_values(eq.residual)
    kw = grid.kernel_matrix(eq.kernel) * v[None, :]
    rhs = np.asarray(eq.reference(pts), dtype=complex)
    mat = np.eye(n, dtype=complex) - kw
    if eq.tail_term is not None:
        xc = np.array([eq.closure_x])
        row = -(grid.kernel_matrix(eq.kernel, xc) * v[None, :])
        corner = eq.closure_wave - complex(eq.tail_term(xc)[0])
        mat = np.block([[mat, -eq.tail_term(pts)[:, None]], [row, np.array([[corner]])]])
        rhs = np.concatenate([rhs, np.asarray(eq.reference(xc), dtype=complex)])
    if rhs.size == 0:
        return np.zeros(0, dtype=complex), 0j, 0.0
    try:
        sol = scipy.linalg.solve(mat, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"Nyström system is singular: {e}", condition=float(np.linalg.cond(mat))) from e
    resid = float(np.linalg.norm(mat @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if not resid <= SOLVE_TOL:
        cond = float(np.linalg.cond(mat))
        raise NumericalError(f"Nyström residual {resid:.2e} above {SOLVE_TOL:.0e} (cond {cond:.2e})", condition=cond)
    if eq.tail_term is not None:
        return sol[:n], complex(sol[n]), resid
    return sol, 0j, resid


def solve_ls(
    pot: Potential,
    bm: BranchMomentum,
    partitioning: Partitioning | str,
    sign: int,
    grid: Optional[QuadratureGrid] = None,
    route: str = "direct",
) -> LSolution:
    """
    MM_LEFT: |p^{sign(p)}> against the free kernel.
    MM_RIGHT: |p^{-sign(p)}> against the shifted kernel (both channels open).
    LP: either state against the pure-step kernel; needs 0 in [a, b].
    route="lp" produces an MM solution from the LP equation.
    """
    kind = Partitioning(partitioning)
    bm.require_off_threshold("solve_ls")
    if sign not in (1, -1):
        raise ConfigError(f"solve_ls: sign must be +1 or -1, got {sign}")
    if kind is Partitioning.MM_LEFT and sign != bm.sign:
        raise ConfigError(f"solve_ls: MM_LEFT builds |p^sign(p)>, got sign {sign} for p={bm.p}")
    if kind is Partitioning.MM_RIGHT and sign != -bm.sign:
        raise ConfigError(f"solve_ls: MM_RIGHT builds |p^-sign(p)>, got sign {sign} for p={bm.p}")
    if sign != bm.sign and bm.channel is Channel.EVANESCENT:
        raise ConfigError(f"solve_ls: right-incident state needs |p| > p0, got p={bm.p}")
    if route not in ("direct", "lp"):
        raise ConfigError(f"solve_ls: unknown route {route!r}")
    grid = grid if grid is not None else build_grid(pot)
    equation = Partitioning.LP if route == "lp" else kind
    eq = _equation_parts(pot, bm, sign, equation)
    values, tail, resid = _nystrom(eq, grid)
    sol = LSolution(kind, pot, bm, sign, grid, values, tail, resid, route if kind is not Partitioning.LP else "direct")
    if equation is Partitioning.LP:
        hb = pot.units.hbar
        if sign == bm.sign:
            tail = sol.unnormalized(pot.b) * complex(phase(-bm.q, pot.b, hb))
        else:
            tail = sol.unnormalized(pot.a) * complex(phase(-bm.p, pot.a, hb))
        sol = LSolution(kind, pot, bm, sign, grid, values, complex(tail), resid, sol.route)
    return sol


# ----------------
# Asymptotic coefficients
# ----------------
def _weights(sol: LSolution, kind: PartitionKind) -> np.ndarray:
    return sol.grid.potential_weights(partition(sol.pot, kind))


def state_coefficients(sol: LSolution) -> Tuple[Coeffs, Coeffs]:
    """
    Outer plane-wave coefficients of the solution: ((e^{ipx}, e^{-ipx}) left of a,
    (e^{iqx}, e^{-iqx}) right of b), p and q being the solution's own label.
    """
    pot, bm = sol.pot, sol.bm
    m, hb = pot.units.mass, pot.units.hbar
    p, q = bm.p, bm.q
    x = sol.grid.points
    u = sol.values
    if sol.equation is Partitioning.LP:
        ws = _weights(sol, PartitionKind.STEP)
        if sol.is_left_type:
            r = _lp_reflection_left(sol.pot, bm, ws, x, u)
            return (1.0 + 0j, r), (sol.tail, 0j)
        d = _lp_reflection_right(sol.pot, bm, ws, x, u)
        return (sol.tail, 0j), (1.0 + 0j, d)
    if sol.is_left_type:
        wl = _weights(sol, PartitionKind.LEFT)
        r = -1j * m / (hb * p) * np.sum(wl * phase(p, x, hb) * u) + (p - q) / (2 * p) * sol.tail * phase(p + q, pot.b, hb)
        return (1.0 + 0j, complex(r)), (sol.tail, 0j)
    wr = _weights(sol, PartitionKind.RIGHT)
    d = 1j * m / (hb * q) * np.sum(wr * phase(q, x, hb) * u) - (p - q) / (2 * q) * sol.tail * phase(p + q, pot.a, hb)
    return (sol.tail, 0j), (1.0 + 0j, complex(d))


def _lp_reflection_left(pot: Potential, bm: BranchMomentum, ws, x, u) -> complex:
    m, hb = pot.units.mass, pot.units.hbar
    (_, r_s), _ = step_left_coeffs(bm.p, bm.q)
    phi = piecewise_plane(x, bm.p, bm.q, *step_left_coeffs(bm.p, bm.q), hb)
    return complex(r_s - 1j * m / (hb * bm.p) * np.sum(phi * ws * u))


def _lp_reflection_right(pot: Potential, bm: BranchMomentum, ws, x, u) -> complex:
    """D of a right-incident LP solution at label p (reflection into e^{-iqx})."""
    m, hb = pot.units.mass, pot.units.hbar
    p, q = -bm.p, -bm.q
    _, (_, r_s) = step_right_coeffs(bm.p, bm.q)
    chi = piecewise_plane(x, bm.p, bm.q, *step_right_coeffs(bm.p, bm.q), hb)
    return complex(r_s - 1j * m / (hb * q) * np.sum(chi * ws * u))


# ----------------
# Amplitudes: multichannel
# ----------------
def extract_amplitudes_mm(left: LSolution, right: Optional[LSolution] = None) -> AmplitudeSet:
    """
    Amplitudes at left.bm.p from the matrix-element formulas, inner quadrature
    plus closed-form tails. `right` is the right-incident solution at label -p.
    """
    if left.partitioning is not Partitioning.MM_LEFT:
        raise ConfigError(f"extract_amplitudes_mm: need an MM_LEFT solution, got {left.partitioning.value}")
    pot, bm = left.pot, left.bm
    m, hb = pot.units.mass, pot.units.hbar
    p, q = bm.p, bm.q
    x, u = left.grid.points, left.values
    wl = _weights(left, PartitionKind.LEFT)
    wr = _weights(left, PartitionKind.RIGHT)

    r_l = -1j * m / (hb * p) * np.sum(wl * phase(p, x, hb) * u) + (p - q) / (2 * p) * left.tail * phase(p + q, pot.b, hb)
    t_l = -1j * m / (hb * q) * np.sum(wr * phase(-q, x, hb) * u) + (
        (p + q) / 2 * phase(p - q, pot.a, hb) - r_l * (p - q) / 2 * phase(-(p + q), pot.a, hb)
    ) / q

    t_r = r_r = None
    if right is not None:
        if right.partitioning is not Partitioning.MM_RIGHT or right.bm.p != -p:
            raise ConfigError("extract_amplitudes_mm: right solution must be MM_RIGHT at label -p")
        xr, ur = right.grid.points, right.values
        wl_r = _weights(right, PartitionKind.LEFT)
        wr_r = _weights(right, PartitionKind.RIGHT)
        c = right.tail
        r_r = complex(
            -1j * m / (hb * q) * np.sum(wr_r * phase(-q, xr, hb) * ur) - (p - q) / (2 * q) * c * phase(-(p + q), pot.a, hb)
        )
        t_r = complex(
            -1j * m / (hb * p) * np.sum(wl_r * phase(p, xr, hb) * ur)
            + ((p + q) * phase(p - q, pot.b, hb) + r_r * (p - q) * phase(p + q, pot.b, hb)) / (2 * p)
        )
    return AmplitudeSet(p, q, complex(t_l), complex(r_l), t_r, r_r, bm.channel, "mm")


def mm_amplitudes(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None, route: str = "direct") -> AmplitudeSet:
    grid = grid if grid is not None else build_grid(pot)
    left = solve_ls(pot, bm, Partitioning.MM_LEFT, bm.sign, grid, route)
    right = None
    if bm.is_open:
        flipped = bm.flipped()
        right = solve_ls(pot, flipped, Partitioning.MM_RIGHT, -flipped.sign, grid, route)
    return extract_amplitudes_mm(left, right)


# ----------------
# Amplitudes: localized potential
# ----------------
def lp_tmatrix_elements(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> Dict[str, TMatrixElement]:
    """
    On-shell elements of T_s between step eigenstates (bra continued from real q,
    no conjugation). Keys: rl, tl and, with both channels open, tr, rr.
    """
    grid = grid if grid is not None else build_grid(pot)
    hb, h = pot.units.hbar, pot.units.h
    p, q = bm.p, bm.q
    x = grid.points
    ws = grid.potential_weights(partition(pot, PartitionKind.STEP))
    phi = piecewise_plane(x, p, q, *step_left_coeffs(p, q), hb)
    chi = piecewise_plane(x, -p, -q, *step_right_coeffs(-p, -q), hb)
    ratio = complex(np.sqrt(complex(p / q)))

    left = solve_ls(pot, bm, Partitioning.LP, bm.sign, grid)
    out = {
        "rl": TMatrixElement("rl", "<-p_s|", "|p_s>", complex(np.sum(phi * ws * left.values)) / h),
        "tl": TMatrixElement("tl", "<q_s|", "|p_s>", ratio * complex(np.sum(chi * ws * left.values)) / h),
    }
    if bm.is_open:
        right = solve_ls(pot, bm.flipped(), Partitioning.LP, bm.sign, grid)
        out["tr"] = TMatrixElement("tr", "<-p_s|", "|-q_s>", ratio * complex(np.sum(phi * ws * right.values)) / h)
        out["rr"] = TMatrixElement("rr", "<q_s|", "|-q_s>", ratio ** 2 * complex(np.sum(chi * ws * right.values)) / h)
    return out


def extract_amplitudes_lp(pot: Potential, bm: BranchMomentum, elements: Dict[str, TMatrixElement]) -> AmplitudeSet:
    """Pure-step amplitudes corrected by on-shell T_s elements."""
    m = pot.units.mass
    p, q = bm.p, bm.q
    base = step_amplitudes(bm)
    ratio = complex(np.sqrt(complex(p / q)))
    scale = 2j * np.pi * m
    r_l = base.r_l - scale / p * elements["rl"].value
    t_l = base.t_l - scale / q / ratio * elements["tl"].value
    t_r = r_r = None
    if bm.is_open and "tr" in elements and "rr" in elements:
        t_r = base.t_r - scale / p / ratio * elements["tr"].value
        r_r = base.r_r - scale / p * elements["rr"].value
    return AmplitudeSet(p, q, complex(t_l), complex(r_l), t_r, r_r, bm.channel, "lp")


def lp_amplitudes(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> AmplitudeSet:
    return extract_amplitudes_lp(pot, bm, lp_tmatrix_elements(pot, bm, grid))


# ----------------
# Ordinary scattering
# ----------------
def _ordinary_solution(pot: Potential, bm: BranchMomentum, incident: int, grid: QuadratureGrid) -> np.ndarray:
    hb, units = pot.units.hbar, pot.units
    residual = partition(pot, PartitionKind.LEFT)
    eq = _Equation(
        reference=lambda x: phase(incident * bm.p, x, hb),
        kernel=lambda x, xp: g_free(bm.energy, bm.sign, x, xp, units),
        residual=residual,
    )
    values, _, _ = _nystrom(eq, grid)
    return values


def ordinary_tmatrix(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> Dict[str, TMatrixElement]:
    """On-shell <+-p|T|+-p> for V0 = 0; keys pp, mp (<-p|T|p>), pm, mm."""
    if pot.v0 != 0.0:
        raise ConfigError(f"ordinary_tmatrix: needs v0 = 0, got {pot.v0}")
    grid = grid if grid is not None else build_grid(pot)
    hb, h = pot.units.hbar, pot.units.h
    p = bm.p
    x = grid.points
    w = grid.potential_weights(partition(pot, PartitionKind.LEFT))
    u_in = _ordinary_solution(pot, bm, +1, grid)
    u_back = _ordinary_solution(pot, bm, -1, grid)

    def element(key: str, bra: int, ket: int, u: np.ndarray) -> TMatrixElement:
        value = complex(np.sum(phase(-bra * p, x, hb) * w * u)) / h
        return TMatrixElement(key, "<%sp|" % ("" if bra > 0 else "-"), "|%sp>" % ("" if ket > 0 else "-"), value, "T")

    return {
        "pp": element("pp", +1, +1, u_in),
        "mp": element("mp", -1, +1, u_in),
        "pm": element("pm", +1, -1, u_back),
        "mm": element("mm", -1, -1, u_back),
    }


def ordinary_amplitudes(pot: Potential, bm: BranchMomentum, grid: Optional[QuadratureGrid] = None) -> AmplitudeSet:
    t = ordinary_tmatrix(pot, bm, grid)
    scale = 2j * np.pi * pot.units.mass / bm.p
    return AmplitudeSet(
        bm.p,
        bm.q,
        complex(1.0 - scale * t["pp"].value),
        complex(-scale * t["mp"].value),
        complex(1.0 - scale * t["mm"].value),
        complex(-scale * t["pm"].value),
        bm.channel,
        "ordinary",
    )
