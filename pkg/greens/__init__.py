from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from errors import ConfigError
from potential import ATOMIC, Units


class Side(int, Enum):
    """Which boundary value z = E +- i0 the kernel is taken at."""

    PLUS = 1
    MINUS = -1


class KernelKind(str, Enum):
    FREE = "free"
    SHIFTED = "shifted"
    STEP = "step"
    IN = "in"
    OUT = "out"


# e^{-x} Ei(x) and e^{x} E1(x) lose range past this; both are 1/x to leading order there.
_EXP_INTEGRAL_SWITCH = 700.0


def _side(side) -> Side:
    try:
        return Side(int(side))
    except ValueError as e:
        raise ConfigError(f"side must be +1 or -1, got {side!r}") from e


def _wavenumber(z: complex, side: Side, units: Units) -> complex:
    """(2 m z)^(1/2) with the cut along the positive axis, on the branch picked by `side`."""
    z = complex(z)
    if z == 0:
        raise ConfigError("resolvent kernel: z = 0 is a branch point")
    if z.imag != 0.0:
        k = np.sqrt(2.0 * units.mass * z)
        return complex(k if k.imag > 0 else -k)
    if z.real > 0:
        return complex(side.value * math.sqrt(2.0 * units.mass * z.real))
    return complex(0.0, math.sqrt(-2.0 * units.mass * z.real))


# ----------------
# Local kernels
# ----------------
def g_free(z: complex, side, x, xp, units: Units = ATOMIC):
    """<x|(z - H0)^-1|x'> = -i m / (hbar k) e^{i k |x - x'| / hbar}."""
    k = _wavenumber(z, _side(side), units)
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float))
    return -1j * units.mass / (units.hbar * k) * np.exp(1j * k * d / units.hbar)


def g_shifted(z: complex, side, x, xp, v0: float, units: Units = ATOMIC):
    if complex(z) == v0:
        raise ConfigError(f"g_shifted: z equals the shift v0={v0}")
    return g_free(complex(z) - v0, side, x, xp, units)


@dataclass(frozen=True)
class StepKernelParams:
    p: float
    mu: complex
    t: complex
    r: complex


def step_kernel_params(energy: float, side, v0: float, units: Units = ATOMIC) -> StepKernelParams:
    s = _side(side)
    if energy <= 0.0:
        raise ConfigError(f"g_step: energy must be > 0, got {energy}")
    if energy == v0:
        raise ConfigError(f"g_step: energy sits on the step threshold {v0}")
    p = math.sqrt(2.0 * units.mass * energy)
    if energy > v0:
        mu = complex(math.sqrt(2.0 * units.mass * (energy - v0)))
    else:
        mu = complex(0.0, s.value * math.sqrt(2.0 * units.mass * (v0 - energy)))
    return StepKernelParams(p, mu, 2.0 * p / (p + mu), (p - mu) / (p + mu))


def g_step(energy: float, side, x, xp, v0: float, units: Units = ATOMIC):
    """Resolvent of the pure step V0 theta(x), four-region closed form."""
    s = _side(side).value
    par = step_kernel_params(energy, side, v0, units)
    p, mu, t, r, hb = par.p, par.mu, par.t, par.r, units.hbar
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    x, xp = np.broadcast_arrays(x, xp)
    lx = x < 0.0
    lxp = xp < 0.0
    out = np.empty(x.shape, dtype=complex)

    both_left = lx & lxp
    out[both_left] = (
        np.exp(1j * s * p * np.abs(x - xp)[both_left] / hb) + r * np.exp(-1j * s * p * (x + xp)[both_left] / hb)
    ) / p
    cross = lx ^ lxp
    hi = np.where(lx, xp, x)[cross]
    lo = np.where(lx, x, xp)[cross]
    out[cross] = t / p * np.exp(1j * s * (mu * hi - p * lo) / hb)
    both_right = ~(lx | lxp)
    out[both_right] = (
        np.exp(1j * s * mu * np.abs(x - xp)[both_right] / hb) - r * np.exp(1j * s * mu * (x + xp)[both_right] / hb)
    ) / mu

    out *= s * units.mass / (1j * hb)
    if out.ndim == 0:
        return complex(out)
    return out


# ----------------
# Projector kernels
# ----------------
def _a_term(zeta: float, side: Side, dist: np.ndarray, units: Units) -> np.ndarray:
    """Coefficient of sign(x - x') in <x|F_+ (zeta - H0)^-1|x'>, as a function of |x - x'|."""
    m, hb, h = units.mass, units.hbar, units.h
    if zeta > 0:
        k0 = math.sqrt(2.0 * m * zeta)
        y = k0 * dist / hb
        si, ci = special.sici(y)
        a_plus = 2j * m / (h * k0) * (ci * np.sin(y) - (si - 0.5 * np.pi) * np.cos(y))
        if side is Side.PLUS:
            return a_plus
        g0_plus = -1j * m / (hb * k0) * np.exp(1j * y)
        return -np.conj(a_plus + g0_plus)
    kappa = math.sqrt(-2.0 * m * zeta)
    xv = kappa * dist / hb
    big = xv > _EXP_INTEGRAL_SWITCH
    safe = np.where(big, 1.0, xv)
    pair = np.exp(-safe) * special.expi(safe) + np.exp(safe) * special.exp1(safe)
    inv = 1.0 / np.where(big, xv, 1.0)
    pair = np.where(big, 2.0 * inv * (1.0 + 2.0 * inv ** 2), pair)
    return -1j * m / (h * kappa) * pair + m / (2.0 * hb * kappa) * np.exp(-xv)


def projector_kernel(zeta: float, xi: int, side, x, xp, units: Units = ATOMIC):
    """
    <x|F_xi (zeta - H0)^-1|x'> with F_xi the projector on momenta of sign xi.
    Equal to A sign(xi (x - x')) + theta(xi (x - x')) G0(zeta).
    """
    s = _side(side)
    if xi not in (1, -1):
        raise ConfigError(f"projector_kernel: xi must be +1 or -1, got {xi}")
    if zeta == 0:
        raise ConfigError("projector_kernel: zeta = 0 is a branch point")
    delta = xi * (np.asarray(x, dtype=float) - np.asarray(xp, dtype=float))
    if np.any(delta == 0.0):
        raise ConfigError("projector_kernel: x = x' is a logarithmic singularity")
    dist = np.abs(delta)
    g0 = g_free(zeta, s, dist, 0.0, units)
    out = np.sign(delta) * _a_term(zeta, s, dist, units) + np.where(delta > 0, g0, 0.0)
    if np.ndim(out) == 0:
        return complex(out)
    return out


def g_inout(kind, energy: float, side, x, xp, v0: float, units: Units = ATOMIC):
    """
    IN:  F_+ (E - H0)^-1 + F_- (E - V0 - H0)^-1
    OUT: F_+ (E - V0 - H0)^-1 + F_- (E - H0)^-1
    """
    kind = KernelKind(kind)
    if kind is KernelKind.IN:
        return projector_kernel(energy, +1, side, x, xp, units) + projector_kernel(energy - v0, -1, side, x, xp, units)
    if kind is KernelKind.OUT:
        return projector_kernel(energy - v0, +1, side, x, xp, units) + projector_kernel(energy, -1, side, x, xp, units)
    raise ConfigError(f"g_inout: kind must be in/out, got {kind.value}")


def projector_kernel_quadrature(zeta: float, xi: int, side, delta: float, units: Units = ATOMIC) -> complex:
    """
    Same quantity as `projector_kernel` at x - x' = delta, by adaptive quadrature
    of the defining momentum integral (2m/h) int_0^inf e^{i xi p delta/hbar} / (k0^2 - p^2 +- i0) dp.
    """
    s = _side(side)
    if delta == 0.0:
        raise ConfigError("projector_kernel_quadrature: delta must be nonzero")
    m, hb, h = units.mass, units.hbar, units.h
    if s is Side.MINUS and zeta > 0:
        return complex(np.conj(projector_kernel_quadrature(zeta, xi, Side.PLUS, -delta, units)))
    d = xi * delta
    w = abs(d) / hb
    sgn = math.copysign(1.0, d)

    def fourier(f: Callable[[float], float], lo: float) -> complex:
        re = integrate.quad(f, lo, np.inf, weight="cos", wvar=w, limlst=200)[0]
        im = integrate.quad(f, lo, np.inf, weight="sin", wvar=w, limlst=200)[0]
        return complex(re, sgn * im)

    if zeta < 0:
        kappa2 = -2.0 * m * zeta
        return -(2.0 * m / h) * fourier(lambda p: 1.0 / (kappa2 + p * p), 0.0)

    k0 = math.sqrt(2.0 * m * zeta)
    # PV int_0^inf e^{ipw}/(k0 - p): Cauchy weight on [0, 2 k0], Fourier weight beyond
    pv_re = -integrate.quad(lambda p: math.cos(p * w), 0.0, 2.0 * k0, weight="cauchy", wvar=k0)[0]
    pv_im = -integrate.quad(lambda p: math.sin(p * w), 0.0, 2.0 * k0, weight="cauchy", wvar=k0)[0]
    near = complex(pv_re, sgn * pv_im) + fourier(lambda p: 1.0 / (k0 - p), 2.0 * k0)
    far = fourier(lambda p: 1.0 / (k0 + p), 0.0)
    principal = (near + far) / (2.0 * k0)
    pole = -1j * np.pi * np.exp(1j * k0 * d / hb) / (2.0 * k0)
    return complex((2.0 * m / h) * (principal + pole))


# ----------------
# Kernel objects
# ----------------
@dataclass(frozen=True)
class ResolventKernel:
    kind: KernelKind
    energy: float
    side: Side = Side.PLUS
    v0: float = 0.0
    units: Units = ATOMIC

    @property
    def is_symmetric(self) -> bool:
        return self.kind in (KernelKind.FREE, KernelKind.SHIFTED, KernelKind.STEP)

    def reference_potential(self, x) -> np.ndarray:
        """Potential of the reference Hamiltonian; theta(0) = 1/2 for the step."""
        x = np.asarray(x, dtype=float)
        if self.kind is KernelKind.FREE:
            return np.zeros_like(x)
        if self.kind is KernelKind.SHIFTED:
            return np.full_like(x, self.v0)
        if self.kind is KernelKind.STEP:
            return self.v0 * np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
        raise ConfigError(f"{self.kind.value} kernel has a non-local reference Hamiltonian")

    def __call__(self, x, xp):
        if self.kind is KernelKind.FREE:
            return g_free(self.energy, self.side, x, xp, self.units)
        if self.kind is KernelKind.SHIFTED:
            return g_shifted(self.energy, self.side, x, xp, self.v0, self.units)
        if self.kind is KernelKind.STEP:
            return g_step(self.energy, self.side, x, xp, self.v0, self.units)
        return g_inout(self.kind, self.energy, self.side, x, xp, self.v0, self.units)


def residual_check(
    kernel: ResolventKernel,
    test_function: Callable[[np.ndarray], np.ndarray],
    half_width: float = 12.0,
    n: int = 1200,
    window: Optional[float] = None,
) -> float:
    """
    Relative L2 norm of (E - H_ref) int K(x,x') f(x') dx' - f on [-window, window],
    trapezoid quadrature and central second differences on a uniform grid holding x = 0.
    """
    if not kernel.is_symmetric:
        raise ConfigError("residual_check: only free, shifted and step kernels have a local reference Hamiltonian")
    x = np.linspace(-half_width, half_width, 2 * (n // 2) + 1)
    dx = x[1] - x[0]
    f = np.asarray(test_function(x), dtype=complex)
    weights = np.full(x.shape, dx)
    weights[[0, -1]] *= 0.5
    phi = kernel(x[:, None], x[None, :]) @ (weights * f)
    lap = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / dx ** 2
    inner = x[1:-1]
    h_phi = -kernel.units.hbar ** 2 / (2.0 * kernel.units.mass) * lap + kernel.reference_potential(inner) * phi[1:-1]
    resid = kernel.energy * phi[1:-1] - h_phi - f[1:-1]
    win = 0.5 * half_width if window is None else window
    sel = np.abs(inner) <= win
    return float(np.linalg.norm(resid[sel]) / max(np.linalg.norm(f[1:-1][sel]), 1e-300))
