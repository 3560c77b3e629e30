from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from numpy.polynomial import legendre

from errors import ConfigError
from potential import Potential, PartitionedPotential

PANEL_ORDER = 8
DEFAULT_NODES = 400
# Gauss order on each side of a target inside its own panel.
SPLIT_ORDER = 16

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuadratureGrid:
    """
    Gauss-Legendre panels over [a, b] plus the delta positions as point-mass
    nodes. `points` is the collocation set: panel nodes first (`order` per
    panel, panels in order), deltas after.
    """

    a: float
    b: float
    nodes: np.ndarray
    weights: np.ndarray
    delta_x: np.ndarray
    delta_strength: np.ndarray
    panels: np.ndarray
    order: int = PANEL_ORDER

    @property
    def count(self) -> int:
        return int(self.nodes.size)

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([self.nodes, self.delta_x])

    @property
    def size(self) -> int:
        return int(self.nodes.size + self.delta_x.size)

    def potential_values(self, residual: PartitionedPotential) -> np.ndarray:
        """V_resid at the panel nodes followed by the delta strengths."""
        if not residual.is_local:
            raise ConfigError(f"{residual.kind.value} residual has no local weights")
        panel = np.asarray(residual.value(self.nodes), dtype=float) if self.count else np.zeros(0)
        return np.concatenate([panel, self.delta_strength]).astype(complex)

    def potential_weights(self, residual: PartitionedPotential) -> np.ndarray:
        """W_j with sum_j W_j f(x_j) ~ int V_resid f over [a, b], deltas included."""
        values = self.potential_values(residual)
        return np.concatenate([self.weights, np.ones(self.delta_x.size)]) * values

    def kernel_matrix(self, kernel: Kernel, targets: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Q with (Q f)_i ~ int_a^b K(t_i, x') f(x') dx' + sum_d K(t_i, x_d) f_d for f
        sampled on `points` (targets default to `points`).

        A target strictly inside a panel splits that panel in two; each half
        is integrated against the panel's Legendre interpolant of f, so the
        kink of K at x' = t_i never sits inside a Gauss rule.
        """
        targets = self.points if targets is None else np.atleast_1d(np.asarray(targets, dtype=float))
        pts = self.points
        point_w = np.concatenate([self.weights, np.ones(self.delta_x.size)])
        q = np.asarray(kernel(targets[:, None], pts[None, :]), dtype=complex) * point_w[None, :]
        if not self.count or not targets.size:
            return q

        lo, hi = self.panels[:, 0], self.panels[:, 1]
        idx = np.clip(np.searchsorted(lo, targets, side="right") - 1, 0, lo.size - 1)
        rows = np.nonzero((targets > lo[idx]) & (targets < hi[idx]))[0]
        if not rows.size:
            return q

        k = idx[rows]
        mid = 0.5 * (lo[k] + hi[k])
        half = 0.5 * (hi[k] - lo[k])
        s = (targets[rows] - mid) / half
        g, gw = legendre.leggauss(SPLIT_ORDER)
        left_h, right_h = 0.5 * (s + 1.0), 0.5 * (1.0 - s)
        sub = np.concatenate(
            [(s - left_h)[:, None] + left_h[:, None] * g, (s + right_h)[:, None] + right_h[:, None] * g], axis=1
        )
        sub_w = np.concatenate([left_h[:, None] * gw, right_h[:, None] * gw], axis=1) * half[:, None]

        ref_nodes, _ = legendre.leggauss(self.order)
        interp = np.linalg.inv(legendre.legvander(ref_nodes, self.order - 1))
        basis = legendre.legvander(sub, self.order - 1) @ interp
        kv = np.asarray(kernel(targets[rows][:, None], mid[:, None] + half[:, None] * sub), dtype=complex)
        cols = k[:, None] * self.order + np.arange(self.order)[None, :]
        q[rows[:, None], cols] = np.einsum("ry,ry,ryj->rj", kv, sub_w, basis)
        return q


def build_grid(pot: Potential, n: int = DEFAULT_NODES, order: int = PANEL_ORDER, extra: Iterable[float] = ()) -> QuadratureGrid:
    if n < 0 or order < 1:
        raise ConfigError(f"build_grid: need n >= 0 and order >= 1, got n={n}, order={order}")
    cuts = list(extra)
    if pot.a < 0.0 < pot.b:
        cuts.append(0.0)
    edges = pot.breakpoints(cuts)
    delta_x, delta_s = _merged_deltas(pot)
    if pot.width == 0.0:
        return QuadratureGrid(pot.a, pot.b, np.zeros(0), np.zeros(0), delta_x, delta_s, np.zeros((0, 2)), order)

    ref_x, ref_w = legendre.leggauss(order)
    panels_total = max(1, n // order)
    xs, ws, bounds = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        length = hi - lo
        if length <= 0.0:
            continue
        count = max(1, int(round(panels_total * length / pot.width)))
        cuts_p = np.linspace(lo, hi, count + 1)
        for plo, phi in zip(cuts_p[:-1], cuts_p[1:]):
            half = 0.5 * (phi - plo)
            xs.append(plo + half * (ref_x + 1.0))
            ws.append(half * ref_w)
            bounds.append((plo, phi))
    return QuadratureGrid(
        pot.a, pot.b, np.concatenate(xs), np.concatenate(ws), delta_x, delta_s, np.array(bounds, dtype=float), order
    )


def _merged_deltas(pot: Potential) -> Tuple[np.ndarray, np.ndarray]:
    merged = {}
    for d in pot.deltas:
        merged[d.x0] = merged.get(d.x0, 0.0) + d.strength
    keys = sorted(merged)
    return np.array(keys, dtype=float), np.array([merged[k] for k in keys], dtype=float)
