from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from errors import ConfigError

# Edges closer than this are treated as the same point when checking tilings.
EDGE_TOL = 1e-12

# |p^2 - p0^2| below this many ulps of p^2 counts as sitting on the threshold.
THRESHOLD_ULPS = 8


@dataclass(frozen=True)
class Units:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise ConfigError(f"Units: hbar must be positive, got {self.hbar}")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ConfigError(f"Units: mass must be positive, got {self.mass}")

    @property
    def h(self) -> float:
        return 2.0 * math.pi * self.hbar


ATOMIC = Units()


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    height: float


@dataclass(frozen=True)
class Delta:
    x0: float
    strength: float


@dataclass(frozen=True)
class Potential:
    """
    Step-like potential: 0 for x < a, v0 for x > b, piecewise constant
    segments tiling [a, b] and delta spikes inside [a, b].

    With a == b the support is a single point; only deltas may live there
    and the pointwise value at x == a is v0.
    """

    v0: float
    a: float = 0.0
    b: float = 0.0
    segments: Tuple[Segment, ...] = ()
    deltas: Tuple[Delta, ...] = ()
    units: Units = field(default=ATOMIC)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "deltas", tuple(sorted(self.deltas, key=lambda d: d.x0)))
        if self.v0 < 0:
            raise ConfigError(f"Potential: v0 must be >= 0, got {self.v0}")
        if self.a > 0 or self.b < 0 or self.a > self.b:
            raise ConfigError(f"Potential: need a <= 0 <= b, got a={self.a}, b={self.b}")
        _check_tiling(self.a, self.b, self.segments)
        for d in self.deltas:
            if d.x0 < self.a - EDGE_TOL or d.x0 > self.b + EDGE_TOL:
                raise ConfigError(f"Potential: delta at x0={d.x0} lies outside [{self.a}, {self.b}]")

    def __call__(self, x):
        return evaluate(self, x)

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def p0(self) -> float:
        return math.sqrt(2.0 * self.units.mass * self.v0)

    def pieces(self) -> List[Segment]:
        """Constant pieces of [a, b], split additionally at every delta position."""
        cuts = sorted({d.x0 for d in self.deltas if self.a < d.x0 < self.b})
        out: List[Segment] = []
        for seg in self.segments:
            lo = seg.lo
            for c in cuts:
                if seg.lo < c < seg.hi:
                    out.append(Segment(lo, c, seg.height))
                    lo = c
            out.append(Segment(lo, seg.hi, seg.height))
        return out

    def breakpoints(self, extra: Iterable[float] = ()) -> List[float]:
        pts = {self.a, self.b}
        pts.update(s.lo for s in self.segments)
        pts.update(s.hi for s in self.segments)
        pts.update(d.x0 for d in self.deltas)
        pts.update(x for x in extra if self.a <= x <= self.b)
        return sorted(pts)


def _check_tiling(a: float, b: float, segments: Tuple[Segment, ...]) -> None:
    if a == b:
        if segments:
            raise ConfigError("Potential: segments given for an empty support [a, a]")
        return
    if not segments:
        raise ConfigError(f"Potential: segments must tile [{a}, {b}]")
    cursor = a
    for seg in segments:
        if seg.hi <= seg.lo:
            raise ConfigError(f"Potential: segment [{seg.lo}, {seg.hi}] has no width")
        if abs(seg.lo - cursor) > EDGE_TOL:
            raise ConfigError(f"Potential: segment [{seg.lo}, {seg.hi}] leaves a gap or overlap at x={cursor}")
        if not math.isfinite(seg.height):
            raise ConfigError(f"Potential: segment [{seg.lo}, {seg.hi}] has height {seg.height}")
        cursor = seg.hi
    if abs(cursor - b) > EDGE_TOL:
        raise ConfigError(f"Potential: segments end at {cursor}, support ends at {b}")


def evaluate(potential: Potential, x):
    """Pointwise value, delta spikes excluded."""
    xs = np.asarray(x, dtype=float)
    out = np.where(xs < potential.a, 0.0, potential.v0).astype(float)
    if potential.segments:
        edges = np.array([s.lo for s in potential.segments] + [potential.segments[-1].hi])
        heights = np.array([s.height for s in potential.segments])
        inside = (xs >= potential.a) & (xs <= potential.b)
        idx = np.clip(np.searchsorted(edges, xs, side="right") - 1, 0, len(heights) - 1)
        out = np.where(inside, heights[idx], out)
    if np.ndim(x) == 0:
        return float(out)
    return out


# ----------------
# Constructors
# ----------------
def pure_step(v0: float, units: Units = ATOMIC, a: float = 0.0, b: float = 0.0) -> Potential:
    segments: Tuple[Segment, ...] = ()
    if a < b:
        parts = []
        if a < 0:
            parts.append(Segment(a, 0.0, 0.0))
        if b > 0:
            parts.append(Segment(0.0, b, v0))
        segments = tuple(parts)
    return Potential(v0, a, b, segments, (), units)


def step_delta(v0: float, v1: float, units: Units = ATOMIC) -> Potential:
    """V0*theta(x) + V1*delta(x), support collapsed to the point 0."""
    return Potential(v0, 0.0, 0.0, (), (Delta(0.0, v1),), units)


def barrier_on_step(v0: float, height: float, lo: float = 0.0, hi: float = 1.0, units: Units = ATOMIC) -> Potential:
    """Square segment of `height` on [lo, hi] with the step rising at lo."""
    if not lo <= 0.0 <= hi or hi <= lo:
        raise ConfigError(f"barrier_on_step: need lo <= 0 <= hi, got [{lo}, {hi}]")
    return Potential(v0, lo, hi, (Segment(lo, hi, height),), (), units)


def free(units: Units = ATOMIC) -> Potential:
    return Potential(0.0, 0.0, 0.0, (), (), units)


def random_potential(
    rng: np.random.Generator,
    v0: Optional[float] = None,
    n_segments: int = 3,
    n_deltas: int = 1,
    height_range: Tuple[float, float] = (-0.5, 2.0),
    units: Units = ATOMIC,
) -> Potential:
    """Random piecewise potential with 0 strictly inside the support."""
    if v0 is None:
        v0 = float(rng.uniform(0.2, 1.5))
    a = -float(rng.uniform(0.3, 1.5))
    b = float(rng.uniform(0.3, 1.5))
    edges = [a]
    for c in np.sort(rng.uniform(a, b, size=max(n_segments - 1, 0))):
        if c - edges[-1] > 1e-3 and b - c > 1e-3:
            edges.append(float(c))
    edges.append(b)
    segments = tuple(
        Segment(lo, hi, float(rng.uniform(*height_range))) for lo, hi in zip(edges[:-1], edges[1:])
    )
    deltas = tuple(
        Delta(float(rng.uniform(a, b)), float(rng.uniform(-0.3, 0.3))) for _ in range(n_deltas)
    )
    return Potential(float(v0), a, b, segments, deltas, units)


# ----------------
# JSON ingestion
# ----------------
def potential_from_dict(data: Dict[str, Any]) -> Potential:
    if not isinstance(data, dict):
        raise ConfigError("potential: top level must be an object")
    try:
        units_raw = data.get("units") or {}
        units = Units(float(units_raw.get("hbar", 1.0)), float(units_raw.get("mass", 1.0)))
        segments = tuple(
            Segment(float(s["lo"]), float(s["hi"]), float(s["v"])) for s in data.get("segments", [])
        )
        deltas = tuple(Delta(float(d["x0"]), float(d["strength"])) for d in data.get("deltas", []))
        return Potential(
            float(data["v0"]),
            float(data.get("a", 0.0)),
            float(data.get("b", 0.0)),
            segments,
            deltas,
            units,
        )
    except KeyError as e:
        raise ConfigError(f"potential: missing field {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"potential: bad value ({e})") from e


def potential_to_dict(potential: Potential) -> Dict[str, Any]:
    return {
        "v0": potential.v0,
        "a": potential.a,
        "b": potential.b,
        "segments": [{"lo": s.lo, "hi": s.hi, "v": s.height} for s in potential.segments],
        "deltas": [{"x0": d.x0, "strength": d.strength} for d in potential.deltas],
        "units": {"hbar": potential.units.hbar, "mass": potential.units.mass},
    }


def load_potential(path: str | Path) -> Potential:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"potential: cannot read {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"potential: {path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    return potential_from_dict(data)


# ----------------
# Channel momentum
# ----------------
class Channel(str, Enum):
    TWO_OPEN = "two_open"
    EVANESCENT = "evanescent"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class BranchMomentum:
    p: float
    q: complex
    p0: float
    channel: Channel
    units: Units = ATOMIC

    @property
    def energy(self) -> float:
        return self.p * self.p / (2.0 * self.units.mass)

    @property
    def sign(self) -> int:
        return 1 if self.p > 0 else -1

    @property
    def is_open(self) -> bool:
        return self.channel is Channel.TWO_OPEN

    def flipped(self) -> "BranchMomentum":
        """Same energy, label -p."""
        return branch_momentum(-self.p, self.p0 ** 2 / (2.0 * self.units.mass), self.units)

    def require_open(self, what: str) -> None:
        if self.channel is not Channel.TWO_OPEN:
            raise ConfigError(f"{what}: needs both channels open, p={self.p} is {self.channel.value}")

    def require_off_threshold(self, what: str) -> None:
        if self.channel is Channel.THRESHOLD:
            raise ConfigError(f"{what}: p={self.p} sits on the threshold p0={self.p0}")


def branch_momentum(p: float, v0: float, units: Units = ATOMIC) -> BranchMomentum:
    """
    q = (p^2 - 2 m V0)^(1/2) with the cut joining -p0 and p0 just below the
    real axis: sign(q) = sign(p) above threshold, q = +i|q| below it.
    """
    p = float(p)
    if p == 0.0 or not math.isfinite(p):
        raise ConfigError(f"branch_momentum: p must be finite and nonzero, got {p}")
    if v0 < 0:
        raise ConfigError(f"branch_momentum: v0 must be >= 0, got {v0}")
    p0_sq = 2.0 * units.mass * v0
    gap = p * p - p0_sq
    p0 = math.sqrt(p0_sq)
    if abs(gap) <= THRESHOLD_ULPS * np.finfo(float).eps * p * p and v0 > 0:
        return BranchMomentum(p, 0j, p0, Channel.THRESHOLD, units)
    if gap > 0:
        return BranchMomentum(p, complex(math.copysign(math.sqrt(gap), p), 0.0), p0, Channel.TWO_OPEN, units)
    return BranchMomentum(p, complex(0.0, math.sqrt(-gap)), p0, Channel.EVANESCENT, units)


# ----------------
# Partitionings
# ----------------
class PartitionKind(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    STEP = "step"
    IN = "in"
    OUT = "out"


def theta(x):
    return (np.asarray(x, dtype=float) >= 0.0).astype(float)


@dataclass(frozen=True)
class PartitionedPotential:
    """
    Residual potential of one split H = H_ref + V_resid.

    LEFT:  V_l = V              RIGHT: V_r = V - V0
    STEP:  V_s = V - V0 theta(x)
    IN/OUT: local part V plus the non-local -V0 F_- (IN) or -V0 F_+ (OUT);
    `value` only returns the local part for those.
    """

    kind: PartitionKind
    base: Potential

    @property
    def is_local(self) -> bool:
        return self.kind not in (PartitionKind.IN, PartitionKind.OUT)

    @property
    def projector(self) -> Optional[int]:
        """Sign of the momentum projector carrying -V0, or None for local kinds."""
        return {PartitionKind.IN: -1, PartitionKind.OUT: +1}.get(self.kind)

    @property
    def deltas(self) -> Tuple[Delta, ...]:
        return self.base.deltas

    def value(self, x):
        v = np.asarray(evaluate(self.base, x), dtype=float)
        xs = np.asarray(x, dtype=float)
        if self.kind is PartitionKind.RIGHT:
            v = v - self.base.v0
        elif self.kind is PartitionKind.STEP:
            v = v - self.base.v0 * theta(xs)
        if np.ndim(x) == 0:
            return float(v)
        return v

    def __call__(self, x):
        return self.value(x)


def partition(potential: Potential, kind: PartitionKind | str) -> PartitionedPotential:
    kind = PartitionKind(kind)
    if kind is PartitionKind.STEP and not (potential.a <= 0.0 <= potential.b):
        raise ConfigError(f"partition: STEP needs 0 in [{potential.a}, {potential.b}]")
    return PartitionedPotential(kind, potential)
