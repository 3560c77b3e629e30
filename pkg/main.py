from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv

load_dotenv()

from born import born_inout1, born_lp1, born_mm1, born_mm2  # noqa: E402
from closed_form import (  # noqa: E402
    AmplitudeSet,
    smatrix,
    transfer_matrix_amplitudes,
    unitarity_residuals,
)
from errors import ConfigError, InvariantViolation, NumericalError, ScatterError  # noqa: E402
from greens import KernelKind, ResolventKernel, Side, projector_kernel, projector_kernel_quadrature  # noqa: E402
from ls_engine import (  # noqa: E402
    Partitioning,
    build_grid,
    check_alternative_ls,
    check_two_potential,
    lp_amplitudes,
    lp_tmatrix_elements,
    mm_amplitudes,
    solve_ls,
)
from potential import (  # noqa: E402
    ATOMIC,
    BranchMomentum,
    Channel,
    Potential,
    barrier_on_step,
    branch_momentum,
    load_potential,
    random_potential,
    step_delta,
)
from report import Table, log, render, write_report  # noqa: E402
from spectral import MOLLER_CHANNELS, find_bound_states, finite_difference_levels, moller_limit_check  # noqa: E402

PROGRAM = "scatter"

THREADS = int(os.getenv("SCATTER_THREADS", str(os.cpu_count() or 1)))
GRID_DEFAULT = int(os.getenv("SCATTER_GRID", "400"))
OUT_DIR = os.getenv("SCATTER_OUT_DIR", "reports")

QUANTITIES = ("exact", "mm1", "mm2", "lp1", "inout1", "unitarity", "smatrix")
METHODS = ("transfer", "mm", "lp")
CORRUPTIBLE = ("t_l", "r_l", "t_r", "r_r")
CORRUPT_FACTOR = 1.001
# split into _re/_im even when every row of the scan leaves them closed
COMPLEX_COLUMNS = ("q", "t_l", "r_l", "t_r", "r_r", "exact_r_l", "mm1", "lp1", "mm2", "inout1")

# verify: closed forms are exact; grid methods carry the Nyström discretization error.
TOL_EXACT = 1e-10
TOL_GRID = 1e-6
TOL_BOUND = 5e-3
TOL_ORACLE = 1e-8
ORACLE_OFFSET = 0.7


# ----------------
# Scan configuration
# ----------------
@dataclass(frozen=True)
class ScanConfig:
    potential: Potential
    source: str
    p_min: float
    p_max: float
    count: int
    spacing: str = "linear"
    quantities: tuple = ()
    grid: int = GRID_DEFAULT
    fmt: str = "csv"
    method: str = "transfer"

    def __post_init__(self):
        if not self.p_min > 0:
            raise ConfigError(f"--pmin must be > 0, got {self.p_min}")
        if not self.p_max > self.p_min:
            raise ConfigError(f"--pmax must exceed --pmin, got {self.p_max} <= {self.p_min}")
        if self.count < 2:
            raise ConfigError(f"--count must be >= 2, got {self.count}")
        if self.grid < 64:
            raise ConfigError(f"--grid must be >= 64, got {self.grid}")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"--spacing must be linear or log, got {self.spacing!r}")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"--format must be csv or json, got {self.fmt!r}")
        if self.method not in METHODS:
            raise ConfigError(f"--method must be one of {METHODS}, got {self.method!r}")
        unknown = [q for q in self.quantities if q not in QUANTITIES]
        if unknown:
            raise ConfigError(f"--quantities: unknown {unknown}, choose from {QUANTITIES}")

    def momenta(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.p_min, self.p_max, self.count)
        return np.linspace(self.p_min, self.p_max, self.count)

    def meta(self) -> Dict[str, Any]:
        return {
            "potential": self.source,
            "p_min": self.p_min,
            "p_max": self.p_max,
            "count": self.count,
            "spacing": self.spacing,
            "grid": self.grid,
            "method": self.method,
        }


def scan(config: ScanConfig, row_fn: Callable[[float], Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Rows computed concurrently, returned in p order."""
    momenta = [float(p) for p in config.momenta()]
    log("SCAN", f"{len(momenta)} momenta on {max(1, THREADS)} threads")
    with ThreadPoolExecutor(max_workers=max(1, THREADS)) as pool:
        return list(pool.map(row_fn, momenta))


def _default_potential(args: argparse.Namespace, fallback: Optional[Callable[[], Potential]] = None) -> tuple:
    if args.potential:
        return load_potential(args.potential), args.potential
    if fallback is None:
        raise ConfigError("--potential is required for this command")
    return fallback(), "builtin"


def _quantities(raw: Optional[str]) -> tuple:
    if not raw:
        return ()
    return tuple(q.strip() for q in raw.split(",") if q.strip())


def config_from_args(args: argparse.Namespace, fallback: Optional[Callable[[], Potential]] = None) -> ScanConfig:
    pot, source = _default_potential(args, fallback)
    return ScanConfig(
        potential=pot,
        source=source,
        p_min=args.pmin,
        p_max=args.pmax,
        count=args.count,
        spacing=args.spacing,
        quantities=_quantities(getattr(args, "quantities", None)),
        grid=args.grid,
        fmt=args.format,
        method=getattr(args, "method", "transfer"),
    )


# ----------------
# amplitudes
# ----------------
def amplitudes_by(method: str, pot: Potential, bm: BranchMomentum, grid_size: int) -> AmplitudeSet:
    if method == "transfer":
        return transfer_matrix_amplitudes(pot, bm)
    grid = build_grid(pot, grid_size)
    if method == "mm":
        return mm_amplitudes(pot, bm, grid)
    return lp_amplitudes(pot, bm, grid)


def _max_residual(amp: AmplitudeSet) -> float:
    residuals = unitarity_residuals(amp)
    return max(residuals.values()) if residuals else 0.0


def amplitude_row(config: ScanConfig, p: float) -> Dict[str, Any]:
    pot = config.potential
    bm = branch_momentum(p, pot.v0, pot.units)
    row: Dict[str, Any] = {"p": p, "q": bm.q, "channel": bm.channel.value, "method": config.method}
    if bm.channel is Channel.THRESHOLD:
        log("WARN", f"p={p} sits on the threshold p0={bm.p0}; amplitudes omitted")
        row.update({"t_l": None, "r_l": None, "t_r": None, "r_r": None, "max_residual": None})
        return row
    amp = amplitudes_by(config.method, pot, bm, config.grid)
    row.update({"t_l": amp.t_l, "r_l": amp.r_l, "t_r": amp.t_r, "r_r": amp.r_r, "max_residual": _max_residual(amp)})

    grid = build_grid(pot, config.grid) if config.quantities else None
    for name in config.quantities:
        if name == "exact":
            exact = transfer_matrix_amplitudes(pot, bm)
            row["exact_r_l"] = exact.r_l
        elif name == "unitarity":
            row["unitarity"] = _max_residual(amp)
        elif name == "smatrix":
            row["smatrix_defect"] = smatrix(amp).defect()
        elif name == "mm1":
            row["mm1"] = born_mm1(pot, bm, grid).value
        elif name == "lp1":
            row["lp1"] = born_lp1(pot, bm, grid).value
        elif name == "mm2":
            row["mm2"] = _mm2_or_nan(pot, bm, grid)
        elif name == "inout1":
            row["inout1"] = born_inout1(pot, bm, grid=grid).value if bm.is_open else None
    return row


_EXTRA_COLUMNS = {
    "exact": "exact_r_l",
    "unitarity": "unitarity",
    "smatrix": "smatrix_defect",
    "mm1": "mm1",
    "lp1": "lp1",
    "mm2": "mm2",
    "inout1": "inout1",
}


def cmd_amplitudes(config: ScanConfig) -> Table:
    columns = ["p", "q", "t_l", "r_l", "t_r", "r_r", "channel", "method", "max_residual"]
    columns += [_EXTRA_COLUMNS[q] for q in config.quantities]
    rows = scan(config, lambda p: amplitude_row(config, p))
    return Table("amplitudes", columns, rows, config.meta(), complex_columns=COMPLEX_COLUMNS)


# ----------------
# figure1
# ----------------
def figure1_potential() -> Potential:
    return step_delta(1.0, 0.01)


def _mm2_or_nan(pot: Potential, bm: BranchMomentum, grid) -> complex:
    try:
        return born_mm2(pot, bm, grid).value
    except NumericalError as e:
        log("WARN", str(e))
        return complex(float("nan"), float("nan"))


def figure1_row(config: ScanConfig, p: float) -> Dict[str, Any]:
    pot = config.potential
    bm = branch_momentum(p, pot.v0, pot.units)
    grid = build_grid(pot, config.grid)
    if bm.channel is Channel.THRESHOLD:
        exact = None
    else:
        exact = abs(transfer_matrix_amplitudes(pot, bm).r_l) ** 2
    mm1 = born_mm1(pot, bm, grid).value
    mm2 = _mm2_or_nan(pot, bm, grid)
    return {
        "p": p,
        "exact": exact,
        "mm1": abs(mm1) ** 2,
        "mm2_corrected": abs(mm1 + mm2) ** 2,
        "lp1": abs(born_lp1(pot, bm, grid).value) ** 2,
    }


def cmd_figure1(config: ScanConfig) -> Table:
    rows = scan(config, lambda p: figure1_row(config, p))
    return Table("figure1", ["p", "exact", "mm1", "mm2_corrected", "lp1"], rows, config.meta())


# ----------------
# verify
# ----------------
def _check(name: str, p: Optional[float], residual: float, tol: float, label: str = "") -> Dict[str, Any]:
    passed = bool(np.isfinite(residual) and residual <= tol)
    return {"name": name, "label": label, "p": p, "residual": float(residual), "tol": tol, "passed": passed}


def _corrupted(amp: AmplitudeSet, field_name: Optional[str]) -> AmplitudeSet:
    if not field_name:
        return amp
    value = getattr(amp, field_name)
    if value is None:
        return amp
    return replace(amp, **{field_name: value * CORRUPT_FACTOR})


def _rel(a: complex, b: complex) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _amp_gap(a: AmplitudeSet, b: AmplitudeSet) -> float:
    gaps = [abs(a.t_l - b.t_l), abs(a.r_l - b.r_l)]
    if a.t_r is not None and b.t_r is not None:
        gaps += [abs(a.t_r - b.t_r), abs(a.r_r - b.r_r)]
    return max(gaps)


def verify_point(pot: Potential, label: str, p: float, grid_size: int, corrupt: Optional[str]) -> List[Dict[str, Any]]:
    bm = branch_momentum(p, pot.v0, pot.units)
    if bm.channel is Channel.THRESHOLD:
        return []
    checks = []
    exact = transfer_matrix_amplitudes(pot, bm)
    for name, value in unitarity_residuals(_corrupted(exact, corrupt)).items():
        checks.append(_check(name, p, value, TOL_EXACT, label))

    for zeta in sorted({bm.energy, bm.energy - pot.v0} - {0.0}):
        for xi in (1, -1):
            closed = projector_kernel(zeta, xi, Side.PLUS, ORACLE_OFFSET, 0.0, pot.units)
            oracle = projector_kernel_quadrature(zeta, xi, Side.PLUS, ORACLE_OFFSET, pot.units)
            checks.append(_check("projector_oracle", p, abs(closed - oracle), TOL_ORACLE, label))

    grid = build_grid(pot, grid_size)
    checks.append(_check("mm_vs_transfer", p, _amp_gap(mm_amplitudes(pot, bm, grid), exact), TOL_GRID, label))
    checks.append(_check("lp_vs_transfer", p, _amp_gap(lp_amplitudes(pot, bm, grid), exact), TOL_GRID, label))

    left = solve_ls(pot, bm, Partitioning.MM_LEFT, bm.sign, grid)
    checks.append(_check("alternative_ls_left", p, check_alternative_ls(left), TOL_GRID, label))
    if bm.is_open:
        flipped = bm.flipped()
        right = solve_ls(pot, flipped, Partitioning.MM_RIGHT, -flipped.sign, grid)
        checks.append(_check("alternative_ls_right", p, check_alternative_ls(right), TOL_GRID, label))
        elements = lp_tmatrix_elements(pot, bm, grid)
        checks.append(_check("t_s_reciprocity", p, _rel(elements["tl"].value, elements["tr"].value), TOL_GRID, label))
        for combo in (1, -1):
            for channel in ("p", "q_N"):
                lhs, rhs = check_two_potential(pot, bm, combo, channel, "lp", grid)
                checks.append(_check(f"two_potential_{channel}_{'+' if combo > 0 else '-'}", p, _rel(rhs, lhs), TOL_GRID, label))
    return checks


def verify_bound_states(pot: Potential, label: str) -> List[Dict[str, Any]]:
    found = np.array([s.energy for s in find_bound_states(pot)])
    reference = np.sort(finite_difference_levels(pot))
    if found.size != reference.size:
        return [_check("bound_state_count", None, float(abs(found.size - reference.size)), 0.0, label)]
    if not found.size:
        return []
    gap = float(np.max(np.abs(np.sort(found) - reference) / np.maximum(np.abs(reference), 1e-2)))
    return [_check("bound_state_levels", None, gap, TOL_BOUND, label)]


def cmd_verify(config: ScanConfig, corrupt: Optional[str] = None, ensemble: int = 0, seed: int = 0) -> Table:
    if corrupt is not None and corrupt not in CORRUPTIBLE:
        raise ConfigError(f"--corrupt must be one of {CORRUPTIBLE}, got {corrupt!r}")
    suites = [(config.potential, config.source)]
    if ensemble:
        rng = np.random.default_rng(seed)
        suites += [(random_potential(rng), f"random[{i}]") for i in range(ensemble)]

    rows: List[Dict[str, Any]] = []
    for pot, label in suites:
        log("VERIFY", f"{label}: v0={pot.v0}, support [{pot.a}, {pot.b}]")
        per_p = scan(config, lambda p, pot=pot, label=label: verify_point(pot, label, p, config.grid, corrupt))
        for checks in per_p:
            rows.extend(checks)
        rows.extend(verify_bound_states(pot, label))

    failed = [r for r in rows if not r["passed"]]
    meta = dict(config.meta(), corrupt=corrupt, ensemble=ensemble, seed=seed, failed=len(failed))
    return Table("verify", ["name", "label", "p", "residual", "tol", "passed"], rows, meta)


# ----------------
# greens-dump
# ----------------
def cmd_greens_dump(
    kind: str, energy: float, side: int, xp: float, xs: Sequence[float], v0: float, pot: Optional[Potential]
) -> Table:
    units = pot.units if pot is not None else ATOMIC
    kernel = ResolventKernel(KernelKind(kind), energy, Side(side), v0, units)
    values = kernel(np.asarray(xs, dtype=float), xp)
    rows = [{"x": float(x), "g": complex(g)} for x, g in zip(xs, np.atleast_1d(values))]
    meta = {"kind": kind, "energy": energy, "side": side, "xp": xp, "v0": v0}
    return Table("greens-dump", ["x", "g"], rows, meta, complex_columns=("g",))


# ----------------
# packet-demo
# ----------------
def cmd_packet_demo(pot: Potential, p_center: float, p_width: float, channel: str, n_p: int) -> Table:
    curve = moller_limit_check(pot, p_center, p_width, channel, n_p=n_p)
    rows = [
        {"t": float(t), "distance": float(d), "norm": float(n)}
        for t, d, n in zip(curve.times, curve.distances, curve.norms)
    ]
    meta = {"channel": channel, "p_center": p_center, "p_width": p_width, "n_p": n_p}
    return Table("packet-demo", ["t", "distance", "norm"], rows, meta)


# ----------------
# CLI
# ----------------
def _add_scan_flags(sub: argparse.ArgumentParser, pmin: float, pmax: float, count: int) -> None:
    sub.add_argument("--potential", help="potential JSON file")
    sub.add_argument("--pmin", type=float, default=pmin)
    sub.add_argument("--pmax", type=float, default=pmax)
    sub.add_argument("--count", type=int, default=count)
    sub.add_argument("--spacing", choices=("linear", "log"), default="linear")
    sub.add_argument("--grid", type=int, default=GRID_DEFAULT, help="Nyström size N")


def _add_output_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--out", help="output path; '-' for stdout")
    sub.add_argument("--out-dir", default=OUT_DIR, help="directory for timestamped reports when --out is unset")
    sub.add_argument("--index", action="store_true", help="refresh index.json in the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROGRAM, description="One-dimensional step-potential scattering")
    subs = parser.add_subparsers(dest="command", required=True)

    amp = subs.add_parser("amplitudes", help="T^l, R^l, T^r, R^r over a momentum scan")
    _add_scan_flags(amp, 0.5, 3.0, 26)
    amp.add_argument("--method", choices=METHODS, default="transfer")
    amp.add_argument("--quantities", help=f"comma list from {','.join(QUANTITIES)}")
    _add_output_flags(amp)

    fig = subs.add_parser("figure1", help="exact, MM1, MM1+MM2 and LP1 reflectances")
    _add_scan_flags(fig, 0.05, 3.0, 300)
    _add_output_flags(fig)

    ver = subs.add_parser("verify", help="unitarity, cross-method and identity suites")
    _add_scan_flags(ver, 0.5, 3.0, 6)
    ver.add_argument("--corrupt", choices=CORRUPTIBLE, help="scale one amplitude before checking")
    ver.add_argument("--ensemble", type=int, default=0, help="extra random potentials")
    ver.add_argument("--seed", type=int, default=0)
    _add_output_flags(ver)

    gd = subs.add_parser("greens-dump", help="kernel values G(x, x') along x")
    gd.add_argument("--potential", help="potential JSON file (for v0 and units)")
    gd.add_argument("--kernel", choices=[k.value for k in KernelKind], default="free")
    gd.add_argument("--energy", type=float, default=2.0)
    gd.add_argument("--side", type=int, choices=(1, -1), default=1)
    gd.add_argument("--v0", type=float, default=None)
    gd.add_argument("--xp", type=float, default=0.125)
    gd.add_argument("--xmin", type=float, default=-5.0)
    gd.add_argument("--xmax", type=float, default=5.0)
    gd.add_argument("--count", type=int, default=201)
    _add_output_flags(gd)

    pk = subs.add_parser("packet-demo", help="distance between a scattered packet and its asymptote over time")
    pk.add_argument("--potential", help="potential JSON file")
    pk.add_argument("--channel", choices=MOLLER_CHANNELS, default="left")
    pk.add_argument("--p-center", type=float, default=2.0)
    pk.add_argument("--p-width", type=float, default=0.08)
    pk.add_argument("--n-p", type=int, default=400)
    _add_output_flags(pk)
    return parser


def emit(table: Table, args: argparse.Namespace) -> None:
    if args.out == "-":
        sys.stdout.write(render(table, args.format))
        return
    write_report(table, args.format, out=args.out, out_dir=args.out_dir, index=args.index)


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log("BOOT", f"{PROGRAM} {args.command}")

    if args.command == "amplitudes":
        table = cmd_amplitudes(config_from_args(args))
    elif args.command == "figure1":
        table = cmd_figure1(config_from_args(args, figure1_potential))
    elif args.command == "verify":
        config = config_from_args(args, lambda: barrier_on_step(1.0, 2.0))
        table = cmd_verify(config, args.corrupt, args.ensemble, args.seed)
        emit(table, args)
        failed = [r for r in table.rows if not r["passed"]]
        for r in failed:
            log("FAIL", f"{r['name']} ({r['label']}, p={r['p']}): {r['residual']:.3e} > {r['tol']:.1e}")
        if failed:
            first = failed[0]
            raise InvariantViolation(f"{len(failed)} checks failed, first: {first['name']}", first["name"], first["residual"])
        log("PASS", f"{len(table.rows)} checks")
        return 0
    elif args.command == "greens-dump":
        pot = load_potential(args.potential) if args.potential else None
        v0 = args.v0 if args.v0 is not None else (pot.v0 if pot is not None else 1.0)
        if args.count < 2:
            raise ConfigError(f"--count must be >= 2, got {args.count}")
        xs = np.linspace(args.xmin, args.xmax, args.count)
        table = cmd_greens_dump(args.kernel, args.energy, args.side, args.xp, xs, v0, pot)
    else:
        pot, _ = _default_potential(args, lambda: barrier_on_step(1.0, 0.5))
        table = cmd_packet_demo(pot, args.p_center, args.p_width, args.channel, args.n_p)

    emit(table, args)
    return 0


def main() -> None:
    try:
        code = run()
    except ScatterError as e:
        log("ERROR", str(e))
        code = e.exit_code
    sys.exit(code)


if __name__ == "__main__":
    main()
