from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from colorama import Fore, Style, init

from errors import ConfigError

init(autoreset=True)

SCHEMA = "scatter-report/1"
OUT_DIR_DEFAULT = os.getenv("SCATTER_OUT_DIR", "reports")
CLOSED = "closed"

_TAG_COLOURS = {
    "ERROR": Fore.RED,
    "FAIL": Fore.RED,
    "PASS": Fore.GREEN,
    "WRITE": Fore.CYAN,
    "WARN": Fore.YELLOW,
}


def log(tag: str, message: str) -> None:
    """Tagged diagnostic line on stderr; SCATTER_QUIET=1 silences it."""
    if os.getenv("SCATTER_QUIET", "0") not in ("", "0"):
        return
    colour = _TAG_COLOURS.get(tag, Fore.MAGENTA)
    print(f"{colour}[{tag}]{Style.RESET_ALL} {message}", file=sys.stderr)


@dataclass
class Table:
    """Rows keyed by column name; complex cells are split into _re/_im columns on output."""

    command: str
    columns: List[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)
    complex_columns: tuple = ()


def make_report_id(*parts: Any) -> str:
    raw = "|".join(str(p) for p in parts if p is not None)
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:12]


def fmt_number(value: Any) -> str:
    """Shortest round-trip decimal for floats, CLOSED for missing amplitudes."""
    if value is None:
        return CLOSED
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _flat_columns(table: Table) -> List[str]:
    out = []
    for name in table.columns:
        if _is_complex_column(table, name):
            out.extend([f"{name}_re", f"{name}_im"])
        else:
            out.append(name)
    return out


def _is_complex_column(table: Table, name: str) -> bool:
    if name in table.complex_columns:
        return True
    return any(isinstance(row.get(name), complex) for row in table.rows)


def _flat_row(table: Table, row: Dict[str, Any]) -> List[str]:
    cells = []
    for name in table.columns:
        value = row.get(name)
        if _is_complex_column(table, name):
            if value is None:
                cells.extend([CLOSED, CLOSED])
            else:
                value = complex(value)
                cells.extend([fmt_number(value.real), fmt_number(value.imag)])
        else:
            cells.append(fmt_number(value))
    return cells


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_flat_columns(table))
    for row in table.rows:
        writer.writerow(_flat_row(table, row))
    return buf.getvalue()


def _jsonable(value: Any) -> Any:
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def render_json(table: Table) -> str:
    body = {
        "schema": SCHEMA,
        "command": table.command,
        "columns": table.columns,
        "meta": _jsonable(table.meta),
        "rows": [_jsonable({name: row.get(name) for name in table.columns}) for row in table.rows],
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def render(table: Table, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(table)
    if fmt == "json":
        return render_json(table)
    raise ConfigError(f"format must be csv or json, got {fmt!r}")


def atomic_write(path: str | Path, content: str) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)
    return path.as_posix()


def refresh_index(out_dir: str) -> None:
    """Rebuild out_dir/index.json with the helper script."""
    try:
        import subprocess

        script_path = Path(__file__).parent / "scripts" / "build_report_index.py"
        if script_path.exists():
            subprocess.run([sys.executable, str(script_path), out_dir], check=False)
    except Exception as e:
        log("WARN", f"Failed to index {out_dir}: {e}")


def write_report(
    table: Table,
    fmt: str,
    out: Optional[str] = None,
    out_dir: str = OUT_DIR_DEFAULT,
    index: bool = False,
) -> str:
    """
    Writes the rendered table to `out`, or to out_dir under a timestamped
    name when `out` is None. Returns the path written.
    """
    content = render(table, fmt)
    if out is None:
        ts = datetime.now().strftime("%Y%m%d_%H%M%S")
        report_id = make_report_id(table.command, content)
        out = str(Path(out_dir) / f"{table.command}_{ts}_{report_id}.{fmt}")
    written = atomic_write(out, content)
    log("WRITE", f"{len(table.rows)} rows -> {written}")
    if index:
        refresh_index(str(Path(written).parent))
    return written

