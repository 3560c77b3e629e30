import json
import os
import sys
import time
from pathlib import Path

SCHEMA = "scatter-index/1"


def build_index(report_dir: str = "reports", target_file: str | None = None, max_reports: int = 50) -> dict:
    """
    Scans the report directory for csv/json results, sorts them by newest first,
    and writes an index.json next to them.
    """
    report_path = Path(report_dir)
    if not report_path.exists():
        print(f"Directory {report_dir} not found.", file=sys.stderr)
        return {}
    target = Path(target_file) if target_file else report_path / "index.json"

    reports = [
        f.name
        for f in report_path.iterdir()
        if f.suffix in (".csv", ".json") and f.name != target.name
    ]
    # Sort by filename (command_YYYYMMDD_HHMMSS_id.ext) in reverse order
    reports.sort(key=lambda name: (name.split("_", 1)[-1], name), reverse=True)
    latest = reports[:max_reports]

    index_data = {
        "schema": SCHEMA,
        "reports": latest,
        "count": len(latest),
        "updated_at": int(time.time()),
    }
    tmp = target.with_name(target.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(index_data, f, indent=2)
    os.replace(tmp, target)

    print(f"Indexed {len(latest)} reports to {target}", file=sys.stderr)
    return index_data


if __name__ == "__main__":
    base_dir = Path(__file__).parent.parent
    build_index(sys.argv[1] if len(sys.argv) > 1 else str(base_dir / "reports"))
