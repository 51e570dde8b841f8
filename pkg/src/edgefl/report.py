"""Per-round CSV, JSON summary and run manifest."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from edgefl import __version__
from edgefl.config import config_digest
from edgefl.engine import RunReport

CSV_COLUMNS = ("round", "loss", "val_loss", "t_comp_s", "t_comm_s", "G", "comm_J", "compute_J", "samples")
FORMATS = ("csv", "json")


@dataclass
class RunManifest:
    config_digest: str
    tool_version: str
    seed: int
    started: str
    finished: str
    outputs: list = field(default_factory=list)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def rounds_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.records:
        w.writerow([r.round, _num(r.loss), _num(r.val_loss), _num(r.t_comp), _num(r.t_comm),
                    _num(r.granularity), _num(r.comm_j), _num(r.compute_j), r.samples])
    return buf.getvalue()


def summary_json(report: RunReport) -> str:
    doc = dict(report.summary)
    doc["config_digest"] = config_digest(report.config)
    doc["seed"] = report.config.seed
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_report(report: RunReport, fmt: str, path) -> RunManifest:
    """Write the per-round CSV or the JSON summary to ``path``."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    started = _now()
    path = Path(path)
    text = rounds_csv(report) if fmt == "csv" else summary_json(report)
    with path.open("w", newline="") as fh:
        fh.write(text)
    return RunManifest(config_digest(report.config), __version__, report.config.seed,
                       started, _now(), [str(path)])


def write_run(report: RunReport, out_dir, started: str | None = None) -> RunManifest:
    """rounds.csv, summary.json and manifest.json under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = started or _now()
    csv_path, json_path = out / "rounds.csv", out / "summary.json"
    emit_report(report, "csv", csv_path)
    emit_report(report, "json", json_path)
    manifest = RunManifest(config_digest(report.config), __version__, report.config.seed,
                           started, _now(), [str(csv_path), str(json_path)])
    (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")
    return manifest


def strategy_table(reports: list[RunReport]) -> list[dict]:
    """Rows sorted by rounds-to-target; runs that never hit the target go last."""
    rows = [
        {
            "strategy": r.summary["strategy"],
            "rounds_to_target": r.summary["rounds_to_target"],
            "rounds": r.summary["rounds"],
            "final_loss": r.summary["final_loss"],
            "total_comm_kwh": r.summary["total_comm_kwh"],
            "total_compute_kwh": r.summary["total_compute_kwh"],
        }
        for r in reports
    ]
    order = {s: i for i, s in enumerate(r["strategy"] for r in rows)}
    rows.sort(key=lambda r: (r["rounds_to_target"] is None, r["rounds_to_target"] or 0, order[r["strategy"]]))
    return rows


def strategy_table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ("strategy", "rounds_to_target", "rounds", "final_loss", "total_comm_kwh", "total_compute_kwh")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
    return buf.getvalue()
