"""CSV and manifest persistence for sweep results."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import platform
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .baseline import BASELINE_LABEL
from .harness import (CSV_FIELDS, DIAG_FIELDS, SUMMARY_FIELDS, SweepResult, SweepSummary,
                      TrialRecord)

TRIALS_SCHEMA = "afdmsense-trials/1"
SUMMARY_SCHEMA = "afdmsense-summary/1"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else f"{float(value):.17g}"
    return str(value)


def _parse(kind, text: str):
    if kind is bool:
        return text == "1"
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def _types(cls) -> dict:
    hints = {"str": str, "int": int, "float": float, "bool": bool}
    return {f.name: hints.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
            for f in fields(cls)}


def _write_table(path: Path, schema: str, names, rows, meta=()) -> None:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    for line in meta:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in rows:
        writer.writerow([_fmt(row[n]) for n in names])
    try:
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def _read_table(path: Path, cls, names):
    kinds = _types(cls)
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != tuple(names):
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    return [{k: _parse(kinds[k], v) for k, v in row.items()} for row in reader]


def trials_csv_text(records) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {TRIALS_SCHEMA}\n")
    buf.write(f"# d0_hat_baseline: {BASELINE_LABEL}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        d = asdict(r)
        writer.writerow([_fmt(d[n]) for n in CSV_FIELDS])
    return buf.getvalue()


def write_trials(records, path) -> Path:
    path = Path(path)
    try:
        path.write_text(trials_csv_text(records), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    return path


def read_trials(path) -> list[TrialRecord]:
    return [TrialRecord(**row) for row in _read_table(Path(path), TrialRecord, CSV_FIELDS)]


def write_diagnostics(records, path) -> Path:
    path = Path(path)
    _write_table(path, TRIALS_SCHEMA + "+diag", DIAG_FIELDS, [asdict(r) for r in records])
    return path


def write_summary(summaries, path) -> Path:
    path = Path(path)
    _write_table(path, SUMMARY_SCHEMA, SUMMARY_FIELDS, [asdict(s) for s in summaries],
                 meta=[f"rmse_d0_baseline: {BASELINE_LABEL}",
                       "nrmse_nu1: sqrt(mean(((nu1_hat - nu1) / nu1)^2)) over |nu1| > 1e-6",
                       "rmse_nu1: sqrt(mean((nu1_hat - nu1)^2)), not normalized"])
    return path


def read_summary(path) -> list[SweepSummary]:
    return [SweepSummary(**row) for row in _read_table(Path(path), SweepSummary,
                                                       SUMMARY_FIELDS)]


def manifest(result: SweepResult, argv=None) -> dict:
    return {
        "package": "afdmsense",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "argv": list(argv) if argv is not None else None,
        "baseline": BASELINE_LABEL,
        "scenarios": [{"scenario_id": sid, **scn.to_dict()}
                      for sid, scn in zip(result.scenario_ids, result.scenarios)],
        "failures": sum(bool(r.error) for r in result.records),
        "nonconverged": sum(not r.converged for r in result.records),
        # the only field that changes between identical runs
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def emit_outputs(result: SweepResult, out_dir, argv=None, plots: bool = True) -> dict:
    """Write trials.csv, diagnostics.csv, summary.csv, run_manifest.json and SVG plots."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"could not create output directory {out}: {exc}") from exc
    paths = {
        "trials": write_trials(result.records, out / "trials.csv"),
        "diagnostics": write_diagnostics(result.records, out / "diagnostics.csv"),
        "summary": write_summary(result.summaries, out / "summary.csv"),
    }
    man = out / "run_manifest.json"
    try:
        man.write_text(json.dumps(manifest(result, argv), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not write {man}: {exc}") from exc
    paths["manifest"] = man
    if plots:
        from .plots import plot_summaries
        paths["plots"] = plot_summaries(result.summaries, out)
    return paths
