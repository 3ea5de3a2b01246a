"""Output bundles: report.json, table.csv, optional SVG plots and a manifest.

All files are rendered to bytes first, written to a scratch directory next
to the destination and only then moved into place, so a failed run never
leaves a partial bundle behind.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

from .experiments import ExperimentReport

TABLE_HEADER = ("run_id", "study", "key", "metric", "value")
FORMATS = ("table", "report", "both")


def format_value(v) -> str:
    """Full-precision text for a table cell: repr for floats, '' for None."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_key(key: dict) -> str:
    return ";".join(f"{k}={format_value(v)}" for k, v in key.items())


def table_rows(report: ExperimentReport) -> list[tuple]:
    """One row per (run, metric), followed by fit and classification rows."""
    rows = []
    for i, rec in enumerate(report.records):
        key = format_key(rec["key"])
        for name in sorted(rec["metrics"]):
            rows.append((f"run{i:03d}", report.study, key, name, format_value(rec["metrics"][name])))
    for name in sorted(report.fits):
        for metric in sorted(report.fits[name]):
            rows.append(("fit", report.study, name, metric, format_value(report.fits[name][metric])))
    for cls in report.classifications:
        key = f"p={format_value(cls['p'])}"
        for metric in sorted(k for k in cls if k != "p"):
            rows.append(("classification", report.study, key, metric, format_value(cls[metric])))
    for name in sorted(report.summary):
        rows.append(("summary", report.study, "", name, format_value(report.summary[name])))
    return rows


def render_csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def render_profiles(profiles: dict) -> bytes:
    names = list(profiles)
    n = len(profiles[names[0]])
    rows = [(i, *(format_value(float(profiles[k][i])) for k in names)) for i in range(n)]
    return render_csv(("site", *names), rows)


# plots (from table rows only)

PLOT_GROUPS = {
    "width.svg": ("std_width", "predicted_width", "reference_width", "control_width"),
    "error.svg": ("l1_gaussian", "l1_lattice", "deviation_l1", "relative_error_x"),
    "mass_split.svg": ("mass_x", "mass_y", "analytic_mass_x", "control_mass_x",
                       "memory_fraction", "control_memory_fraction"),
}


def _series_from_rows(rows, metrics):
    """{(series label, metric): [(x, y), ...]} using the last numeric key
    entry as x and the remaining key entries as the series label."""
    out = {}
    for run_id, _study, key, metric, value in rows:
        if not run_id.startswith("run") or metric not in metrics or value == "":
            continue
        parts = [p.split("=", 1) for p in key.split(";") if p]
        try:
            x = float(parts[-1][1])
            y = float(value)
        except (IndexError, ValueError):
            continue
        label = ",".join(f"{k}={v}" for k, v in parts[:-1])
        out.setdefault((label, metric), []).append((x, y))
    return out


def render_plots(rows) -> dict[str, bytes]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    files = {}
    with matplotlib.rc_context({"svg.hashsalt": "capprop", "svg.fonttype": "path"}):
        for fname, metrics in PLOT_GROUPS.items():
            series = _series_from_rows(rows, metrics)
            if not series:
                continue
            xname = next(r[2] for r in rows if r[0].startswith("run")).split(";")[-1].split("=")[0]
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for (label, metric), pts in series.items():
                pts.sort()
                xs, ys = zip(*pts)
                ax.plot(xs, ys, marker="o", label=f"{metric} {label}".strip())
            if all(x > 0 for pts in series.values() for x, _ in pts):
                ax.set_xscale("log")
            if all(y > 0 for pts in series.values() for _, y in pts):
                ax.set_yscale("log")
            ax.set_xlabel(xname)
            ax.legend(fontsize=7)
            fig.tight_layout()
            buf = io.BytesIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
            plt.close(fig)
            files[fname] = buf.getvalue()
    return files


def build_bundle(report: ExperimentReport, fmt: str = "both", plots: bool = True,
                 profiles: dict | None = None) -> dict[str, bytes]:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    files = {}
    rows = table_rows(report)
    if fmt in ("report", "both"):
        files["report.json"] = report.to_json().encode()
    if fmt in ("table", "both"):
        files["table.csv"] = render_csv(TABLE_HEADER, rows)
    if profiles:
        files["profiles.csv"] = render_profiles(profiles)
    if plots:
        files.update(render_plots(rows))
    return files


def manifest(files: dict[str, bytes], runtime_seconds: float | None = None) -> bytes:
    entries = [{"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
               for name, data in sorted(files.items())]
    doc = {"files": entries, "runtime_seconds": runtime_seconds}
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def write_bundle(out_dir, files: dict[str, bytes], runtime_seconds: float | None = None) -> Path:
    """Write ``files`` plus ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    all_files = dict(files)
    all_files["manifest.json"] = manifest(files, runtime_seconds)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        for name, data in all_files.items():
            (tmp / name).write_bytes(data)
        out.mkdir(exist_ok=True)
        for name in all_files:
            os.replace(tmp / name, out / name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return out
