"""Report rendering: CSV and JSON at full precision, markdown as percent tables.

CSV and JSON round-trip numerically (17 significant digits); markdown is the
presentation layer, percentages with two decimals, best cell per OOD set
column in bold (highest AUROC, lowest FPR). Sweep reports written to a file
get a companion `<out>.plotdata.csv` with (k, average FPR) rows for external
plotting.
"""

from __future__ import annotations

import io
import csv
import json
from pathlib import Path

from .bench import BenchmarkReport
from .errors import ConfigError

_FORMATS = {"csv": "csv", "md": "markdown", "markdown": "markdown", "json": "json"}

# reserved ood_set name for per-k averages in sweep CSV rows
AVERAGE_LABEL = "__average__"

_EVAL_FIELDS = ["detector", "ood_set", "auroc", "fpr_at_target",
                "target_tpr", "n_id", "n_ood"]
_SWEEP_FIELDS = ["k", "ood_set", "auroc", "fpr_at_target",
                 "target_tpr", "n_id", "n_ood"]


def _g17(x):
    return format(float(x), ".17g")


def _pct(x):
    return f"{100.0 * x:.2f}"


def render_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if report.kind == "eval":
        writer.writerow(_EVAL_FIELDS)
        for det in report.detectors:
            for name in report.set_names:
                r = report.rows[(det, name)]
                writer.writerow([det, name, _g17(r.auroc), _g17(r.fpr_at_target),
                                 _g17(r.target_tpr), r.n_id, r.n_ood])
    else:
        writer.writerow(_SWEEP_FIELDS)
        for k in report.sweep_ks:
            for name in report.set_names:
                r = report.sweep[(k, name)]
                writer.writerow([k, name, _g17(r.auroc), _g17(r.fpr_at_target),
                                 _g17(r.target_tpr), r.n_id, r.n_ood])
            if k in report.sweep_avg:
                a = report.sweep_avg[k]
                writer.writerow([k, AVERAGE_LABEL, _g17(a["auroc"]),
                                 _g17(a["fpr_at_target"]), _g17(report.target_tpr),
                                 "", ""])
    return buf.getvalue()


def _md_table(header, rows):
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines)


def render_markdown(report: BenchmarkReport) -> str:
    parts = []
    meta = ", ".join(f"{k}={v}" for k, v in sorted(report.metadata.items()))
    tpr_pct = _pct(report.target_tpr)
    if report.kind == "eval":
        parts.append(f"# Detector comparison (AUROC / FPR@{tpr_pct}%TPR, percent)")
        if meta:
            parts.append(f"_{meta}_")
        if not report.set_names:
            parts.append("No OOD sets in manifest; nothing to evaluate.")
        else:
            header = ["Detector", "Metric"] + list(report.set_names)
            rows = []
            for metric, attr, best_fn in (
                ("AUROC", "auroc", max),
                (f"FPR@{tpr_pct}%TPR", "fpr_at_target", min),
            ):
                # best per OOD set column across detectors
                best = {
                    name: best_fn(getattr(report.rows[(d, name)], attr)
                                  for d in report.detectors)
                    for name in report.set_names
                }
                for det in report.detectors:
                    vals = [getattr(report.rows[(det, name)], attr)
                            for name in report.set_names]
                    marked = [
                        f"**{_pct(v)}**" if v == best[name] else _pct(v)
                        for v, name in zip(vals, report.set_names)
                    ]
                    rows.append([det, metric] + marked)
            parts.append(_md_table(header, rows))
    else:
        parts.append(f"# KNN detector across k (AUROC / FPR@{tpr_pct}%TPR, percent)")
        if meta:
            parts.append(f"_{meta}_")
        if not report.set_names:
            parts.append("No OOD sets in manifest; nothing to evaluate.")
        else:
            header = ["k"]
            for name in report.set_names:
                header += [f"{name} AUROC", f"{name} FPR"]
            header += ["Avg AUROC", "Avg FPR"]
            rows = []
            for k in report.sweep_ks:
                row = [str(k)]
                for name in report.set_names:
                    r = report.sweep[(k, name)]
                    row += [_pct(r.auroc), _pct(r.fpr_at_target)]
                a = report.sweep_avg[k]
                row += [_pct(a["auroc"]), _pct(a["fpr_at_target"])]
                rows.append(row)
            parts.append(_md_table(header, rows))
    return "\n\n".join(parts) + "\n"


def render_json(report: BenchmarkReport) -> str:
    doc = {
        "schema_version": 1,
        "kind": report.kind,
        "metadata": report.metadata,
        "target_tpr": report.target_tpr,
        "detectors": list(report.detectors),
        "ood_sets": list(report.set_names),
        "k": report.k,
        "eval": [
            {"detector": det, "ood_set": name,
             "auroc": report.rows[(det, name)].auroc,
             "fpr_at_target": report.rows[(det, name)].fpr_at_target,
             "n_id": report.rows[(det, name)].n_id,
             "n_ood": report.rows[(det, name)].n_ood}
            for det in report.detectors for name in report.set_names
        ] if report.kind == "eval" else [],
        "k_sweep": list(report.sweep_ks),
        "sweep": [
            {"k": k, "ood_set": name,
             "auroc": report.sweep[(k, name)].auroc,
             "fpr_at_target": report.sweep[(k, name)].fpr_at_target,
             "n_id": report.sweep[(k, name)].n_id,
             "n_ood": report.sweep[(k, name)].n_ood}
            for k in report.sweep_ks for name in report.set_names
        ] if report.kind == "sweep" else [],
        "sweep_average": [
            {"k": k, "auroc": report.sweep_avg[k]["auroc"],
             "fpr_at_target": report.sweep_avg[k]["fpr_at_target"]}
            for k in report.sweep_ks if k in report.sweep_avg
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


# structural contract for the JSON output, used by the test suite
REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "metadata", "target_tpr",
                 "detectors", "ood_sets", "eval", "k_sweep", "sweep",
                 "sweep_average"],
    "properties": {
        "schema_version": {"const": 1},
        "kind": {"enum": ["eval", "sweep"]},
        "metadata": {"type": "object", "additionalProperties": {"type": "string"}},
        "target_tpr": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "detectors": {"type": "array", "items": {"enum": ["knn", "msp"]}},
        "ood_sets": {"type": "array", "items": {"type": "string"}},
        "k": {"type": ["integer", "null"]},
        "eval": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["detector", "ood_set", "auroc", "fpr_at_target",
                             "n_id", "n_ood"],
                "properties": {
                    "detector": {"enum": ["knn", "msp"]},
                    "ood_set": {"type": "string"},
                    "auroc": {"type": "number", "minimum": 0, "maximum": 1},
                    "fpr_at_target": {"type": "number", "minimum": 0, "maximum": 1},
                    "n_id": {"type": "integer", "minimum": 1},
                    "n_ood": {"type": "integer", "minimum": 1},
                },
                "additionalProperties": False,
            },
        },
        "k_sweep": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "sweep": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["k", "ood_set", "auroc", "fpr_at_target"],
                "properties": {
                    "k": {"type": "integer", "minimum": 1},
                    "ood_set": {"type": "string"},
                    "auroc": {"type": "number", "minimum": 0, "maximum": 1},
                    "fpr_at_target": {"type": "number", "minimum": 0, "maximum": 1},
                    "n_id": {"type": "integer", "minimum": 1},
                    "n_ood": {"type": "integer", "minimum": 1},
                },
                "additionalProperties": False,
            },
        },
        "sweep_average": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["k", "auroc", "fpr_at_target"],
                "additionalProperties": False,
                "properties": {
                    "k": {"type": "integer", "minimum": 1},
                    "auroc": {"type": "number", "minimum": 0, "maximum": 1},
                    "fpr_at_target": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        },
    },
    "additionalProperties": False,
}


def render(report: BenchmarkReport, fmt) -> str:
    kind = _FORMATS.get(str(fmt).lower())
    if kind is None:
        raise ConfigError(f"unknown report format {fmt!r} (csv, md, json)")
    if kind == "csv":
        return render_csv(report)
    if kind == "markdown":
        return render_markdown(report)
    return render_json(report)


def plot_data_csv(report: BenchmarkReport) -> str:
    """Fig-style (k, average FPR) series for sweep reports, fractions."""
    lines = ["k,avg_fpr"]
    lines.extend(f"{k},{_g17(report.sweep_avg[k]['fpr_at_target'])}"
                 for k in report.sweep_ks if k in report.sweep_avg)
    return "\n".join(lines) + "\n"


def emit_report(report: BenchmarkReport, fmt, out=None) -> str:
    """Render and, if out is given, write the report (plus sweep plot data)."""
    text = render(report, fmt)
    if out is not None:
        out = Path(out)
        out.write_text(text)
        if report.kind == "sweep":
            Path(str(out) + ".plotdata.csv").write_text(plot_data_csv(report))
    return text
