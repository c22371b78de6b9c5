"""Report files: deterministic JSON, CSV series, gnuplot scripts.

Reports never contain timestamps or absolute paths, so the same scenario and
seed give byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

__all__ = ["TaskResult", "write_json", "emit_report", "gnuplot_script"]


def _clean(x):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        try:
            return _clean(x.item())
        except (ValueError, TypeError):
            pass
    return x


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


class TaskResult:
    """One task's report plus the side files it wants written.

    ``csvs`` maps a file suffix to a callable taking a path; ``plots`` maps a
    suffix to ``(csv_suffix, gnuplot body)``.
    """

    def __init__(self, task, report, verdict=None, csvs=None, plots=None):
        self.task = task
        self.report = report
        self.verdict = verdict
        self.csvs = csvs or {}
        self.plots = plots or {}


def gnuplot_script(csv_name: str, title: str, xlabel: str, ylabel: str, columns, logx=False) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logx:
        lines.append("set logscale x")
    plots = ", ".join(f"'{csv_name}' using 1:{c} with linespoints" for c in columns)
    lines.append(f"plot {plots}")
    return "\n".join(lines) + "\n"


def histogram_script(csv_name: str, title: str, value_col: int, weight_col: int) -> str:
    """Weighted histogram of one CSV column."""
    return "\n".join([
        "set datafile separator ','",
        f"set title '{title}'",
        "binwidth = 0.02",
        "bin(x) = binwidth * floor(x / binwidth)",
        "set style fill solid 0.5",
        f"plot '{csv_name}' every ::1 using (bin(${value_col})):{weight_col} smooth frequency with boxes notitle",
    ]) + "\n"


def emit_report(results, out_dir, scenario_meta: dict) -> dict:
    """Write every task report and side file, then ``summary.json``.

    Returns the summary dictionary.
    """
    if not isinstance(results, list):
        raise TypeError("results must be a list of TaskResult")
    # an empty list still yields a summary
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for i, r in enumerate(results):
        stem = f"{i + 1:02d}_{r.task}"
        files = [f"{stem}.json"]
        write_json(out / f"{stem}.json", r.report)
        for suffix, writer in r.csvs.items():
            name = f"{stem}_{suffix}.csv"
            writer(out / name)
            files.append(name)
        for suffix, (csv_suffix, body) in r.plots.items():
            name = f"{stem}_{suffix}.gp"
            (out / name).write_text(body.replace("{csv}", f"{stem}_{csv_suffix}.csv"))
            files.append(name)
        index.append({"task": r.task, "verdict": r.verdict, "files": files,
                      "operation": r.report.get("operation"), "seed": r.report.get("seed")})
    summary = dict(scenario_meta)
    summary["tasks"] = index
    write_json(out / "summary.json", summary)
    return summary
