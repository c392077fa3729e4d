"""Evaluation reports: per-image CSV plus aggregate JSON."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

METRIC_COLUMNS = ("psnr", "ssim", "ms_ssim", "niqe", "afld", "afics")
HIGHER_IS_BETTER = {
    "psnr": True, "ssim": True, "ms_ssim": True,
    "niqe": False, "afld": False, "afics": True,
}
PSNR_AGGREGATE_CAP = 99.0


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)      # {"id": ..., "<metric>": float|None}
    aggregates: dict = field(default_factory=dict)      # metric -> {"value", "higher_is_better"}
    errors: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def compute_aggregates(self) -> None:
        """Mean of per-image values; infinite PSNR capped at 99.0 here only."""
        self.aggregates = {}
        for metric in METRIC_COLUMNS:
            values = [row[metric] for row in self.rows
                      if row.get(metric) is not None]
            if not values:
                continue
            if metric == "psnr":
                values = [min(v, PSNR_AGGREGATE_CAP) for v in values]
            self.aggregates[metric] = {
                "value": sum(values) / len(values),
                "higher_is_better": HIGHER_IS_BETTER[metric],
            }


def _cell(value) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return repr(float(value))


def write_report(report: EvalReport, csv_path, json_path) -> None:
    """Serialize per-image rows (CSV, id-sorted) and aggregates (JSON)."""
    rows = sorted(report.rows, key=lambda r: r["id"])
    lines = ["id," + ",".join(METRIC_COLUMNS)]
    for row in rows:
        lines.append(",".join([str(row["id"])] +
                              [_cell(row.get(m)) for m in METRIC_COLUMNS]))
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    payload = {
        "aggregates": report.aggregates,
        "errors": report.errors,
        "metadata": report.metadata,
        "images": len(rows),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
