"""Artifacts of a scenario run: results.csv, summary.json, one SVG per series.

results.csv is long format with fixed columns ``series,index,x,value`` (see
SCHEMA.md); floats are written as %.12e so reruns with the same seed are
byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bcns.experiments.svg import write_line_svg

__all__ = ["Assertion", "Series", "ScenarioReport", "fit_report"]


@dataclass(frozen=True)
class Assertion:
    """One named pass/fail check with its measured value and threshold."""

    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "value": _jsonable(self.value),
            "threshold": _jsonable(self.threshold),
            "detail": self.detail,
        }


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class Series:
    """A tracked numeric series (also plotted as SVG)."""

    x: list[float]
    y: list[float]
    xlabel: str = "index"
    ylabel: str = "value"
    logx: bool = False
    logy: bool = False


@dataclass
class ScenarioReport:
    scenario: str
    config: dict
    assertions: list[Assertion] = field(default_factory=list)
    series: dict[str, Series] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def check(self, name: str, value: float, threshold: float, ok: bool, detail: str = "") -> bool:
        self.assertions.append(Assertion(name, bool(ok), float(value), float(threshold), detail))
        return bool(ok)

    def check_le(self, name: str, value: float, threshold: float, detail: str = "") -> bool:
        return self.check(name, value, threshold, value <= threshold, detail)

    def add_series(self, name: str, x, y, **kw) -> None:
        self.series[name] = Series([float(v) for v in x], [float(v) for v in y], **kw)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "results.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["series", "index", "x", "value"])
            for name in sorted(self.series):
                s = self.series[name]
                for i, (xv, yv) in enumerate(zip(s.x, s.y)):
                    writer.writerow([name, i, f"{xv:.12e}", f"{yv:.12e}"])
        summary = {
            "scenario": self.scenario,
            "status": "pass" if self.passed else "fail",
            "failed_checks": [a.name for a in self.assertions if not a.passed],
            "assertions": [a.to_json_dict() for a in self.assertions],
            "metrics": {k: _jsonable(v) for k, v in sorted(self.metrics.items())},
            "config": self.config,
        }
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        for name in sorted(self.series):
            s = self.series[name]
            write_line_svg(
                out_dir / f"{name}.svg",
                s.x,
                s.y,
                title=name,
                xlabel=s.xlabel,
                ylabel=s.ylabel,
                logx=s.logx,
                logy=s.logy,
            )


def fit_report(
    csv_path: str | Path,
    window: tuple[float, float],
    series: list[str] | None = None,
) -> dict:
    """Fit power-law decay exponents to series stored in a results.csv.

    Returns a JSON-ready dict mapping series name to the fit record, and
    prints nothing; callers render the table.
    """
    from bcns.linear_pde import measure_decay

    path = Path(csv_path)
    rows: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"series", "index", "x", "value"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"results csv missing columns: {sorted(missing)}")
        for row in reader:
            rows.setdefault(row["series"], []).append((float(row["x"]), float(row["value"])))
    out = {}
    for name, pts in sorted(rows.items()):
        if series is not None and name not in series:
            continue
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        inside = (x >= window[0]) & (x <= window[1])
        if inside.sum() < 3 or (y[inside] <= 0).any():
            continue
        out[name] = measure_decay(x, y, window).to_json_dict()
    return out


def render_fit_table(fits: dict) -> str:
    lines = [f"{'series':<40} {'exponent':>10} {'r2':>8} {'n':>4}"]
    for name, rec in fits.items():
        lines.append(f"{name:<40} {rec['exponent']:>10.4f} {rec['r2']:>8.4f} {rec['n_points']:>4d}")
    return "\n".join(lines)
