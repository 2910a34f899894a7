"""Report bundles and their CSV, JSON and gnuplot renderings."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

SPEC_VERSION = 1

CSV_COLUMNS = (
    "r",
    "dt",
    "sigma2",
    "sigma2_se",
    "m3",
    "m3_se",
    "m4",
    "m4_se",
    "dw_hat",
    "dw_se",
    "rhs_mecke",
    "rhs_mecke_se",
    "rhs_m3",
    "rhs_m3_se",
    "rhs_zeta",
    "rhs_zeta_se",
    "a_var",
    "a_var_se",
    "verdict",
    "config_hash",
)


@dataclass
class ReportBundle:
    """All results of one scenario run, tagged with the hash of its config."""

    name: str
    config_hash: str
    seed: int
    version: str
    r_list: list
    dt_list: list
    moments: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    rates: Optional[object] = None
    scaling: Optional[object] = None
    condition_h: list = field(default_factory=list)
    audits: dict = field(default_factory=dict)
    collisions: Optional[dict] = None
    partial: bool = False
    error: Optional[str] = None

    def verdicts(self) -> dict:
        """Flat map of every check to its outcome."""
        out = {}
        for r, b in self.bounds.items():
            for key, ok in b.verdicts.items():
                out[f"bounds[r={r:g}].{key}"] = bool(ok)
        for r, a in self.audits.items():
            out[f"audit[r={r:g}].dt"] = bool(a.dt_pass)
            out[f"audit[r={r:g}].window"] = bool(a.window_pass)
        if self.rates is not None:
            out["rates"] = bool(self.rates.passed)
        if self.collisions is not None:
            out["collisions"] = bool(self.collisions["passed"])
        if self.scaling is not None:
            out["scaling"] = bool(self.scaling.passed)
        for rep in self.condition_h:
            out[f"condition_h[H={rep.hurst:g},md={rep.md}]"] = bool(rep.passed)
        if self.partial:
            out["complete"] = False
        return out

    @property
    def passed(self) -> bool:
        return all(self.verdicts().values())

    def row_verdict(self, r: float) -> str:
        checks = []
        if r in self.bounds:
            checks += list(self.bounds[r].verdicts.values())
        if r in self.audits:
            checks.append(self.audits[r].passed)
        if not checks:
            return ""
        return "pass" if all(checks) else "fail"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def csv_text(bundle: ReportBundle) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(CSV_COLUMNS)
    for r, dt in zip(bundle.r_list, bundle.dt_list):
        m = bundle.moments.get(r)
        b = bundle.bounds.get(r)
        row = {"r": r, "dt": dt, "config_hash": bundle.config_hash, "verdict": bundle.row_verdict(r)}
        if m is not None:
            for key in ("sigma2", "sigma2_se", "m3", "m3_se", "m4", "m4_se", "rhs_mecke", "rhs_mecke_se"):
                row[key] = getattr(m, key)
            row["rhs_zeta"], row["rhs_zeta_se"] = m.rhs_zeta, m.rhs_zeta_se
            row["rhs_m3"], row["rhs_m3_se"] = math.sqrt(2.0) * m.m3, math.sqrt(2.0) * m.m3_se
        if b is not None:
            for key in ("dw_hat", "dw_se", "a_var", "a_var_se"):
                row[key] = getattr(b, key)
        writer.writerow([_fmt(row.get(col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def _plain(obj):
    """Dataclasses to dicts, non-finite floats to strings, keys to strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {(k if isinstance(k, str) else _fmt(k)): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if hasattr(obj, "item"):
        obj = obj.item()
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    return obj


def json_text(bundle: ReportBundle) -> str:
    doc = {
        "spec_version": SPEC_VERSION,
        "provenance": {
            "name": bundle.name,
            "seed": bundle.seed,
            "config_hash": bundle.config_hash,
            "version": bundle.version,
        },
        "partial": bundle.partial,
        "error": bundle.error,
        "r_list": bundle.r_list,
        "dt_list": bundle.dt_list,
        "moments": _plain(bundle.moments),
        "bounds": _plain(bundle.bounds),
        "rates": _plain(bundle.rates),
        "scaling": _plain(bundle.scaling),
        "condition_h": _plain(bundle.condition_h),
        "audits": _plain(bundle.audits),
        "collisions": _plain(bundle.collisions),
        "verdicts": bundle.verdicts(),
        "passed": bundle.passed,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def gnuplot_text(bundle: ReportBundle, csv_name: str) -> str:
    return f"""# {bundle.name} (config {bundle.config_hash})
set datafile separator ","
set key autotitle columnhead
set logscale xy
set xlabel "r"
set terminal pngcairo size 900,400
set output "{bundle.name}.png"
set multiplot layout 1,2
set ylabel "distance to N(0,1)"
plot "{csv_name}" using "r":"dw_hat":"dw_se" with yerrorbars title "dw", \\
     "" using "r":"rhs_m3" with linespoints title "sqrt(2) m3", \\
     "" using "r":"rhs_mecke" with linespoints title "third absolute moment bound"
set ylabel "variance"
plot "{csv_name}" using "r":"sigma2":"sigma2_se" with yerrorbars title "Mecke", \\
     "" using "r":"a_var":"a_var_se" with yerrorbars title "system"
unset multiplot
"""


def write_bundle(bundle: ReportBundle, out_dir) -> dict:
    """Write ``<name>.csv``, ``<name>.json`` and ``<name>.gp``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / f"{bundle.name}.csv",
        "json": out / f"{bundle.name}.json",
        "gnuplot": out / f"{bundle.name}.gp",
    }
    # newline="" keeps the CRLF record separators written by the csv module.
    with open(paths["csv"], "w", newline="") as fh:
        fh.write(csv_text(bundle))
    paths["json"].write_text(json_text(bundle))
    paths["gnuplot"].write_text(gnuplot_text(bundle, paths["csv"].name))
    return paths
