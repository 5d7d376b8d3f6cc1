"""CSV/JSON writers, run metadata sidecars and optional gnuplot scripts.

Data files (CSV with a header row, 15 significant digits; JSON with sorted
keys) depend only on the configuration and seed.  Wall-clock time and the
code version go into ``<file>.meta.json`` sidecars, which are the only
outputs that differ between otherwise identical runs.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.15g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_sidecar(path, config: dict, duration_s: float) -> Path:
    meta = {
        "file": Path(path).name,
        "config": config,
        "version": __version__,
        "duration_s": round(float(duration_s), 6),
    }
    return write_json(sidecar_path(path), meta)


_PLOTS = {
    "staircase": [("staircase.csv", "sigma", "mean count", "using 1:2:3 with yerrorbars", True)],
    "density": [],
    "bulk": [("bulk.csv", "gamma", "E N / N", "using 1:2 with lines title 'analytic', '' using 1:3:4 with yerrorbars title 'MC'", False)],
    "edge": [("edge.csv", "omega", "E N", "using 1:2 with lines title 'analytic', '' using 1:3:4 with yerrorbars title 'MC'", False)],
    "ldp": [("ldp_rate.csv", "lambda", "rate", "using 1:2 with points title 'empirical', '' using 1:3 with lines title 'Phi'", False)],
    "minloss": [("minloss.csv", "sigma^2", "E_min / N", "using 1:2 with lines title 'typical', '' using 1:3:4 with yerrorbars title 'MC'", False)],
}


def write_gnuplot(out_dir, experiment: str, extra_files=()) -> Path:
    """Plain-text gnuplot script referencing the CSVs of one run."""
    out_dir = Path(out_dir)
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set terminal pngcairo size 900,600"]
    entries = list(_PLOTS.get(experiment, []))
    for name in extra_files:
        entries.append((name, "lambda", "density", "using 1:2 with lines", False))
    for i, (name, xl, yl, using, logx) in enumerate(entries):
        lines.append(f"set output '{Path(name).stem}.png'")
        lines.append(f"set xlabel '{xl}'")
        lines.append(f"set ylabel '{yl}'")
        lines.append("set logscale x" if logx else "unset logscale x")
        lines.append(f"plot '{name}' {using}")
    path = out_dir / f"plot_{experiment}.gp"
    path.write_text("\n".join(lines) + "\n")
    return path
