"""On-disk run artefacts.

``metrics.csv`` and ``events.jsonl`` depend only on the scenario and seed;
wall-clock measurements go to ``timing.json`` so the former stay
byte-for-byte reproducible.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .engine import RunResult

CASE_COLUMNS = ("case", "name", "seed", "traj", "drift", "axes", "objects")
METRIC_COLUMNS = ("x_err_mean", "x_err_std", "y_err_mean", "y_err_std", "yaw_err_mean",
                  "yaw_err_std", "n_align_epochs", "collisions", "travel_time", "known_fov_rate",
                  "known_continuous", "unknown_fov_rate", "unknown_continuous", "n_commits",
                  "n_aborts")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 9))
    return str(v)


def case_fields(result: RunResult):
    sc = result.scenario
    tags = dict(sc.tags)
    return {"case": tags.get("case", ""), "name": sc.name, "seed": sc.seed,
            "traj": tags.get("traj", ""), "drift": tags.get("drift", ""),
            "axes": tags.get("axes", ""), "objects": sc.landmarks.kind}


def metrics_row(result: RunResult):
    row = case_fields(result)
    row.update({k: getattr(result.metrics, k) for k in METRIC_COLUMNS})
    return row


def write_rows(path, rows, columns):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in columns])


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_run(result: RunResult, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "metrics.csv", [metrics_row(result)], CASE_COLUMNS + METRIC_COLUMNS)
    with open(out / "events.jsonl", "w") as f:
        for e in result.events:
            f.write(json.dumps(e, sort_keys=True) + "\n")
    plot = out / "plotdata"
    plot.mkdir(exist_ok=True)
    write_rows(plot / "alignment_error.csv",
               [dict(zip(("time", "x_err", "y_err", "yaw_err_rad"), r))
                for r in result.error_series],
               ("time", "x_err", "y_err", "yaw_err_rad"))
    result.alignment_log.write_csv(plot / "alignment_log.csv")
    cols = ("time",) + tuple(f"agent{a}_{ax}" for a in result.truth_paths for ax in "xyz")
    rows = []
    for k, t in enumerate(result.sample_times[::5]):
        r = {"time": float(t)}
        for a, P in result.truth_paths.items():
            for j, ax in enumerate("xyz"):
                r[f"agent{a}_{ax}"] = float(P[5 * k, j])
        rows.append(r)
    write_rows(plot / "truth_paths.csv", rows, cols)
    (out / "timing.json").write_text(json.dumps(result.timing, indent=1) + "\n")
    return out
