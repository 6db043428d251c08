"""Delimited-text trace files and run summaries.

Trace schema (CSV, one row per evaluation):
    t             iteration index (0 = initialization stage)
    i             batch slot within the iteration
    x0..x{d-1}    raw input coordinates
    y             noisy observation
    f_true        ground-truth value (empty when unknown)
    cum_regret    cumulative regret after this evaluation (empty when unknown)
    simple_regret best-so-far regret after this evaluation (empty when unknown)

Floats are written with repr so files round-trip without loss.
"""

import csv
import json

import numpy as np


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_trace(path, trace, dim):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i"] + [f"x{k}" for k in range(dim)]
                   + ["y", "f_true", "cum_regret", "simple_regret"])
        for r in trace.rows:
            w.writerow([r["t"], r["i"]] + [repr(float(v)) for v in r["x"]]
                       + [_fmt(r["y"]), _fmt(r["f_true"]), _fmt(r["cum_regret"]),
                          _fmt(r["simple_regret"])])


def read_trace(path):
    """Parse a trace file back into a list of row dicts (lossless round trip)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        xcols = [c for c in header if c.startswith("x")]
        for rec in reader:
            d = dict(zip(header, rec))
            rows.append({
                "t": int(d["t"]), "i": int(d["i"]),
                "x": np.array([float(d[c]) for c in xcols]),
                "y": float(d["y"]),
                "f_true": float(d["f_true"]) if d["f_true"] else None,
                "cum_regret": float(d["cum_regret"]) if d["cum_regret"] else None,
                "simple_regret": float(d["simple_regret"]) if d["simple_regret"] else None,
            })
    return rows


def write_summary(path, summary):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path):
    with open(path) as fh:
        return json.load(fh)
