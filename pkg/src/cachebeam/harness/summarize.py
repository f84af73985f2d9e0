"""Aggregation of sweep CSVs and paired statistics."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy import stats

from .sweep import CSV_COLUMNS

AXIS_COLUMNS = ("sinr_dB", "cache_size", "n_users", "E_bh")
METRICS = ("p_tilde_W", "p_W", "transmit_W", "backhaul_W", "relative_W", "n_active_bs",
           "n_assignments")
SUMMARY_COLUMNS = AXIS_COLUMNS + ("algorithm", "count", "excluded_trials") + tuple(
    f"{stat}_{m}" for m in METRICS for stat in ("mean", "std"))


class CsvFormatError(ValueError):
    pass


@dataclass
class Row:
    line: int
    trial_id: int
    point: Tuple[float, int, int, float]
    algorithm: str
    status: str
    values: Dict[str, float]


def read_rows(path) -> List[Row]:
    """Parse a sweep CSV; malformed lines raise with their line numbers."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if tuple(header) != CSV_COLUMNS:
            raise CsvFormatError(f"{path}:1: header does not match the sweep schema")
        rows, bad = [], []
        for line, raw in enumerate(reader, start=2):
            if len(raw) != len(CSV_COLUMNS):
                bad.append(f"{line} (expected {len(CSV_COLUMNS)} fields, got {len(raw)})")
                continue
            rec = dict(zip(CSV_COLUMNS, raw))
            try:
                point = (float(rec["sinr_dB"]), int(rec["cache_size"]), int(rec["n_users"]),
                         float(rec["E_bh"]))
                vals = {m: (float(rec[m]) if rec[m] != "" else math.nan) for m in METRICS}
                if rec["status"] == "solved" and any(math.isnan(vals[m]) for m in METRICS):
                    raise ValueError("solved row without power values")
                rows.append(Row(line, int(rec["trial_id"]), point, rec["algorithm"],
                                rec["status"], vals))
            except ValueError as err:
                bad.append(f"{line} ({err})")
        if bad:
            raise CsvFormatError(f"{path}: malformed rows at lines " + "; ".join(bad))
    return rows


def complete_trials(rows: List[Row]) -> Dict[tuple, set]:
    """Per axis point, the trials in which every algorithm solved."""
    algos = defaultdict(set)
    for r in rows:
        algos[r.point].add(r.algorithm)
    solved = defaultdict(lambda: defaultdict(set))
    trials = defaultdict(set)
    for r in rows:
        trials[r.point].add(r.trial_id)
        if r.status == "solved":
            solved[r.point][r.trial_id].add(r.algorithm)
    return {pt: {t for t in trials[pt] if solved[pt][t] == algos[pt]} for pt in trials}


def summarize_rows(rows: List[Row]) -> List[dict]:
    keep = complete_trials(rows)
    cells = defaultdict(list)
    all_trials = defaultdict(set)
    algo_order = []
    for r in rows:
        all_trials[r.point].add(r.trial_id)
        if r.algorithm not in algo_order:
            algo_order.append(r.algorithm)
        if r.trial_id in keep[r.point]:
            cells[(r.point, r.algorithm)].append(r.values)
    out = []
    for point in sorted(all_trials):
        for algo in algo_order:
            if not any(r.point == point and r.algorithm == algo for r in rows):
                continue
            vals = cells.get((point, algo), [])
            rec = dict(zip(AXIS_COLUMNS, point))
            rec.update(algorithm=algo, count=len(vals),
                       excluded_trials=len(all_trials[point]) - len(keep[point]))
            for m in METRICS:
                arr = np.array([v[m] for v in vals], dtype=float)
                rec[f"mean_{m}"] = float(arr.mean()) if arr.size else math.nan
                rec[f"std_{m}"] = float(arr.std(ddof=1)) if arr.size > 1 else math.nan
            out.append(rec)
    return out


def summarize(path) -> List[dict]:
    """Mean, sample std and count per (axis point, algorithm) over complete trials."""
    return summarize_rows(read_rows(path))


def write_summary(summary: List[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in summary:
        writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in rec.items()})


# --------------------------------------------------------------------------
# paired statistics


def paired_values(rows: List[Row], point, algo_a: str, algo_b: str, metric: str = "p_tilde_W"):
    """Aligned metric arrays of two algorithms over the complete trials of a point."""
    keep = complete_trials(rows)[point]
    a, b = {}, {}
    for r in rows:
        if r.point == point and r.trial_id in keep:
            if r.algorithm == algo_a:
                a[r.trial_id] = r.values[metric]
            elif r.algorithm == algo_b:
                b[r.trial_id] = r.values[metric]
    ids = sorted(set(a) & set(b))
    return np.array([a[i] for i in ids]), np.array([b[i] for i in ids])


def mean_ci(samples, level: float = 0.95) -> Tuple[float, float, float]:
    """(mean, lower, upper) Student-t confidence interval of the mean."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        m = float(x.mean()) if x.size else math.nan
        return m, math.nan, math.nan
    m = float(x.mean())
    half = float(stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))
    return m, m - half, m + half
