"""Monte Carlo sweeps: scenario seeding, algorithm runs and CSV output."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional

from ..lgsbf.algorithms import AlgoResult, run_all
from ..netgen import build_scenario
from ..powermodel import check_constraints
from .config import AxisPoint, ExperimentConfig

CSV_COLUMNS = ("trial_id", "sinr_dB", "cache_size", "n_users", "E_bh", "algorithm", "status",
               "p_W", "p_tilde_W", "transmit_W", "backhaul_W", "relative_W", "n_active_bs",
               "n_assignments", "stage1_ms", "stage2_ms", "stage3_ms")
TIMING_COLUMNS = ("stage1_ms", "stage2_ms", "stage3_ms")


def trial_seed(base_seed: int, axes: Iterable[str], trial: int) -> int:
    """Stable 63-bit seed from the base seed, the names of the swept axes and the trial.

    The axis values are deliberately left out: every point of a sweep
    sees the same topology, channels and requests for a given trial, so
    differences along the axis are paired.
    """
    key = f"{int(base_seed)}|{','.join(sorted(axes))}|{int(trial)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big") >> 1


@dataclass
class TrialRecord:
    trial_id: int
    point: AxisPoint
    algorithm: str
    status: str                 # solved, infeasible, error
    p_W: float = math.nan
    p_tilde_W: float = math.nan
    transmit_W: float = math.nan
    backhaul_W: float = math.nan
    relative_W: float = math.nan
    n_active_bs: Optional[int] = None
    n_assignments: Optional[int] = None
    stage1_ms: float = 0.0
    stage2_ms: float = 0.0
    stage3_ms: float = 0.0
    message: str = ""
    # kept in memory only (not part of the CSV schema): Stage II solve counts
    # and the exact constraint check of a solved beamformer
    dc_solves: Optional[int] = None
    dc_bound: Optional[int] = None
    certified: Optional[bool] = None

    @classmethod
    def from_result(cls, trial_id, point, res: AlgoResult) -> "TrialRecord":
        t = res.timing_ms
        rec = cls(trial_id, point, res.algorithm, res.status,
                  stage1_ms=t["stage1"], stage2_ms=t["stage2"], stage3_ms=t["stage3"])
        if res.breakdown is not None:
            b = res.breakdown
            rec.p_W, rec.p_tilde_W = b.p, b.p_tilde
            rec.transmit_W, rec.backhaul_W, rec.relative_W = b.transmit, b.backhaul_traffic, b.relative
            rec.n_active_bs, rec.n_assignments = b.n_active_bs, b.n_assignments
        if res.trace is not None:
            rec.dc_solves, rec.dc_bound = res.trace.dc_solves, res.trace.bound
        return rec

    def sort_key(self, algo_order) -> tuple:
        return (self.point.sort_key(), self.trial_id, algo_order.index(self.algorithm))

    def row(self) -> dict:
        out = {"trial_id": self.trial_id, **self.point.as_dict(), "algorithm": self.algorithm,
               "status": self.status}
        for col in ("p_W", "p_tilde_W", "transmit_W", "backhaul_W", "relative_W"):
            val = getattr(self, col)
            out[col] = "" if math.isnan(val) else repr(float(val))
        out["n_active_bs"] = "" if self.n_active_bs is None else self.n_active_bs
        out["n_assignments"] = "" if self.n_assignments is None else self.n_assignments
        for col in TIMING_COLUMNS:
            out[col] = f"{getattr(self, col):.1f}"
        return out


def run_trial(cfg: ExperimentConfig, point: AxisPoint, trial: int) -> List[TrialRecord]:
    """All configured algorithms on one generated scenario; failures become error rows."""
    seed = trial_seed(cfg.base_seed, cfg.varying_axes(), trial)
    try:
        scenario = build_scenario(cfg.scenario_at(point), seed)
        results = run_all(scenario, cfg.algorithms, cfg.solver_settings())
    except Exception as err:          # recorded, the sweep carries on
        msg = f"{type(err).__name__}: {err}"
        return [TrialRecord(trial, point, a, "error", message=msg) for a in cfg.algorithms]
    records = []
    for a in cfg.algorithms:
        rec = TrialRecord.from_result(trial, point, results[a])
        if results[a].solved:
            rec.certified = check_constraints(results[a].beamformer, scenario).all_ok
        records.append(rec)
    return records


def _run_job(args):
    cfg, point, trial = args
    return run_trial(cfg, point, trial)


def iter_jobs(cfg: ExperimentConfig):
    for point in cfg.axis_points():
        for trial in range(cfg.trials):
            yield cfg, point, trial


def run_sweep(cfg: ExperimentConfig, out_path: Optional[str] = None, progress=None) -> List[TrialRecord]:
    """Run every (axis point, trial) and write the canonical CSV.

    Records come back in canonical order (axis point, trial, algorithm)
    whatever the execution order.  ``progress`` is called with each
    finished trial's records.
    """
    jobs = list(iter_jobs(cfg))
    records: List[TrialRecord] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for recs in pool.map(_run_job, jobs):
                records.extend(recs)
                if progress:
                    progress(recs)
    else:
        for job in jobs:
            recs = _run_job(job)
            records.extend(recs)
            if progress:
                progress(recs)
    order = list(cfg.algorithms)
    records.sort(key=lambda r: r.sort_key(order))
    path = cfg.output if out_path is None else out_path
    if path:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write_csv(records, fh)
    return records


def write_csv(records: Iterable[TrialRecord], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(rec.row())


def csv_text(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()
