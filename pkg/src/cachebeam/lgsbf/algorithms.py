"""End-to-end pipelines for LGSBF and the benchmark schemes."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..netgen import Scenario
from ..powermodel import (LayeredBeamformer, PowerBreakdown, check_constraints,
                          network_power, support_sets)
from .search import SearchTrace, iterative_search, stage3_final
from .stage1 import SolverSettings, stage1_init, stage1_sparsify

ALGORITHMS = ("lgsbf", "cb", "bs_only", "da_only")

# (lambda_bs, lambda_da, search mode) of the sparsity-driven schemes
_SCHEMES = {
    "lgsbf": (1.0, 1.0, "both"),
    "bs_only": (1.0, 0.0, "bs"),
    "da_only": (0.0, 1.0, "da"),
}


@dataclass
class AlgoResult:
    algorithm: str
    status: str                                   # solved, infeasible
    beamformer: Optional[LayeredBeamformer] = None
    breakdown: Optional[PowerBreakdown] = None
    trace: Optional[SearchTrace] = None
    timing_ms: dict = field(default_factory=lambda: {"stage1": 0.0, "stage2": 0.0, "stage3": 0.0})
    info: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    def supports(self):
        """(sleeping BSs, removed blocks) of the returned beamformer."""
        if self.beamformer is None:
            return None
        return support_sets(self.beamformer)

    def to_dict(self) -> dict:
        out = {"algorithm": self.algorithm, "status": self.status,
               "timing_ms": dict(self.timing_ms), "info": self.info}
        if self.beamformer is not None:
            blocks = self.beamformer.blocks
            z_bs, z_da = self.supports()
            out["supports"] = {"z_bs": [int(j) for j in z_bs],
                               "z_da": [[int(j), int(m)] for j, m in z_da]}
            out["beamformer"] = {"shape": list(blocks.shape),
                                 "re_im": np.stack([blocks.real, blocks.imag], -1).ravel().tolist()}
        if self.breakdown is not None:
            out["breakdown"] = self.breakdown.to_dict()
        if self.trace is not None:
            out["trace"] = self.trace.to_dict()
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def csv_row(self, trial_id, scenario: Scenario, cache_size: int) -> dict:
        """Row in the power-model CSV schema (NaN powers when infeasible)."""
        bd = self.breakdown or PowerBreakdown(*([np.nan] * 6))
        gamma_db = float(10 * np.log10(scenario.grouping.target_sinr.max())) \
            if scenario.n_groups else np.nan
        return bd.csv_row(trial_id, self.algorithm, gamma_db, cache_size,
                          sum(self.timing_ms.values()))


class _Clock:
    def __init__(self):
        self.t = time.perf_counter()

    def lap(self) -> float:
        now = time.perf_counter()
        ms, self.t = 1e3 * (now - self.t), now
        return ms


def _finish(algo, scenario, v, timing, trace=None, info=None) -> AlgoResult:
    report = check_constraints(v, scenario)
    info = dict(info or {})
    if not report.all_ok:
        info["constraint_margins"] = report.margins
        return AlgoResult(algo, "infeasible", None, None, trace, timing, info)
    return AlgoResult(algo, "solved", v, network_power(v, scenario), trace, timing, info)


def run_algorithm(scenario: Scenario, algo: str, settings: SolverSettings = SolverSettings(),
                  init=None) -> AlgoResult:
    """Run one scheme on one scenario.

    ``init`` may carry a precomputed :func:`stage1_init` result so several
    schemes on the same scenario share the SDR starting point.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    timing = {"stage1": 0.0, "stage2": 0.0, "stage3": 0.0}
    clock = _Clock()
    if init is None:
        init = stage1_init(scenario, settings)
    if init.status != "ok":
        timing["stage1"] = clock.lap()
        return AlgoResult(algo, "infeasible", timing_ms=timing,
                          info={"init_status": init.status, "sdp_status": init.sdp_status})

    if algo == "cb":
        timing["stage1"] = clock.lap()
        v, _ = stage3_final(scenario, (), (), init.v, settings)
        timing["stage3"] = clock.lap()
        return _finish(algo, scenario, v, timing)

    lam_bs, lam_da, mode = _SCHEMES[algo]
    s1 = stage1_sparsify(scenario, init.v, lam_bs, lam_da, settings)
    timing["stage1"] = clock.lap()
    outcome = iterative_search(scenario, s1.v_hat, mode, settings)
    trace = outcome.trace
    info = {"stage1_iterations": s1.cccp.iterations, "stage1_status": s1.cccp.status}
    stage3_ms = 0.0
    rejected = 0
    candidates = outcome.ranked()
    while True:
        cand = next(candidates, None)
        if cand is None:
            break
        t0 = time.perf_counter()
        v, _ = stage3_final(scenario, cand.entry.z_bs, cand.entry.z_da, cand.v, settings)
        stage3_ms += 1e3 * (time.perf_counter() - t0)
        if check_constraints(v, scenario).all_ok:
            trace.chosen = (cand.entry.z_bs, cand.entry.z_da)
            break
        # exact capacity or QoS check failed after the final solve
        cand.entry.valid = False
        rejected += 1
    timing["stage2"] = clock.lap() - stage3_ms
    timing["stage3"] = stage3_ms
    info["rejected_candidates"] = rejected
    if trace.chosen is None:
        return AlgoResult(algo, "infeasible", trace=trace, timing_ms=timing, info=info)
    return _finish(algo, scenario, v, timing, trace, info)


def run_all(scenario: Scenario, algos=ALGORITHMS, settings: SolverSettings = SolverSettings()):
    """Run several schemes on one scenario with a shared SDR starting point."""
    clock = _Clock()
    init = stage1_init(scenario, settings)
    init_ms = clock.lap()
    out = {}
    for algo in algos:
        res = run_algorithm(scenario, algo, settings, init=init)
        res.timing_ms["stage1"] += init_ms
        out[algo] = res
    return out
