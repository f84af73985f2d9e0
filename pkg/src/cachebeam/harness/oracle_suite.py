"""Tiny-instance comparison of LGSBF and CB against exhaustive enumeration."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from ..lgsbf.algorithms import run_all
from ..lgsbf.oracle import oracle
from ..netgen import build_scenario
from .config import ConfigError, scenario_config
from .sweep import trial_seed

REPORT_COLUMNS = ("trial_id", "n_bs", "n_users", "n_groups", "oracle_status", "lgsbf_status",
                  "cb_status", "oracle_p_W", "lgsbf_p_W", "cb_p_W", "lgsbf_gap", "cb_gap")


@dataclass
class OracleSuiteConfig:
    """Tiny instances cycle through the (n_bs, n_users) combinations."""
    trials: int = 50
    n_bs: List[int] = field(default_factory=lambda: [2, 3])
    n_users: List[int] = field(default_factory=lambda: [2, 3, 4])
    scenario: dict = field(default_factory=lambda: {"n_files": 2, "cache_size": 0})
    base_seed: int = 0
    n_random: int = 3
    output: str = "oracle.csv"

    def __post_init__(self):
        problems = []
        if not isinstance(self.trials, int) or self.trials < 1:
            problems.append("trials: must be an integer >= 1")
        if not self.n_bs or any(not 1 <= b <= 4 for b in self.n_bs):
            problems.append("n_bs: values must lie in 1..4")
        if not self.n_users or any(u < 1 for u in self.n_users):
            problems.append("n_users: values must be positive")
        bad = sorted({"n_bs", "n_users"} & set(self.scenario))
        if bad:
            problems.append(f"scenario: {', '.join(bad)} are set through the top-level lists")
        try:
            scenario_config(self.scenario)
        except ConfigError as err:
            problems.append(f"scenario: {err}")
        if problems:
            raise ConfigError("; ".join(problems))

    def combo(self, trial: int):
        combos = [(b, u) for b in self.n_bs for u in self.n_users]
        return combos[trial % len(combos)]

    @classmethod
    def from_dict(cls, d: dict) -> "OracleSuiteConfig":
        allowed = {f.name for f in fields(cls)}
        bad = sorted(set(d) - allowed)
        if bad:
            raise ConfigError(f"unknown oracle configuration keys: {', '.join(bad)}")
        return cls(**d)


@dataclass
class OracleRecord:
    trial_id: int
    n_bs: int
    n_users: int
    n_groups: int
    oracle_status: str
    lgsbf_status: str
    cb_status: str
    oracle_p: float = math.nan
    lgsbf_p: float = math.nan
    cb_p: float = math.nan

    @staticmethod
    def _gap(p, ref):
        return (p - ref) / ref if np.isfinite(p) and np.isfinite(ref) else math.nan

    @property
    def lgsbf_gap(self) -> float:
        return self._gap(self.lgsbf_p, self.oracle_p)

    @property
    def cb_gap(self) -> float:
        return self._gap(self.cb_p, self.oracle_p)

    @property
    def consistent(self) -> bool:
        """Feasibility verdicts agree (a missed feasible instance counts as disagreement)."""
        return len({self.oracle_status, self.lgsbf_status, self.cb_status}) == 1

    def row(self) -> dict:
        fmt = lambda v: "" if not np.isfinite(v) else repr(float(v))
        return {"trial_id": self.trial_id, "n_bs": self.n_bs, "n_users": self.n_users,
                "n_groups": self.n_groups, "oracle_status": self.oracle_status,
                "lgsbf_status": self.lgsbf_status, "cb_status": self.cb_status,
                "oracle_p_W": fmt(self.oracle_p), "lgsbf_p_W": fmt(self.lgsbf_p),
                "cb_p_W": fmt(self.cb_p), "lgsbf_gap": fmt(self.lgsbf_gap),
                "cb_gap": fmt(self.cb_gap)}


def run_oracle_trial(cfg: OracleSuiteConfig, trial: int) -> OracleRecord:
    n_bs, n_users = cfg.combo(trial)
    over = dict(cfg.scenario, n_bs=n_bs, n_users=n_users)
    sc = build_scenario(scenario_config(over), trial_seed(cfg.base_seed, ("oracle",), trial))
    orc = oracle(sc, n_random=cfg.n_random, seed=trial)
    res = run_all(sc, ("lgsbf", "cb"))
    rec = OracleRecord(trial, n_bs, n_users, sc.n_groups, orc.status,
                       res["lgsbf"].status, res["cb"].status)
    if orc.status == "solved":
        rec.oracle_p = orc.p
    for name in ("lgsbf", "cb"):
        if res[name].solved:
            setattr(rec, f"{name}_p", res[name].breakdown.p)
    return rec


def run_oracle_suite(cfg: OracleSuiteConfig, progress=None) -> List[OracleRecord]:
    records = []
    for trial in range(cfg.trials):
        rec = run_oracle_trial(cfg, trial)
        records.append(rec)
        if progress:
            progress(rec)
    return records


def suite_summary(records: List[OracleRecord]) -> dict:
    """Gap quantiles over trials where the oracle and both algorithms solved."""
    both = [r for r in records if np.isfinite(r.lgsbf_gap) and np.isfinite(r.cb_gap)]
    lg = np.array([r.lgsbf_gap for r in both])
    cb = np.array([r.cb_gap for r in both])
    abs_dev = np.array([r.lgsbf_p - r.oracle_p for r in both])

    def quant(x):
        if x.size == 0:
            return {}
        return {q: float(np.quantile(x, v)) for q, v in
                (("min", 0.0), ("median", 0.5), ("q90", 0.9), ("max", 1.0))}
    return {"trials": len(records), "compared": len(both),
            "consistent_verdicts": sum(r.consistent for r in records),
            "lgsbf_gap": quant(lg), "cb_gap": quant(cb),
            "lgsbf_min_abs_diff_W": float(abs_dev.min()) if abs_dev.size else None}


def write_report(records: List[OracleRecord], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.row())


def load_oracle_config(path) -> OracleSuiteConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        data = json.loads(text) if text.strip() else {}
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot load oracle config {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError("oracle configuration must be a JSON object")
    return OracleSuiteConfig.from_dict(data)
