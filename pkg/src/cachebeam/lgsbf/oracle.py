"""Exhaustive support enumeration for tiny instances.

Every support pattern in which each group keeps at least one block is
tried.  Patterns whose exact backhaul load exceeds the capacity, or in
which some user cannot reach its SINR even without interference, are
skipped.  The rest are visited in increasing order of support cost
(awake-BS relative power plus uncached traffic), which lower-bounds the
network power of a beamformer using the full pattern, and enumeration
stops once that bound reaches the best power found.  On each pattern the
transmit power is minimized by CCCP from the restricted SDR start and a
few random starts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..conic.randomize import scale_directions
from ..netgen import Scenario
from ..powermodel import LayeredBeamformer, check_constraints, network_power
from .model import SupportSpace, exact_load, structurally_infeasible
from .search import minimize_power_on_support, support_cost
from .stage1 import SolverSettings, stage1_init

MAX_BS = 4
MAX_GROUPS = 3
MAX_BLOCKS = 8


@dataclass
class PatternResult:
    mask: np.ndarray
    support_cost: float
    status: str                  # solved, infeasible, skipped-capacity, skipped-screen, pruned
    p: float = np.nan

    def to_dict(self):
        return {"mask": self.mask.astype(int).tolist(), "support_cost": self.support_cost,
                "status": self.status, "p": None if np.isnan(self.p) else self.p}


@dataclass
class OracleResult:
    status: str                  # solved, infeasible
    p: float
    mask: Optional[np.ndarray]
    beamformer: Optional[LayeredBeamformer]
    patterns: List[PatternResult] = field(default_factory=list)

    @property
    def z_bs(self):
        if self.mask is None:
            return None
        return tuple(int(j) for j in np.flatnonzero(~self.mask.any(axis=1)))

    @property
    def z_da(self):
        if self.mask is None:
            return None
        return tuple((int(j), int(m)) for j, m in zip(*np.nonzero(~self.mask)))


def check_caps(scenario: Scenario, max_bs: int = MAX_BS, max_groups: int = MAX_GROUPS,
               max_blocks: int = MAX_BLOCKS):
    nb, ng = scenario.n_bs, scenario.n_groups
    if nb > max_bs or ng > max_groups or nb * ng > max_blocks:
        raise ValueError(f"instance too large for enumeration: N_B={nb}, N_G={ng} "
                         f"(caps {max_bs}, {max_groups}, {max_blocks} blocks)")


def all_masks(n_bs: int, n_groups: int):
    """Every (n_bs, n_groups) boolean mask, in a fixed order."""
    for bits in itertools.product((True, False), repeat=n_bs * n_groups):
        yield np.array(bits, dtype=bool).reshape(n_bs, n_groups)


def _random_start(space: SupportSpace, rng) -> Optional[LayeredBeamformer]:
    mc = space.multicast_constraints()
    N = mc.h.shape[1]
    U = np.zeros((mc.n_groups, N), dtype=complex)
    for m, idx in enumerate(mc.coords):
        U[m, idx] = rng.standard_normal(idx.size) + 1j * rng.standard_normal(idx.size)
    V, _ = scale_directions(U, mc)
    return None if V is None else space.from_group_vectors(V)


def solve_pattern(scenario: Scenario, mask: np.ndarray, n_random: int = 3, rng=None,
                  settings: SolverSettings = SolverSettings()):
    """Best (p, v) over CCCP runs from the SDR start and random starts, or (nan, None)."""
    rng = np.random.default_rng(rng)
    space = SupportSpace(scenario, mask)
    starts = []
    init = stage1_init(scenario, settings, mask=mask, rng=rng)
    if init.status == "ok":
        starts.append(init.v)
    for _ in range(n_random):
        v0 = _random_start(space, rng)
        if v0 is not None:
            starts.append(v0)
    best_p, best_v = np.nan, None
    for v0 in starts:
        v, _ = minimize_power_on_support(scenario, mask, v0, settings)
        if not check_constraints(v, scenario).all_ok:
            continue
        p = network_power(v, scenario).p
        if best_v is None or p < best_p:
            best_p, best_v = p, v
    return best_p, best_v


def oracle(scenario: Scenario, n_random: int = 3, seed: int = 0,
           settings: SolverSettings = SolverSettings(), max_bs: int = MAX_BS,
           max_groups: int = MAX_GROUPS) -> OracleResult:
    """Minimal network power over all support patterns of a tiny instance."""
    check_caps(scenario, max_bs, max_groups)
    records = []
    pending = []
    cap = scenario.power.C_bh
    for mask in all_masks(scenario.n_bs, scenario.n_groups):
        if structurally_infeasible(scenario, mask) or not mask.any():
            continue
        cost = support_cost(scenario, mask)
        if np.any(exact_load(scenario, mask) > cap):
            records.append(PatternResult(mask, cost, "skipped-capacity"))
            continue
        if SupportSpace(scenario, mask).signal_bound_violated():
            records.append(PatternResult(mask, cost, "skipped-screen"))
            continue
        pending.append((cost, -int(mask.sum()), len(records), mask))
        records.append(PatternResult(mask, cost, "pending"))
    # cheapest support first; ties: larger support first since it can only help
    pending.sort(key=lambda t: (t[0], t[1], t[2]))
    rng = np.random.default_rng(seed)
    best = (np.inf, None, None)
    for cost, _, idx, mask in pending:
        rec = records[idx]
        if cost >= best[0]:
            rec.status = "pruned"
            continue
        p, v = solve_pattern(scenario, mask, n_random, rng, settings)
        if v is None:
            rec.status = "infeasible"
            continue
        rec.status, rec.p = "solved", p
        if p < best[0]:
            best = (p, mask, v)
    if best[2] is None:
        return OracleResult("infeasible", np.nan, None, None, records)
    return OracleResult("solved", best[0], best[1], best[2], records)
