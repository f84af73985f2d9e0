"""Stage II: two-layer support search, and Stage III: final beamforming.

The search walks BSs in ascending priority order (outer loop) and, for
every feasible set of sleeping BSs, removes (BS, group) blocks in
ascending priority order until the fixed-support feasibility program
fails (inner loop).  Every visited support pattern is recorded; the
pattern with the smallest network power wins.

Network power of a pattern requires a transmit power minimization on that
support.  Since that minimization can only add a nonnegative transmit
term to the support cost (relative power of awake BSs plus backhaul
traffic of uncached blocks), patterns are evaluated lazily in order of
support cost, and evaluation stops once the cheapest unevaluated support
cost exceeds the best power found.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np

from ..conic.cccp import CccpError, CccpResult, cccp_solve
from ..netgen import Scenario
from ..powermodel import LayeredBeamformer, network_power, sinr_per_user
from .model import (FEAS_MARGIN, SupportSpace, mask_from_sets,
                    phase1_program, power_min_program, structurally_infeasible)
from .stage1 import SolverSettings, guarded_backhaul_weights

SEARCH_MODES = ("both", "bs", "da")
HARD_TOL = 1e-7     # slack on power and backhaul rows left by the interior-point solver


# --------------------------------------------------------------------------
# priorities


def bs_priorities(v: LayeredBeamformer, scenario: Scenario) -> np.ndarray:
    """Per-BS priority; the smallest value is switched off first."""
    pp = scenario.power
    kappa = np.sum(np.abs(scenario.H) ** 2, axis=(0, 2))
    traffic = np.sum(scenario.beta * scenario.uncached, axis=1)
    return np.sqrt(kappa / (pp.delta * (pp.relative_power + traffic))) * v.bs_norms()


def da_priorities(v: LayeredBeamformer, scenario: Scenario, z_bs=()) -> np.ndarray:
    """Per-block priority (N_B, N_G); blocks of sleeping BSs get zero."""
    pp = scenario.power
    gain = np.sum(np.abs(scenario.H) ** 2, axis=2)                   # (N_U, N_B)
    kappa = np.zeros((scenario.n_bs, scenario.n_groups))
    for m, users in enumerate(scenario.grouping.members):
        kappa[:, m] = gain[list(users), :].sum(axis=0)
    denom = pp.delta[:, None] * (pp.relative_power[:, None] + scenario.beta * scenario.uncached)
    theta = np.sqrt(kappa / denom) * v.block_norms()
    theta[list(z_bs), :] = 0.0
    return theta


def ascending(values) -> np.ndarray:
    """Stable ascending order (ties keep the lower index first)."""
    return np.argsort(np.asarray(values).ravel(), kind="stable")


# --------------------------------------------------------------------------
# fixed-support programs


@dataclass
class FeasResult:
    feasible: bool
    v: Optional[LayeredBeamformer]
    method: str                 # start, phase1, screen, structural
    solved: bool                # a DC feasibility program was set up
    p: float = np.nan
    cccp: Optional[CccpResult] = None


def support_cost(scenario: Scenario, mask: np.ndarray) -> float:
    """Relative power of BSs with allowed blocks plus traffic of allowed uncached blocks."""
    awake = mask.any(axis=1)
    return float(scenario.power.relative_power[awake].sum()
                 + np.sum(scenario.beta * scenario.uncached * mask))


def _reseed_groups(space: SupportSpace, x: np.ndarray) -> np.ndarray:
    """Give groups without signal a matched-filter direction within the power caps."""
    sc = space.scenario
    bp = space.block_power(x)
    gp = np.bincount(space.block_group, weights=bp, minlength=sc.n_groups)
    weak = np.flatnonzero(gp <= 1e-14)
    if weak.size == 0:
        return x
    x = x.copy()
    hbar = sc.normalized_channels()
    bsp = space.bs_power(x)
    spare = np.maximum(sc.power.P_tx - bsp, 0.0)
    n_new = np.zeros(sc.n_bs)
    for b in range(space.n_blocks):
        if space.block_group[b] in weak:
            n_new[space.block_bs[b]] += 1
    for b in range(space.n_blocks):
        m, j = space.block_group[b], space.block_bs[b]
        if m not in weak:
            continue
        users = list(sc.grouping.members[m])
        d = hbar[users, j, :].sum(axis=0)
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        amp = np.sqrt(0.5 * spare[j] / n_new[j])
        vec = amp * d / nd
        sl = slice(b * space.L, (b + 1) * space.L)
        x[sl] = vec.real
        x[space.nc:][sl] = vec.imag
    return x


def _strictly_feasible(space: SupportSpace, x, bh_weights) -> bool:
    if np.max(space.qos_values(x), initial=-np.inf) >= -FEAS_MARGIN:
        return False
    if np.any(space.bs_power(x) > space.scenario.power.P_tx * (1.0 + HARD_TOL)):
        return False
    if np.any(space.backhaul_surrogate_values(x, bh_weights) > HARD_TOL):
        return False
    return True


def check_support_feasibility(scenario: Scenario, mask: np.ndarray,
                              start: Optional[LayeredBeamformer],
                              settings: SolverSettings = SolverSettings()) -> FeasResult:
    """Decide whether the QoS constraints can be met on ``mask``.

    Uses the projected start when it already is strictly feasible;
    otherwise runs a phase-I CCCP that minimizes the largest scaled QoS
    violation with power and backhaul constraints kept hard.
    """
    if structurally_infeasible(scenario, mask):
        return FeasResult(False, None, "structural", False)
    space = SupportSpace(scenario, mask)
    if space.signal_bound_violated():
        return FeasResult(False, None, "screen", True)
    tau = settings.tau
    if start is None:
        start = LayeredBeamformer.zeros(scenario)
    x = _reseed_groups(space, space.to_x(start))
    bh = space.block_weights(x, tau)
    if _strictly_feasible(space, x, bh):
        return FeasResult(True, space.from_x(x), "start", True)
    y0 = np.concatenate([x, [float(np.max(space.qos_values(x))) + 1.0]])
    state = {"bh": bh}

    def reweight(y, _prog):
        state["bh"] = guarded_backhaul_weights(space, y[:space.n], state["bh"], tau)
        return phase1_program(space, state["bh"])

    def done(y):
        return float(np.max(space.qos_values(y[:space.n]))) < -FEAS_MARGIN

    try:
        res = cccp_solve(phase1_program(space, bh), y0, rel_obj_tol=settings.rel_obj_tol,
                         max_outer=settings.max_outer, reweight=reweight,
                         qcqp_tol=settings.qcqp_tol, stop_when=done, abs_obj_tol=1e-6)
        y = res.x
    except CccpError as err:
        # numerical trouble: judge the last accepted iterate
        res, y = None, err.iterate
    if _strictly_feasible(space, y[:space.n], state["bh"]):
        return FeasResult(True, space.from_x(y[:space.n]), "phase1", True, cccp=res)
    return FeasResult(False, None, "phase1", True, cccp=res)


def minimize_power_on_support(scenario: Scenario, mask: np.ndarray, start: LayeredBeamformer,
                              settings: SolverSettings = SolverSettings()):
    """Transmit power minimization on a fixed support by CCCP from a feasible start."""
    space = SupportSpace(scenario, mask)
    tau = settings.tau
    x0 = space.to_x(start)
    state = {"bh": space.block_weights(x0, tau)}

    def reweight(x, _prog):
        state["bh"] = guarded_backhaul_weights(space, x, state["bh"], tau)
        return power_min_program(space, state["bh"])

    try:
        res = cccp_solve(power_min_program(space, state["bh"]), x0,
                         rel_obj_tol=settings.rel_obj_tol, max_outer=settings.max_outer,
                         reweight=reweight, qcqp_tol=settings.qcqp_tol)
        x = res.x
    except CccpError as err:
        res, x = None, err.iterate
    return restore_feasibility(space.from_x(x), scenario), res


def restore_feasibility(v: LayeredBeamformer, scenario: Scenario, max_drift: float = 1e-8):
    """Scale all blocks up uniformly when SINRs fall short by a hair."""
    ug = scenario.user_group
    if ug.size == 0:
        return v
    sinr = sinr_per_user(v, scenario.H, ug, scenario.noise_power)
    gam = scenario.grouping.target_sinr[ug]
    short = np.min(sinr / gam)
    if short >= 1.0 or short < 1.0 - max_drift:
        return v
    return v.scaled(np.sqrt(1.0 + 2.0 * (1.0 - short) + 1e-12))


def feas_f1(scenario: Scenario, z_bs, start=None, settings: SolverSettings = SolverSettings()) -> FeasResult:
    """Feasibility with the BSs in ``z_bs`` asleep."""
    return check_support_feasibility(scenario, mask_from_sets(scenario, z_bs), start, settings)


def feas_f2(scenario: Scenario, z_bs, z_da, start=None, settings: SolverSettings = SolverSettings(),
            evaluate: bool = True) -> FeasResult:
    """Feasibility with sleeping BSs and removed blocks; when feasible and
    ``evaluate`` is set, also the network power after transmit power
    minimization on that support."""
    mask = mask_from_sets(scenario, z_bs, z_da)
    res = check_support_feasibility(scenario, mask, start, settings)
    if res.feasible and evaluate:
        v, cc = minimize_power_on_support(scenario, mask, res.v, settings)
        res.v, res.cccp = v, cc
        res.p = network_power(v, scenario).p
    return res


# --------------------------------------------------------------------------
# search


@dataclass
class TraceEntry:
    i: int                      # BS removal depth
    k: int                      # block removal depth
    feasible: bool
    p: float                    # network power after power minimization (nan if not evaluated)
    support_cost: float
    z_bs: Tuple[int, ...]
    z_da: Tuple[Tuple[int, int], ...]
    method: str
    valid: bool = True          # cleared when the final exact check rejects the entry

    def to_dict(self):
        return {"i": self.i, "k": self.k, "feasible": self.feasible,
                "p": None if np.isnan(self.p) else self.p, "support_cost": self.support_cost,
                "z_bs": list(self.z_bs), "z_da": [list(b) for b in self.z_da],
                "method": self.method, "valid": self.valid}


@dataclass
class SearchTrace:
    entries: List[TraceEntry] = field(default_factory=list)
    chosen: Optional[Tuple[Tuple[int, ...], Tuple[Tuple[int, int], ...]]] = None
    dc_solves: int = 0
    evaluations: int = 0
    bound: Optional[int] = None       # worst-case DC solves for the instance size

    def to_dict(self):
        return {"entries": [e.to_dict() for e in self.entries],
                "chosen": None if self.chosen is None else
                {"z_bs": list(self.chosen[0]), "z_da": [list(b) for b in self.chosen[1]]},
                "dc_solves": self.dc_solves, "evaluations": self.evaluations,
                "bound": self.bound}


def trace_bound(n_bs: int, n_groups: int) -> int:
    return n_groups * n_bs * (n_bs + 1) // 2


@dataclass
class Candidate:
    entry: TraceEntry
    mask: np.ndarray
    v: LayeredBeamformer        # power-minimized beamformer on the support


class SearchOutcome:
    """Visited patterns plus lazy, power-ordered access to them."""

    def __init__(self, scenario, trace, pending, settings):
        self.scenario = scenario
        self.trace = trace
        self._pending = pending          # list of (entry, mask, witness)
        self.settings = settings

    def ranked(self) -> Iterator[Candidate]:
        """Yield feasible patterns in ascending network power.

        Unevaluated patterns are keyed by their support cost (a lower
        bound on their power); a pattern is evaluated when it reaches the
        front of the queue and reinserted with its true power.
        """
        heap = []
        for idx, (entry, mask, _) in enumerate(self._pending):
            # ties: fewer awake BSs, then fewer blocks, then lexicographic sets
            tie = (int(mask.any(axis=1).sum()), int(mask.sum()),
                   tuple(sorted(entry.z_bs)), tuple(sorted(entry.z_da)), idx)
            heapq.heappush(heap, (entry.support_cost, 0, tie))
        evaluated = {}
        while heap:
            _, done, tie = heapq.heappop(heap)
            idx = tie[-1]
            entry, mask, wit = self._pending[idx]
            if not done:
                v, _ = minimize_power_on_support(self.scenario, mask, wit, self.settings)
                self.trace.evaluations += 1
                entry.p = network_power(v, self.scenario).p
                evaluated[idx] = v
                heapq.heappush(heap, (entry.p, 1, tie))
                continue
            yield Candidate(entry, mask, evaluated[idx])


def iterative_search(scenario: Scenario, v_hat: LayeredBeamformer, mode: str = "both",
                     settings: SolverSettings = SolverSettings()) -> SearchOutcome:
    """Visit support patterns in the two-layer order and record feasibility.

    mode "both" searches BSs and blocks, "bs" only the BS layer and "da"
    only the block layer with every BS kept awake.
    """
    if mode not in SEARCH_MODES:
        raise ValueError(f"unknown search mode {mode!r}")
    n_b, n_g = scenario.n_bs, scenario.n_groups
    trace = SearchTrace(bound=trace_bound(n_b, n_g))
    pending = []
    bs_order = ascending(bs_priorities(v_hat, scenario))
    max_i = 0 if mode == "da" else n_b - 1
    z_bs: Tuple[int, ...] = ()
    outer_start = v_hat
    for i in range(0, max_i + 1):
        if i > 0:
            z_bs = z_bs + (int(bs_order[i - 1]),)
        mask = mask_from_sets(scenario, z_bs)
        res = check_support_feasibility(scenario, mask, outer_start, settings)
        if res.solved:
            trace.dc_solves += 1
        if res.method == "structural":
            break
        entry = TraceEntry(i, 0, res.feasible, np.nan, support_cost(scenario, mask),
                           z_bs, (), res.method)
        trace.entries.append(entry)
        if not res.feasible:
            break
        pending.append((entry, mask, res.v))
        outer_start = res.v
        if mode == "bs":
            continue
        theta = da_priorities(v_hat, scenario, z_bs)
        order = [int(b) for b in ascending(theta) if int(b) // n_g not in z_bs]
        z_da: Tuple[Tuple[int, int], ...] = ()
        inner_start = res.v
        for k, b in enumerate(order, start=1):
            cand = z_da + ((b // n_g, b % n_g),)
            mask_k = mask_from_sets(scenario, z_bs, cand)
            res_k = check_support_feasibility(scenario, mask_k, inner_start, settings)
            if res_k.solved:
                trace.dc_solves += 1
            if res_k.method == "structural":
                break
            entry_k = TraceEntry(i, k, res_k.feasible, np.nan, support_cost(scenario, mask_k),
                                 z_bs, cand, res_k.method)
            trace.entries.append(entry_k)
            if not res_k.feasible:
                break
            pending.append((entry_k, mask_k, res_k.v))
            z_da = cand
            inner_start = res_k.v
    return SearchOutcome(scenario, trace, pending, settings)


def stage3_final(scenario: Scenario, z_bs, z_da, start: LayeredBeamformer,
                 settings: SolverSettings = SolverSettings()):
    """Transmit power minimization with the chosen supports fixed."""
    mask = mask_from_sets(scenario, z_bs, z_da)
    return minimize_power_on_support(scenario, mask, start, settings)
