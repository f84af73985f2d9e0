"""Stage I: SDR initialization and reweighted group-sparsity minimization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..conic.cccp import CccpResult, DcProgram, cccp_solve
from ..conic.randomize import MulticastConstraints, randomize_and_scale
from ..conic.sdp import SdpProblem, solve_sdp
from ..netgen import Scenario
from ..powermodel import LayeredBeamformer
from .model import (DEFAULT_TAU, SupportSpace, full_mask, generalized_program,
                    structurally_infeasible)


@dataclass
class SolverSettings:
    tau: float = DEFAULT_TAU          # reweighting smoothing [W]
    n_rand: int = 50                  # Gaussian candidates in SDR extraction
    rel_obj_tol: float = 1e-4         # CCCP stopping rule
    max_outer: int = 30
    qcqp_tol: float = 1e-8
    sdp_tol: float = 1e-6
    seed: int = 0                     # randomization stream


@dataclass
class InitResult:
    status: str                       # ok, infeasible, infeasible-extraction
    v: Optional[LayeredBeamformer]
    sdp_status: str = ""
    sdp_objective: float = np.nan
    info: dict = field(default_factory=dict)


def sdr_problem(mc: MulticastConstraints) -> SdpProblem:
    """Semidefinite relaxation: minimize sum_m Tr(W_m) under SINR, per-BS power
    and (optional) backhaul surrogate constraints, with W_m on group m's
    allowed antennas."""
    n_u = mc.h.shape[0]
    n_g = mc.n_groups
    bs_rows = [j for j in range(mc.n_bs)
               if any(np.any(mc.antenna_bs[c] == j) for c in mc.coords)]
    bh_rows = []
    if mc.bh_coef is not None:
        bh_rows = [j for j in range(mc.n_bs) if np.any(mc.bh_coef[j] > 0)]
    m_tot = n_u + len(bs_rows) + len(bh_rows)
    A, C = [], []
    for g in range(n_g):
        idx = mc.coords[g]
        hg = mc.h[:, idx]                                         # (N_U, n_g)
        Hk = hg[:, :, None] * hg.conj()[:, None, :]               # h_k h_k^H on group coords
        Ag = np.zeros((m_tot, idx.size, idx.size), dtype=complex)
        own = mc.user_group == g
        gam = mc.gamma[mc.user_group]
        # sinr row (>= 1): Tr(W_m H_k)/gamma - sum_{i != m} Tr(W_i H_k)
        Ag[:n_u] = np.where(own[:, None, None], Hk / gam[:, None, None], -Hk)
        sel = mc.antenna_bs[idx]
        for row, j in enumerate(bs_rows):
            Ag[n_u + row] = np.diag((sel == j).astype(float))
        for row, j in enumerate(bh_rows):
            Ag[n_u + len(bs_rows) + row] = mc.bh_coef[j, g] * np.diag((sel == j).astype(float))
        A.append(Ag)
        C.append(np.eye(idx.size))
    senses = [">="] * n_u + ["<="] * (len(bs_rows) + len(bh_rows))
    b = np.concatenate([np.ones(n_u), mc.p_max[bs_rows], np.ones(len(bh_rows))])
    return SdpProblem([c.size for c in mc.coords], C, A, senses, b)


def stage1_init(scenario: Scenario, settings: SolverSettings = SolverSettings(),
                mask: Optional[np.ndarray] = None, rng=None) -> InitResult:
    """Feasible starting beamformer from the SDR and randomization."""
    mask = full_mask(scenario) if mask is None else np.asarray(mask, dtype=bool)
    if structurally_infeasible(scenario, mask):
        return InitResult("infeasible", None, "structural")
    space = SupportSpace(scenario, mask)
    mc = space.multicast_constraints()
    sol = solve_sdp(sdr_problem(mc), tol=settings.sdp_tol)
    if sol.status != "optimal":
        # an SDP stopped short is treated as infeasible only with a certificate
        status = "infeasible" if sol.status in ("infeasible", "max_iter", "numerical_error") else sol.status
        return InitResult(status, None, sol.status, sol.primal_objective)
    rng = np.random.default_rng(settings.seed if rng is None else rng)
    V, info = randomize_and_scale(sol.W, mc, n_rand=settings.n_rand, rng=rng)
    if V is None:
        return InitResult("infeasible-extraction", None, sol.status, sol.primal_objective, info)
    return InitResult("ok", space.from_group_vectors(V), sol.status, sol.primal_objective, info)


def bs_weights_from(space: SupportSpace, x, tau: float) -> np.ndarray:
    return 1.0 / (space.bs_power(x) + tau)


def build_generalized_problem(scenario: Scenario, lam_bs: float, lam_da: float,
                              v_ref: Optional[LayeredBeamformer] = None,
                              tau: float = DEFAULT_TAU, mask=None) -> DcProgram:
    """Generalized two-layer sparse beamforming program.

    Weights are taken from ``v_ref`` (unit weights when omitted).
    ``lam_bs = lam_da = 1`` is the layered model, ``(1, 0)`` BS selection
    only, ``(0, 1)`` backhaul data assignment only and ``(0, 0)`` transmit
    power minimization.
    """
    if lam_bs < 0 or lam_da < 0:
        raise ValueError("lambda multipliers must be nonnegative")
    mask = full_mask(scenario) if mask is None else mask
    space = SupportSpace(scenario, mask)
    if v_ref is None:
        bw = np.ones(scenario.n_bs)
        kw = np.ones(space.n_blocks)
        hw = None
    else:
        x = space.to_x(v_ref)
        bw = bs_weights_from(space, x, tau)
        kw = space.block_weights(x, tau)
        hw = kw
    return generalized_program(space, lam_bs, lam_da, bw, kw, hw, tau)


def guarded_backhaul_weights(space: SupportSpace, x, old_weights, tau):
    """Refresh backhaul surrogate weights at x, keeping the previous weights of
    any BS whose refreshed constraint would cut off the current iterate."""
    new = space.block_weights(x, tau)
    if old_weights is None or space.backhaul_bs().size == 0:
        return new
    vals = space.backhaul_surrogate_values(x, new)
    out = new.copy()
    for j, val in zip(space.backhaul_bs(), vals):
        if val > 0:
            sel = space.block_bs == j
            out[sel] = old_weights[sel]
    return out


@dataclass
class Stage1Result:
    v_hat: LayeredBeamformer
    cccp: CccpResult
    space: SupportSpace


def stage1_sparsify(scenario: Scenario, v0: LayeredBeamformer, lam_bs: float = 1.0,
                    lam_da: float = 1.0, settings: SolverSettings = SolverSettings(),
                    keep_iterates: bool = False) -> Stage1Result:
    """Reweighted CCCP on the generalized program starting from a feasible v0."""
    space = SupportSpace(scenario, full_mask(scenario))
    tau = settings.tau
    x0 = space.to_x(v0)
    state = {"bh": space.block_weights(x0, tau)}

    def program_at(x):
        return generalized_program(space, lam_bs, lam_da, bs_weights_from(space, x, tau),
                                   space.block_weights(x, tau), state["bh"], tau)

    def reweight(x, _prog):
        state["bh"] = guarded_backhaul_weights(space, x, state["bh"], tau)
        return program_at(x)

    res = cccp_solve(program_at(x0), x0, rel_obj_tol=settings.rel_obj_tol,
                     max_outer=settings.max_outer, reweight=reweight,
                     qcqp_tol=settings.qcqp_tol, keep_iterates=keep_iterates)
    return Stage1Result(space.from_x(res.x), res, space)
