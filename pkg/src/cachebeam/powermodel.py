"""SINR, backhaul load, and network power evaluation for layered beamformers.

A beamformer is stored as a complex array ``blocks[j, m, :]`` holding the
length-L vector that BS j uses for multicast group m.  Two layers of
support are read off it: the BS layer (a BS is awake when any of its
blocks is nonzero) and the data-assignment layer (block (j, m) nonzero
means BS j delivers group m's content, which costs backhaul traffic when
the file is not cached at j).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netgen import PowerParams, Scenario
from .units import lin_to_db, shannon_rate

TOL_QOS = 1e-6
TOL_POWER = 1e-6


@dataclass(frozen=True)
class LayeredBeamformer:
    blocks: np.ndarray          # (N_B, N_G, L) complex
    eps_support: float = 1e-4

    def __post_init__(self):
        if self.blocks.ndim != 3:
            raise ValueError("blocks must have shape (N_B, N_G, L)")
        if not np.all(np.isfinite(self.blocks)):
            raise ValueError("beamformer entries must be finite")

    @classmethod
    def zeros(cls, scenario: Scenario) -> "LayeredBeamformer":
        shape = (scenario.n_bs, scenario.n_groups, scenario.antennas)
        return cls(np.zeros(shape, dtype=complex), scenario.eps_support)

    @property
    def n_bs(self) -> int:
        return self.blocks.shape[0]

    @property
    def n_groups(self) -> int:
        return self.blocks.shape[1]

    def block_norms(self) -> np.ndarray:
        """(N_B, N_G) Euclidean norms of the blocks."""
        return np.linalg.norm(self.blocks, axis=2)

    def bs_norms(self) -> np.ndarray:
        return np.linalg.norm(self.blocks.reshape(self.n_bs, -1), axis=1)

    def bs_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.blocks) ** 2, axis=(1, 2))

    def group_vectors(self) -> np.ndarray:
        """(N_G, N_B*L) cross-BS stacked vector of each group."""
        return np.transpose(self.blocks, (1, 0, 2)).reshape(self.n_groups, -1)

    def active_mask(self):
        """(active BS mask, active block mask) under the support threshold."""
        blk = self.block_norms() > self.eps_support
        bs = self.bs_norms() > self.eps_support
        # a block counts only if its BS is awake; a BS above threshold with all
        # blocks below threshold keeps no block
        return bs, blk & bs[:, None]

    def scaled(self, c: float) -> "LayeredBeamformer":
        return LayeredBeamformer(self.blocks * c, self.eps_support)


@dataclass(frozen=True)
class PowerBreakdown:
    transmit: float
    backhaul_traffic: float
    relative: float
    static_sleep: float
    p: float
    p_tilde: float
    n_active_bs: int = 0
    n_assignments: int = 0

    CSV_COLUMNS = ("trial_id", "algorithm", "gamma_dB", "cache_size", "p", "p_tilde",
                   "transmit_W", "backhaul_W", "relative_W", "n_active_bs",
                   "n_backhaul_assignments", "solve_ms")

    def csv_row(self, trial_id, algorithm: str, gamma_dB: float, cache_size: int,
                solve_ms: float) -> dict:
        return {"trial_id": trial_id, "algorithm": algorithm, "gamma_dB": gamma_dB,
                "cache_size": cache_size, "p": self.p, "p_tilde": self.p_tilde,
                "transmit_W": self.transmit, "backhaul_W": self.backhaul_traffic,
                "relative_W": self.relative, "n_active_bs": self.n_active_bs,
                "n_backhaul_assignments": self.n_assignments, "solve_ms": solve_ms}

    def to_dict(self) -> dict:
        return {"transmit": self.transmit, "backhaul_traffic": self.backhaul_traffic,
                "relative": self.relative, "static_sleep": self.static_sleep,
                "p": self.p, "p_tilde": self.p_tilde, "n_active_bs": self.n_active_bs,
                "n_assignments": self.n_assignments}


@dataclass(frozen=True)
class ConstraintReport:
    qos_ok: bool
    power_ok: bool
    backhaul_ok: bool
    margins: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return self.qos_ok and self.power_ok and self.backhaul_ok


def group_rate(sinr_lin, bandwidth: float):
    """Multicast rate B0*log2(1+gamma) [bit/s]."""
    sinr_lin = np.asarray(sinr_lin, dtype=float)
    if np.any(sinr_lin < 0):
        raise ValueError("SINR must be nonnegative")
    return shannon_rate(bandwidth, sinr_lin)


def received_gains(v: LayeredBeamformer, H: np.ndarray) -> np.ndarray:
    """|h_k^H v_m|^2 for every user k and group m, shape (N_U, N_G)."""
    hk = H.reshape(H.shape[0], -1)                  # (N_U, N_B*L)
    amp = hk.conj() @ v.group_vectors().T           # (N_U, N_G)
    return np.abs(amp) ** 2


def sinr_per_user(v: LayeredBeamformer, H: np.ndarray, user_group: np.ndarray,
                  noise_power) -> np.ndarray:
    """Treat-interference-as-noise SINR of every user toward its own group stream."""
    g = received_gains(v, H)
    n_u = H.shape[0]
    own = g[np.arange(n_u), user_group]
    interference = g.sum(axis=1) - own
    return own / (interference + np.asarray(noise_power, dtype=float))


def support_sets(v: LayeredBeamformer):
    """Active BS indices and active (BS, group) blocks."""
    bs, blk = v.active_mask()
    return ({int(j) for j in np.flatnonzero(bs)},
            {(int(j), int(m)) for j, m in zip(*np.nonzero(blk))})


def backhaul_assignment(v: LayeredBeamformer, uncached: np.ndarray) -> np.ndarray:
    """(N_B, N_G) binary: BS j must fetch group m's content over its backhaul."""
    _, blk = v.active_mask()
    return (blk & (np.asarray(uncached) > 0)).astype(int)


def backhaul_load(assignment: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Per-BS backhaul traffic [bit/s]."""
    return np.asarray(assignment, dtype=float) @ np.asarray(rates, dtype=float)


def bs_power(out_power: float, j: int, params: PowerParams, active: bool) -> float:
    """Linear BS power model: active base power plus PA slope times output power."""
    if active:
        return float(params.P_A_bs[j] + params.delta[j] * out_power)
    return float(params.P_S_bs[j])


def bs_power_of(v: LayeredBeamformer, j: int, params: PowerParams) -> float:
    active = v.bs_norms()[j] > v.eps_support
    return bs_power(float(v.bs_powers()[j]), j, params, active)


def backhaul_power(load: float, j: int, params: PowerParams) -> float:
    """Traffic-dependent backhaul power; a link without traffic sleeps."""
    if load > params.C_bh[j]:
        raise ValueError(f"backhaul load {load:.6g} bit/s exceeds capacity of BS {j}")
    if load > 0:
        return float(params.P_A_bh[j] + params.E_bh[j] * load)
    return float(params.P_S_bh[j])


def network_power(v: LayeredBeamformer, scenario: Scenario) -> PowerBreakdown:
    """Objective p and total power p_tilde of a beamformer.

    An awake BS keeps its backhaul link awake as well, so the relative power
    of every active BS includes both gaps (BS and backhaul); the traffic term
    is charged per uncached delivered group.
    """
    pp = scenario.power
    bs, blk = v.active_mask()
    transmit = float(np.sum(pp.delta[bs] * v.bs_powers()[bs]))
    n_ba = blk & (scenario.uncached > 0)
    traffic = float(np.sum(scenario.beta[n_ba]))
    relative = float(np.sum(pp.relative_power[bs]))
    sleep = float(np.sum(pp.sleep_power))
    p = transmit + traffic + relative
    return PowerBreakdown(transmit, traffic, relative, sleep, p, p + sleep,
                          int(bs.sum()), int(n_ba.sum()))


def _headroom_db(cap, used) -> float:
    """Smallest cap/used ratio in dB; unused resources have infinite headroom."""
    used = np.asarray(used, dtype=float)
    busy = used > 0
    if not np.any(busy):
        return np.inf
    return float(np.min(lin_to_db(np.asarray(cap)[busy] / used[busy])))


def check_constraints(v: LayeredBeamformer, scenario: Scenario,
                      tol_qos: float = TOL_QOS, tol_power: float = TOL_POWER) -> ConstraintReport:
    """QoS, per-BS transmit power and exact backhaul capacity checks."""
    pp = scenario.power
    ug = scenario.user_group
    gamma = scenario.grouping.target_sinr[ug]
    sinr = sinr_per_user(v, scenario.H, ug, scenario.noise_power)
    ratio = sinr / gamma
    bs_pow = v.bs_powers()
    load = backhaul_load(backhaul_assignment(v, scenario.uncached), scenario.rates)
    qos_ok = bool(np.all(ratio >= 1.0 - tol_qos)) if ratio.size else True
    power_ok = bool(np.all(bs_pow <= pp.P_tx * (1.0 + tol_power)))
    backhaul_ok = bool(np.all(load <= pp.C_bh))
    margins = {
        "qos_dB": float(np.min(lin_to_db(np.maximum(ratio, 0.0)))) if ratio.size else np.inf,
        "power_dB": _headroom_db(pp.P_tx, bs_pow),
        "backhaul_dB": _headroom_db(pp.C_bh, load),
    }
    return ConstraintReport(qos_ok, power_ok, backhaul_ok, margins)
