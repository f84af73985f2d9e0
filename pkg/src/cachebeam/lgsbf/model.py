"""Real-coordinate models of the multicast beamforming problems.

Every optimization in the package works on a support pattern: a boolean
(N_B, N_G) mask of blocks that may be nonzero.  :class:`SupportSpace`
maps beamformers restricted to such a mask to real vectors
``x = [Re v; Im v]`` and builds the quadratic pieces used by the solvers:

* QoS of user k in group m, scaled by the noise power,
  ``sum_{i != m} |h_k^H v_i|^2 + 1 - |h_k^H v_m|^2 / gamma_m <= 0``,
  whose last term is the subtracted convex part of a DC constraint;
* per-BS power caps ``||v_j||^2 / P_j - 1 <= 0``;
* the reweighted backhaul capacity surrogate
  ``sum_m R_m (1 - c) w_jm ||v_jm||^2 / C_j - 1 <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..conic.cccp import DcProgram
from ..conic.qcqp import QcqpProblem
from ..conic.randomize import MulticastConstraints
from ..netgen import Scenario
from ..powermodel import LayeredBeamformer

DEFAULT_TAU = 1e-5
FEAS_MARGIN = 1e-6   # phase-I declares feasibility once max QoS value < -FEAS_MARGIN


def full_mask(scenario: Scenario) -> np.ndarray:
    return np.ones((scenario.n_bs, scenario.n_groups), dtype=bool)


def mask_from_sets(scenario: Scenario, z_bs=(), z_da=()) -> np.ndarray:
    mask = full_mask(scenario)
    for j in z_bs:
        mask[j, :] = False
    for j, m in z_da:
        mask[j, m] = False
    return mask


def exact_load(scenario: Scenario, mask: np.ndarray) -> np.ndarray:
    """Backhaul load per BS if every allowed block were active [bit/s]."""
    return (mask * scenario.uncached) @ scenario.rates


def needs_backhaul_surrogate(scenario: Scenario, mask: np.ndarray) -> np.ndarray:
    """BSs whose capacity can actually be exceeded on this support.

    When the load with every allowed block active fits the capacity, the
    exact constraint holds for every beamformer on the support and the
    surrogate would only cut away feasible points.
    """
    return exact_load(scenario, mask) > scenario.power.C_bh * (1.0 + 1e-12)


def structurally_infeasible(scenario: Scenario, mask: np.ndarray) -> bool:
    """Some group cannot be served by any allowed block."""
    return bool(np.any(~mask.any(axis=0))) if scenario.n_groups else False


class SupportSpace:
    """Coordinates of beamformers supported on ``mask``."""

    def __init__(self, scenario: Scenario, mask: np.ndarray):
        self.scenario = scenario
        self.mask = np.asarray(mask, dtype=bool)
        self.L = scenario.antennas
        bj, bm = np.nonzero(self.mask)
        self.block_bs, self.block_group = bj, bm
        self.n_blocks = bj.size
        self.nc = self.n_blocks * self.L
        self.n = 2 * self.nc
        self.coord_block = np.repeat(np.arange(self.n_blocks), self.L)
        self.coord_bs = bj[self.coord_block]
        self.coord_group = bm[self.coord_block]
        self._qos = None

    # ---- conversions
    def to_x(self, v) -> np.ndarray:
        blocks = v.blocks if isinstance(v, LayeredBeamformer) else np.asarray(v)
        c = blocks[self.block_bs, self.block_group, :].ravel()
        return np.concatenate([c.real, c.imag])

    def from_x(self, x) -> LayeredBeamformer:
        sc = self.scenario
        blocks = np.zeros((sc.n_bs, sc.n_groups, self.L), dtype=complex)
        c = (x[:self.nc] + 1j * x[self.nc:]).reshape(self.n_blocks, self.L)
        blocks[self.block_bs, self.block_group, :] = c
        return LayeredBeamformer(blocks, sc.eps_support)

    def block_power(self, x) -> np.ndarray:
        sq = x[:self.nc] ** 2 + x[self.nc:] ** 2
        return np.bincount(self.coord_block, weights=sq, minlength=self.n_blocks)

    def bs_power(self, x) -> np.ndarray:
        return np.bincount(self.block_bs, weights=self.block_power(x), minlength=self.scenario.n_bs)

    def diag_from_blocks(self, coef) -> np.ndarray:
        """Diagonal of sum_b coef_b ||v_b||^2 in lifted coordinates."""
        d = np.repeat(np.asarray(coef, dtype=float), self.L)
        return np.concatenate([d, d])

    # ---- QoS pieces
    def _qos_data(self):
        if self._qos is None:
            sc = self.scenario
            hbar = sc.normalized_channels()                       # (N_U, N_B, L)
            a = hbar[:, self.block_bs, :].reshape(sc.n_users, self.nc)
            U = np.concatenate([a.real, a.imag], axis=1)          # Re(a^H v) = U x
            W = np.concatenate([-a.imag, a.real], axis=1)         # Im(a^H v) = W x
            ug = sc.user_group
            gamma = sc.grouping.target_sinr[ug]
            grp = np.concatenate([self.coord_group, self.coord_group])
            own = grp[None, :] == ug[:, None]                     # (N_U, n)
            Us, Ws = U * own, W * own
            # interference part: same-group coordinate pairs of other groups
            same = grp[:, None] == grp[None, :]
            full = U[:, :, None] * U[:, None, :] + W[:, :, None] * W[:, None, :]
            keep = same[None, :, :] & ~own[:, :, None]
            self._qos = (Us / np.sqrt(gamma)[:, None], Ws / np.sqrt(gamma)[:, None],
                         full * keep)
        return self._qos

    def qos_concave(self, x):
        """Values and gradients of |h_k^H v_m|^2 / gamma for all users."""
        Us, Ws, _ = self._qos_data()
        a, b = Us @ x, Ws @ x
        return a * a + b * b, 2.0 * (a[:, None] * Us + b[:, None] * Ws)

    def qos_values(self, x) -> np.ndarray:
        _, _, P = self._qos_data()
        h, _ = self.qos_concave(x)
        return np.einsum("kij,i,j->k", P, x, x) + 1.0 - h

    # ---- constraint stack
    def constraint_stack(self, bh_weights: Optional[np.ndarray] = None,
                         qos_offset_var: bool = False):
        """(P, q, r, groups) for QoS, power and (where needed) backhaul rows.

        ``bh_weights`` holds one weight per allowed block.  With
        ``qos_offset_var`` an extra trailing coordinate t is appended and the
        QoS rows become  QoS_k(x) - t <= 0.
        """
        sc = self.scenario
        n = self.n + (1 if qos_offset_var else 0)
        _, _, Pq = self._qos_data()
        rows_P, rows_q, rows_r = [], [], []
        n_u = sc.n_users
        Pqos = np.zeros((n_u, n, n))
        Pqos[:, :self.n, :self.n] = Pq
        qqos = np.zeros((n_u, n))
        if qos_offset_var:
            qqos[:, -1] = -1.0
        rows_P.append(Pqos)
        rows_q.append(qqos)
        rows_r.append(np.ones(n_u))
        # power caps, one row per BS with allowed blocks
        active = np.unique(self.block_bs)
        Ppow = np.zeros((active.size, n, n))
        for row, j in enumerate(active):
            d = self.diag_from_blocks((self.block_bs == j) / sc.power.P_tx[j])
            Ppow[row, np.arange(self.n), np.arange(self.n)] = d
        rows_P.append(Ppow)
        rows_q.append(np.zeros((active.size, n)))
        rows_r.append(-np.ones(active.size))
        bh_rows = self.backhaul_rows(bh_weights)
        if bh_rows is not None:
            bs_idx, coefs = bh_rows
            Pbh = np.zeros((bs_idx.size, n, n))
            for row, coef in enumerate(coefs):
                Pbh[row, np.arange(self.n), np.arange(self.n)] = self.diag_from_blocks(coef)
            rows_P.append(Pbh)
            rows_q.append(np.zeros((bs_idx.size, n)))
            rows_r.append(-np.ones(bs_idx.size))
        groups = {"qos": slice(0, n_u), "power": slice(n_u, n_u + active.size)}
        if bh_rows is not None:
            groups["backhaul"] = slice(n_u + active.size, n_u + active.size + bh_rows[0].size)
        return (np.concatenate(rows_P), np.concatenate(rows_q), np.concatenate(rows_r), groups)

    def backhaul_bs(self) -> np.ndarray:
        return np.flatnonzero(needs_backhaul_surrogate(self.scenario, self.mask))

    def backhaul_rows(self, bh_weights):
        """Per constrained BS, the coefficient of each block power."""
        sc = self.scenario
        bs_idx = self.backhaul_bs()
        if bs_idx.size == 0:
            return None
        if bh_weights is None:
            bh_weights = np.full(self.n_blocks, 1.0 / float(np.max(sc.power.P_tx)))
        rate_unc = (sc.rates[self.block_group] * sc.uncached[self.block_bs, self.block_group])
        coefs = [(self.block_bs == j) * rate_unc * bh_weights / sc.power.C_bh[j] for j in bs_idx]
        return bs_idx, np.array(coefs)

    def block_weights(self, x, tau=DEFAULT_TAU) -> np.ndarray:
        return 1.0 / (self.block_power(x) + tau)

    def backhaul_surrogate_values(self, x, bh_weights) -> np.ndarray:
        rows = self.backhaul_rows(bh_weights)
        if rows is None:
            return np.zeros(0)
        return rows[1] @ self.block_power(x) - 1.0

    # ---- objectives
    def transmit_diag(self) -> np.ndarray:
        return self.diag_from_blocks(self.scenario.power.delta[self.block_bs])

    def transmit_power(self, x) -> float:
        return float(self.scenario.power.delta[self.block_bs] @ self.block_power(x))

    # ---- single-user bound for quick infeasibility screening
    def signal_bound_violated(self) -> bool:
        """True when some user cannot reach its SINR even with no interference.

        The largest |h_k^H v_m|^2 under per-BS caps is
        (sum_j sqrt(P_j) ||h_kj||)^2 over the BSs allowed for group m.
        """
        sc = self.scenario
        hn = np.linalg.norm(sc.normalized_channels(), axis=2)          # (N_U, N_B)
        ug = sc.user_group
        allowed = self.mask[:, ug].T                                    # (N_U, N_B)
        amp = (hn * allowed) @ np.sqrt(sc.power.P_tx)
        return bool(np.any(amp ** 2 < sc.grouping.target_sinr[ug]))

    # ---- SDR data
    def multicast_constraints(self, bh_weights=None) -> MulticastConstraints:
        sc = self.scenario
        L = self.L
        coords = [np.concatenate([np.arange(j * L, (j + 1) * L) for j in np.flatnonzero(self.mask[:, m])])
                  .astype(int) if self.mask[:, m].any() else np.zeros(0, dtype=int)
                  for m in range(sc.n_groups)]
        bh_coef = bh_cap = None
        rows = self.backhaul_rows(bh_weights)
        if rows is not None:
            bh_coef = np.zeros((sc.n_bs, sc.n_groups))
            for j, coef in zip(*rows):
                sel = self.block_bs == j
                bh_coef[j, self.block_group[sel]] = coef[sel]
            bh_cap = np.ones(sc.n_bs)
        return MulticastConstraints(
            h=sc.normalized_channels().reshape(sc.n_users, -1),
            user_group=sc.user_group,
            gamma=sc.grouping.target_sinr,
            coords=coords,
            antenna_bs=np.repeat(np.arange(sc.n_bs), L),
            p_max=sc.power.P_tx,
            cost=sc.power.delta,
            bh_coef=bh_coef, bh_cap=bh_cap)

    def from_group_vectors(self, V: np.ndarray) -> LayeredBeamformer:
        sc = self.scenario
        blocks = np.transpose(V.reshape(sc.n_groups, sc.n_bs, self.L), (1, 0, 2)).copy()
        blocks[~self.mask] = 0.0
        return LayeredBeamformer(blocks, sc.eps_support)


@dataclass
class ProblemState:
    """Weights carried between CCCP outer iterations."""
    bs_weights: np.ndarray
    block_weights: np.ndarray
    bh_weights: np.ndarray


def _qcqp(P0_diag, q0, P, q, r):
    n = q0.size
    P0 = np.zeros((n, n))
    P0[np.arange(n), np.arange(n)] = P0_diag
    return QcqpProblem(P0, q0, 0.0, P, q, r, check_convexity=False)


def power_min_program(space: SupportSpace, bh_weights=None) -> DcProgram:
    """Transmit power minimization on a fixed support (DC QoS constraints)."""
    P, q, r, _ = space.constraint_stack(bh_weights)
    cv = _qcqp(space.transmit_diag(), np.zeros(space.n), P, q, r)
    return DcProgram(cv, concave=_padded_concave(space, P.shape[0]))


def _padded_concave(space: SupportSpace, m_total: int, extra_var: bool = False):
    n_u = space.scenario.n_users
    n = space.n + (1 if extra_var else 0)

    def concave(x):
        vals = np.zeros(m_total)
        grads = np.zeros((m_total, n))
        h, g = space.qos_concave(x[:space.n])
        vals[:n_u] = h
        grads[:n_u, :space.n] = g
        return vals, grads
    return concave


def phase1_program(space: SupportSpace, bh_weights=None) -> DcProgram:
    """min t subject to QoS_k(x) <= t and hard power/backhaul constraints."""
    P, q, r, _ = space.constraint_stack(bh_weights, qos_offset_var=True)
    n = space.n + 1
    q0 = np.zeros(n)
    q0[-1] = 1.0
    cv = _qcqp(np.zeros(n), q0, P, q, r)
    return DcProgram(cv, concave=_padded_concave(space, P.shape[0], extra_var=True))


def generalized_program(space: SupportSpace, lam_bs: float, lam_da: float,
                        bs_weights, block_weights, bh_weights=None,
                        tau: float = DEFAULT_TAU) -> DcProgram:
    """Reweighted two-layer group-sparsity objective with DC QoS constraints.

    objective = sum delta_j ||v_jm||^2
              + lam_bs * sum_j P_D_j * w_j ||v_j||^2
              + lam_da * sum_jm beta_jm (1 - c) * w_jm ||v_jm||^2
    """
    sc = space.scenario
    bj, bm = space.block_bs, space.block_group
    coef = (sc.power.delta[bj]
            + lam_bs * sc.power.relative_power[bj] * np.asarray(bs_weights)[bj]
            + lam_da * sc.beta[bj, bm] * sc.uncached[bj, bm] * np.asarray(block_weights))
    P, q, r, _ = space.constraint_stack(bh_weights)
    cv = _qcqp(space.diag_from_blocks(coef), np.zeros(space.n), P, q, r)
    eta = sc.beta[bj, bm] * sc.uncached[bj, bm]
    rel = sc.power.relative_power

    def merit(x):
        bp = space.block_power(x)
        bsp = np.bincount(bj, weights=bp, minlength=sc.n_bs)
        used = np.unique(bj)
        return float(sc.power.delta[bj] @ bp
                     + lam_bs * rel[used] @ np.log(bsp[used] + tau)
                     + lam_da * eta @ np.log(bp + tau))
    return DcProgram(cv, concave=_padded_concave(space, P.shape[0]), merit=merit)
