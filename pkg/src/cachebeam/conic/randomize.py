"""Beamformer extraction from SDR solutions.

Rank-one SDR blocks give the beamformer directly through their principal
eigenvector.  Otherwise Gaussian candidates are drawn with the SDR blocks
as covariances, and for every candidate set of directions the per-group
powers are chosen by a linear program (SINR and per-BS power constraints
are linear in the powers once directions are fixed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

RANK_ONE_TOL = 1e-6


@dataclass(frozen=True)
class MulticastConstraints:
    """Multicast QoS problem data in a flat antenna space of size N.

    h : (N_U, N) channels already divided by the noise amplitude.
    user_group : group of each user.
    gamma : (N_G,) linear SINR targets.
    coords : per group, indices of the antennas that may serve it.
    antenna_bs : (N,) BS owning each antenna.
    p_max : (N_B,) per-BS transmit power caps.
    cost : (N_B,) power price per BS used to rank candidates.
    bh_coef, bh_cap : optional per-(BS, group) weights and per-BS caps of the
        quadratic backhaul surrogate  sum_m coef_jm ||v_jm||^2 <= cap_j.
    """
    h: np.ndarray
    user_group: np.ndarray
    gamma: np.ndarray
    coords: Sequence[np.ndarray]
    antenna_bs: np.ndarray
    p_max: np.ndarray
    cost: np.ndarray
    bh_coef: Optional[np.ndarray] = None
    bh_cap: Optional[np.ndarray] = None

    @property
    def n_groups(self) -> int:
        return len(self.coords)

    @property
    def n_bs(self) -> int:
        return self.p_max.size

    def group_vectors(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        """Embed per-group vectors (on their coords) into (N_G, N)."""
        N = self.h.shape[1]
        out = np.zeros((self.n_groups, N), dtype=complex)
        for m, (idx, v) in enumerate(zip(self.coords, blocks)):
            out[m, idx] = v
        return out

    def bs_group_power(self, V: np.ndarray) -> np.ndarray:
        """(N_B, N_G) power of each block."""
        pw = np.abs(V) ** 2                        # (N_G, N)
        out = np.zeros((self.n_bs, V.shape[0]))
        np.add.at(out, self.antenna_bs, pw.T)
        return out

    def is_feasible(self, V: np.ndarray, tol: float = 1e-9) -> bool:
        g = np.abs(self.h.conj() @ V.T) ** 2       # (N_U, N_G)
        k = np.arange(self.h.shape[0])
        own = g[k, self.user_group]
        interf = g.sum(axis=1) - own
        gam = self.gamma[self.user_group]
        if np.any(own < gam * (interf + 1.0) * (1.0 - tol)):
            return False
        bp = self.bs_group_power(V)
        if np.any(bp.sum(axis=1) > self.p_max * (1.0 + tol)):
            return False
        if self.bh_coef is not None and np.any((self.bh_coef * bp).sum(axis=1) > self.bh_cap * (1.0 + tol)):
            return False
        return True


def scale_directions(U: np.ndarray, mc: MulticastConstraints):
    """Optimal nonnegative per-group power multipliers for fixed directions.

    Returns (V, cost) with V = sqrt(p_m) * U_m, or (None, inf) when no
    multipliers satisfy the constraints.
    """
    n_g = U.shape[0]
    g = np.abs(mc.h.conj() @ U.T) ** 2             # (N_U, N_G): |h_k^H u_i|^2
    n_u = g.shape[0]
    gam = mc.gamma[mc.user_group]
    # SINR: gamma * (sum_{i!=m} g_ki p_i + 1) - g_km p_m <= 0
    A_sinr = gam[:, None] * g
    A_sinr[np.arange(n_u), mc.user_group] = -g[np.arange(n_u), mc.user_group]
    b_sinr = -gam
    bp = mc.bs_group_power(U)                       # (N_B, N_G)
    rows, rhs = [A_sinr, bp], [b_sinr, mc.p_max]
    if mc.bh_coef is not None:
        rows.append(mc.bh_coef * bp)
        rhs.append(mc.bh_cap)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    c = mc.cost @ bp
    # scale columns for conditioning
    col = np.maximum(np.abs(A).max(axis=0), 1e-300)
    res = linprog(c / col, A_ub=A / col, b_ub=b, bounds=[(0, None)] * n_g, method="highs")
    if res.status != 0:
        return None, np.inf
    p = res.x / col
    V = np.sqrt(np.maximum(p, 0.0))[:, None] * U
    # the LP solution sits on its constraints; push SINRs strictly inside
    # by a relative hair so rounding does not leave them marginally short
    if not mc.is_feasible(V, tol=1e-9):
        V = _nudge(V, mc)
        if V is None:
            return None, np.inf
    return V, float(mc.cost @ mc.bs_group_power(V).sum(axis=1))


def _nudge(V, mc, steps=(1e-9, 1e-8, 1e-7)):
    for eps in steps:
        W = V * np.sqrt(1.0 + eps)
        if mc.is_feasible(W, tol=1e-9):
            return W
    return None


def principal_component(W: np.ndarray):
    """(sqrt(lambda_1) u_1, lambda_2/lambda_1) of a Hermitian PSD matrix."""
    lam, U = np.linalg.eigh(0.5 * (W + W.conj().T))
    l1 = max(lam[-1], 0.0)
    l2 = max(lam[-2], 0.0) if lam.size > 1 else 0.0
    ratio = l2 / l1 if l1 > 0 else np.inf
    return np.sqrt(l1) * U[:, -1], ratio


def randomize_and_scale(W_blocks: Sequence[np.ndarray], mc: MulticastConstraints,
                        n_rand: int = 50, rng=None):
    """Turn SDR covariance blocks into a feasible multicast beamformer.

    Returns ``(V, info)`` with V of shape (N_G, N) or None on failure.
    """
    rng = np.random.default_rng(rng)
    pcs = [principal_component(W) for W in W_blocks]
    rank_one = all(r <= RANK_ONE_TOL for _, r in pcs)
    info = {"rank_one": rank_one, "candidates": 0}
    if rank_one:
        V = mc.group_vectors([v for v, _ in pcs])
        if mc.is_feasible(V):
            info["method"] = "evd"
            return V, info
        # solver tolerance can leave the EVD point marginally short
        V2, _ = scale_directions(V, mc)
        if V2 is not None:
            info["method"] = "evd_rescaled"
            return V2, info
    # Gaussian randomization with the SDR blocks as covariances
    roots = []
    for W in W_blocks:
        lam, U = np.linalg.eigh(0.5 * (W + W.conj().T))
        roots.append(U * np.sqrt(np.maximum(lam, 0.0)))
    best, best_cost = None, np.inf
    # the principal directions are the first candidate
    cands = [mc.group_vectors([v for v, _ in pcs])]
    for _ in range(n_rand):
        blocks = []
        for R in roots:
            d = R.shape[0]
            xi = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / np.sqrt(2.0)
            blocks.append(R @ xi)
        cands.append(mc.group_vectors(blocks))
    for U in cands:
        info["candidates"] += 1
        if not np.all(np.linalg.norm(U, axis=1) > 0):
            continue
        V, cost = scale_directions(U, mc)
        if V is not None and cost < best_cost:
            best, best_cost = V, cost
    info["method"] = "randomization" if best is not None else "failed"
    return best, info
