"""Small dense SDP solver over Hermitian block variables.

Solves::

    minimize    sum_b Tr(C_b W_b)
    subject to  sum_b Tr(A_ib W_b)  (<=, >=, ==)  b_i
                W_b Hermitian PSD

Each Hermitian block is replaced by its real symmetric lift
[[Re W, -Im W], [Im W, Re W]], inequalities get nonnegative slacks, and
the resulting real standard-form SDP is solved with a primal-dual
interior point method (HKM direction, Mehrotra predictor-corrector,
infeasible start).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .lift import lift_hermitian, unlift_hermitian

MAX_BLOCK_DIM = 64
MAX_BLOCKS = 32


@dataclass
class SdpProblem:
    """Block SDP data.

    block_sizes : complex dimension of every block.
    C : objective matrix per block (Hermitian).
    A : per block, a stack (m, n_b, n_b) of Hermitian constraint matrices.
    senses : one of "<=", ">=", "==" per constraint.
    b : right-hand sides.
    """
    block_sizes: Sequence[int]
    C: Sequence[np.ndarray]
    A: Sequence[np.ndarray]
    senses: Sequence[str]
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        m = self.b.size
        if len(self.senses) != m:
            raise ValueError("one sense per constraint is required")
        if any(s not in ("<=", ">=", "==") for s in self.senses):
            raise ValueError("senses must be '<=', '>=' or '=='")
        for nb, Cb, Ab in zip(self.block_sizes, self.C, self.A):
            if Cb.shape != (nb, nb) or Ab.shape != (m, nb, nb):
                raise ValueError("inconsistent SDP block dimensions")
            if not np.allclose(Cb, Cb.conj().T) or not np.allclose(Ab, np.conj(np.swapaxes(Ab, 1, 2))):
                raise ValueError("SDP data must be Hermitian")

    @property
    def m(self) -> int:
        return self.b.size

    def objective_value(self, W) -> float:
        return float(sum(np.real(np.trace(Cb @ Wb)) for Cb, Wb in zip(self.C, W)))

    def constraint_lhs(self, W) -> np.ndarray:
        out = np.zeros(self.m)
        for Ab, Wb in zip(self.A, W):
            out += np.real(np.einsum("kij,ji->k", Ab, Wb))
        return out


@dataclass
class SdpSolution:
    status: str
    W: list
    y: np.ndarray
    primal_objective: float
    dual_objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)
    history: list = field(default_factory=list)   # (pobj, dobj, <X,Z>, primal_res, dual_res)

    @property
    def gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective) / (
            1.0 + abs(self.primal_objective) + abs(self.dual_objective))


def _max_psd_step(X_chol, dX):
    """Largest a with X + a dX PSD, given the lower Cholesky factor of X."""
    Linv_dX = np.linalg.solve(X_chol, dX)
    M = np.linalg.solve(X_chol, Linv_dX.T)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_lp_step(v, dv):
    neg = dv < 0
    return np.inf if not np.any(neg) else float(np.min(-v[neg] / dv[neg]))


def solve_sdp(problem: SdpProblem, tol: float = 1e-6, max_iter: int = 100,
              infeasibility_tol: float = 1e-8) -> SdpSolution:
    if len(problem.block_sizes) > MAX_BLOCKS or max(problem.block_sizes, default=0) > MAX_BLOCK_DIM:
        raise ValueError("SDP exceeds the desk-scale size cap")
    m = problem.m
    # ---- real lifted data; Tr(A W) = 0.5 Tr(lift(A) lift(W))
    Cs = [0.5 * lift_hermitian(Cb) for Cb in problem.C]
    # equilibrate constraint rows: channel-gain rows can be many orders of
    # magnitude larger than power rows, which ruins the Schur complement
    peak = np.zeros(m)
    for Ab in problem.A:
        peak = np.maximum(peak, np.abs(Ab).reshape(m, -1).max(axis=1, initial=0.0))
    row_scale = np.where(peak > 0, peak, 1.0)
    As = [0.5 * lift_hermitian(Ab / row_scale[:, None, None]) for Ab in problem.A]
    dims = [c.shape[0] for c in Cs]
    senses = list(problem.senses)
    slack_rows = [i for i, s in enumerate(senses) if s != "=="]
    nl = len(slack_rows)
    Al = np.zeros((m, nl))
    for col, i in enumerate(slack_rows):
        Al[i, col] = 1.0 if senses[i] == "<=" else -1.0
    cl = np.zeros(nl)
    b = problem.b / row_scale

    def A_op(Xs, xl):
        out = Al @ xl
        for Ab, Xb in zip(As, Xs):
            out = out + Ab.reshape(m, -1) @ Xb.ravel()
        return out

    def At_op(y):
        return [np.tensordot(y, Ab, axes=1) for Ab in As], Al.T @ y

    # ---- initial point (scaled identities)
    normA = max([np.linalg.norm(Ab.reshape(m, -1), axis=1).max(initial=0.0) for Ab in As] + [1.0])
    normC = np.sqrt(sum(np.sum(c ** 2) for c in Cs))
    ntot = sum(dims) + nl
    xi = max(10.0, np.sqrt(ntot), float(np.max((1.0 + np.abs(b)) / (1.0 + normA), initial=0.0)))
    eta = max(10.0, np.sqrt(ntot), normC, normA)
    Xs = [xi * np.eye(d) for d in dims]
    Zs = [eta * np.eye(d) for d in dims]
    xl, zl = np.full(nl, xi), np.full(nl, eta)
    y = np.zeros(m)
    history = []
    normb = np.linalg.norm(b)
    status = "max_iter"
    it = 0
    for it in range(max_iter + 1):
        AtY, Aly = At_op(y)
        Rp = b - A_op(Xs, xl)
        Rd = [Cb - Sb - Zb for Cb, Sb, Zb in zip(Cs, AtY, Zs)]
        Rdl = cl - Aly - zl
        pobj = sum(np.sum(Cb * Xb) for Cb, Xb in zip(Cs, Xs)) + cl @ xl
        dobj = float(b @ y)
        xz = sum(np.sum(Xb * Zb) for Xb, Zb in zip(Xs, Zs)) + xl @ zl
        mu = xz / ntot
        pres = np.linalg.norm(Rp) / (1.0 + normb)
        dres = np.sqrt(sum(np.sum(r ** 2) for r in Rd) + Rdl @ Rdl) / (1.0 + normC)
        history.append((float(pobj), dobj, float(xz), float(pres), float(dres)))
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if gap <= tol and pres <= tol and dres <= tol:
            status = "optimal"
            break
        # infeasibility certificates
        if dobj > 0:
            cert = np.sqrt(sum(np.sum((Sb + Zb) ** 2) for Sb, Zb in zip(AtY, Zs))
                           + np.sum((Aly + zl) ** 2)) / dobj
            if cert < infeasibility_tol:
                status = "infeasible"
                break
        if pobj < 0:
            cert = np.linalg.norm(A_op(Xs, xl)) / (-pobj)
            if cert < infeasibility_tol:
                status = "unbounded"
                break
        if it == max_iter:
            break

        # ---- Schur complement (HKM)
        Zinv = [np.linalg.inv(Zb) for Zb in Zs]
        M = (Al * (xl / zl)) @ Al.T
        XAZ = []
        for Ab, Xb, Zi in zip(As, Xs, Zinv):
            T = np.matmul(np.matmul(Xb, Ab), Zi)          # (m, d, d)
            XAZ.append(T)
            M += T.reshape(m, -1) @ Ab.reshape(m, -1).T
        M = 0.5 * (M + M.T)
        try:
            Mf = cho_factor(M, lower=True, check_finite=False)
        except LinAlgError:
            M += 1e-12 * max(1.0, np.abs(np.diag(M)).max()) * np.eye(m)
            try:
                Mf = cho_factor(M, lower=True, check_finite=False)
            except LinAlgError:
                status = "numerical_error"
                break

        def direction(target_mu, corr_X=None, corr_l=None):
            # dX = target*Z^-1 - X - corr*Z^-1 - X dZ Z^-1 with dZ = Rd - A^T dy
            G = []
            for i, (Xb, Zi, Rb) in enumerate(zip(Xs, Zinv, Rd)):
                Gb = target_mu * Zi - Xb - Xb @ Rb @ Zi
                if corr_X is not None:
                    Gb = Gb - corr_X[i] @ Zi
                G.append(Gb)
            gl = target_mu / zl - xl - xl / zl * Rdl
            if corr_l is not None:
                gl = gl - corr_l / zl
            rhs = Rp - A_op(G, gl)
            dy = cho_solve(Mf, rhs, check_finite=False)
            AtdY, Aldy = At_op(dy)
            dZ = [Rb - Sb for Rb, Sb in zip(Rd, AtdY)]
            dzl = Rdl - Aldy
            dX = []
            for Gb, Xb, dZb, Zi in zip(G, Xs, dZ, Zinv):
                d = Gb - Xb @ dZb @ Zi
                dX.append(0.5 * (d + d.T))
            dxl = gl - xl / zl * dzl
            return dX, dxl, dy, dZ, dzl

        def steps(dX, dxl, dZ, dzl):
            ap = min([_max_psd_step(Lx, d) for Lx, d in zip(Lxs, dX)] + [_max_lp_step(xl, dxl), 1e30])
            ad = min([_max_psd_step(Lz, d) for Lz, d in zip(Lzs, dZ)] + [_max_lp_step(zl, dzl), 1e30])
            return ap, ad

        try:
            Lxs = [np.linalg.cholesky(Xb) for Xb in Xs]
            Lzs = [np.linalg.cholesky(Zb) for Zb in Zs]
        except LinAlgError:
            # iterates lost definiteness to rounding; nothing more to gain
            status = "numerical_error"
            break
        dX, dxl, dy, dZ, dzl = direction(0.0)
        ap, ad = steps(dX, dxl, dZ, dzl)
        ap, ad = min(1.0, ap), min(1.0, ad)
        xz_aff = sum(np.sum((Xb + ap * a) * (Zb + ad * c)) for Xb, a, Zb, c in zip(Xs, dX, Zs, dZ)) \
            + (xl + ap * dxl) @ (zl + ad * dzl)
        sigma = min(1.0, max(0.0, xz_aff / xz)) ** 3
        corr_X = [a @ c for a, c in zip(dX, dZ)]
        dX, dxl, dy, dZ, dzl = direction(sigma * mu, corr_X, dxl * dzl)
        ap, ad = steps(dX, dxl, dZ, dzl)
        gamma = 0.98
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        Xs = [Xb + ap * d for Xb, d in zip(Xs, dX)]
        xl = xl + ap * dxl
        y = y + ad * dy
        Zs = [Zb + ad * d for Zb, d in zip(Zs, dZ)]
        zl = zl + ad * dzl

    W = [unlift_hermitian(Xb) for Xb in Xs]
    y = y / row_scale
    return SdpSolution(status, W, y, float(history[-1][0]), float(history[-1][1]), it,
                       {"primal": history[-1][3], "dual": history[-1][4]}, history)
