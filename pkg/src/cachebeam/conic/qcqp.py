"""Convex QCQP solver: primal-dual interior point with Mehrotra correction.

Problem form (all quadratic forms convex)::

    minimize    x^T P0 x + q0^T x + r0
    subject to  x^T Pi x + qi^T x + ri <= 0,   i = 1..m

The method works directly on the quadratic constraints with slacks ``s``
and multipliers ``z``; each iteration solves one dense n x n Newton
system obtained by eliminating slacks and multipliers.  Constraint
matrices are kept as one dense stack of shape (m, n, n) so Hessian
assembly is a single tensor contraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"
STATUS_UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class QuadForm:
    """x^T P x + q^T x + r."""
    P: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def value(self, x):
        return float(x @ self.P @ x + self.q @ x + self.r)

    def grad(self, x):
        return 2.0 * self.P @ x + self.q


class NonConvexError(ValueError):
    pass


def _min_eig(P):
    return float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])


class QcqpProblem:
    """Convex QCQP with stacked constraint data.

    Parameters
    ----------
    P0, q0, r0 : objective quadratic form.
    P, q, r : constraint stacks of shapes (m, n, n), (m, n) and (m,).
    check_convexity : run the eigenvalue certificate on every form.  Builders
        that assemble forms from Gram matrices and nonnegative diagonals may
        skip it.
    """

    def __init__(self, P0, q0, r0=0.0, P=None, q=None, r=None, *,
                 check_convexity: bool = True, psd_tol: float = 1e-9):
        self.P0 = np.asarray(P0, dtype=float)
        self.q0 = np.asarray(q0, dtype=float)
        self.r0 = float(r0)
        n = self.q0.size
        if P is None:
            P = np.zeros((0, n, n))
            q = np.zeros((0, n))
            r = np.zeros(0)
        self.P = np.asarray(P, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.r = np.asarray(r, dtype=float)
        m = self.r.size
        if self.P0.shape != (n, n) or self.P.shape != (m, n, n) or self.q.shape != (m, n):
            raise ValueError("inconsistent QCQP dimensions")
        if check_convexity:
            self.certify_convexity(psd_tol)

    @classmethod
    def from_forms(cls, objective: QuadForm, constraints: Sequence[QuadForm] = (), **kw):
        n = np.asarray(objective.q).size
        if constraints:
            P = np.stack([np.asarray(c.P, dtype=float) for c in constraints])
            q = np.stack([np.asarray(c.q, dtype=float) for c in constraints])
            r = np.array([float(c.r) for c in constraints])
        else:
            P, q, r = np.zeros((0, n, n)), np.zeros((0, n)), np.zeros(0)
        return cls(objective.P, objective.q, objective.r, P, q, r, **kw)

    @property
    def n(self) -> int:
        return self.q0.size

    @property
    def m(self) -> int:
        return self.r.size

    def certify_convexity(self, psd_tol: float = 1e-9):
        for name, mat in [("objective", self.P0)] + [(f"constraint {i}", self.P[i]) for i in range(self.m)]:
            if not np.allclose(mat, mat.T, atol=1e-12 * max(1.0, np.abs(mat).max(initial=0.0))):
                raise NonConvexError(f"{name} matrix is not symmetric")
            scale = max(1.0, np.abs(mat).max(initial=0.0))
            if mat.size and _min_eig(mat) < -psd_tol * scale:
                raise NonConvexError(f"{name} matrix is not positive semidefinite")

    def objective_value(self, x) -> float:
        return float(x @ self.P0 @ x + self.q0 @ x + self.r0)

    def constraint_values(self, x) -> np.ndarray:
        Px = self.P @ x
        return Px @ x + self.q @ x + self.r

    def with_linear_terms(self, q0, r0, q, r) -> "QcqpProblem":
        """Same quadratic parts, new linear and constant terms (no copies of P)."""
        out = object.__new__(QcqpProblem)
        out.P0, out.P = self.P0, self.P
        out.q0, out.r0 = np.asarray(q0, dtype=float), float(r0)
        out.q, out.r = np.asarray(q, dtype=float), np.asarray(r, dtype=float)
        return out

    def to_json(self, **tolerances) -> str:
        """Dump in a row-major JSON format for cross-checking with other solvers."""
        return json.dumps({
            "n": self.n, "m": self.m,
            "objective": {"P": self.P0.tolist(), "q": self.q0.tolist(), "r": self.r0},
            "constraints": [{"P": self.P[i].tolist(), "q": self.q[i].tolist(),
                             "r": float(self.r[i]), "sense": "<="} for i in range(self.m)],
            "tolerances": tolerances,
        })

    @classmethod
    def from_json(cls, text: str) -> "QcqpProblem":
        d = json.loads(text)
        n = d["n"]
        cons = d["constraints"]
        P = np.array([c["P"] for c in cons], dtype=float).reshape(len(cons), n, n)
        q = np.array([c["q"] for c in cons], dtype=float).reshape(len(cons), n)
        r = np.array([c["r"] for c in cons], dtype=float)
        o = d["objective"]
        return cls(o["P"], o["q"], o["r"], P, q, r)


@dataclass
class QcqpSolution:
    status: str
    x: np.ndarray
    objective: float
    kkt_residuals: dict
    iterations: int
    z: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)


def kkt_residuals(problem: QcqpProblem, x, z) -> dict:
    """Scaled primal infeasibility, stationarity and complementarity."""
    f = problem.constraint_values(x)
    g0 = 2.0 * problem.P0 @ x + problem.q0
    J = 2.0 * (problem.P @ x) + problem.q
    grad_l = g0 + J.T @ z if problem.m else g0
    f0 = problem.objective_value(x)
    return {
        "primal": float(np.max(np.maximum(f, 0.0), initial=0.0)),
        "dual": float(np.max(np.abs(grad_l), initial=0.0) / (1.0 + np.max(np.abs(g0), initial=0.0))),
        "complementarity": float(np.max(z * np.abs(f), initial=0.0) / (1.0 + abs(f0))),
    }


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _factor(K):
    try:
        return cho_factor(K, lower=True, check_finite=False)
    except LinAlgError:
        pass
    d = np.abs(np.diag(K))
    reg = 1e-14 * max(1.0, d.max(initial=1.0))
    for _ in range(12):
        try:
            return cho_factor(K + reg * np.eye(K.shape[0]), lower=True, check_finite=False)
        except LinAlgError:
            reg *= 100.0
    raise LinAlgError("Newton system could not be factored")


def _unconstrained(problem: QcqpProblem) -> QcqpSolution:
    x, *_ = np.linalg.lstsq(2.0 * problem.P0, -problem.q0, rcond=None)
    res = kkt_residuals(problem, x, np.zeros(0))
    status = STATUS_OPTIMAL if res["dual"] <= 1e-8 else STATUS_UNBOUNDED
    return QcqpSolution(status, x, problem.objective_value(x), res, 0, np.zeros(0))


def _ipm(problem: QcqpProblem, x, tol, max_iter):
    """Core interior point loop; returns (status, x, z, iterations, info)."""
    m = problem.m
    P0, q0, P, q = problem.P0, problem.q0, problem.P, problem.q
    Pflat = P.reshape(m, -1)
    f = problem.constraint_values(x)
    s = np.maximum(-f, 1.0)
    z = np.ones(m)
    info = {}
    best = None
    for it in range(1, max_iter + 1):
        Px = P @ x
        f = np.einsum("ij,j->i", Px, x) + q @ x + problem.r
        J = 2.0 * Px + q
        g0 = 2.0 * P0 @ x + q0
        r_d = g0 + J.T @ z
        r_p = f + s
        mu = float(s @ z) / m
        f0 = float(x @ P0 @ x + q0 @ x + problem.r0)
        prim = float(np.max(np.maximum(f, 0.0)))
        dual = float(np.max(np.abs(r_d)) / (1.0 + np.max(np.abs(g0))))
        comp = float(np.max(z * np.abs(f)) / (1.0 + abs(f0)))
        merit = max(prim, dual, comp)
        if best is None or merit < best[0]:
            best = (merit, x.copy(), z.copy())
        if prim <= tol and dual <= tol and comp <= tol and mu <= tol * (1.0 + abs(f0)):
            return STATUS_OPTIMAL, x, z, it - 1, info
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
            info["diverged"] = True
            return STATUS_UNBOUNDED, best[1], best[2], it, info
        if z.max() > 1e14 * (1.0 + np.max(np.abs(g0))):
            info["multiplier_blowup"] = True
            break

        H = 2.0 * (P0 + (z @ Pflat).reshape(P0.shape))
        with np.errstate(over="ignore", invalid="ignore"):
            D = z / s
            K = H + J.T @ (D[:, None] * J)
        if not np.all(np.isfinite(K)):
            # a slack collapsed to zero; the best iterate so far is returned
            info["slack_underflow"] = True
            break
        try:
            fac = _factor(K)
        except LinAlgError:
            info["factorization_failed"] = True
            break

        def direction(r_c):
            rhs = -r_d - J.T @ (D * r_p - r_c / s)
            dx = cho_solve(fac, rhs, check_finite=False)
            dz = D * (J @ dx + r_p) - r_c / s
            ds = -(r_c + s * dz) / z
            return dx, ds, dz

        # predictor
        dx_a, ds_a, dz_a = direction(s * z)
        a_p = min(1.0, _max_step(s, ds_a))
        a_d = min(1.0, _max_step(z, dz_a))
        a = min(a_p, a_d)
        mu_aff = float((s + a * ds_a) @ (z + a * dz_a)) / m
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
        # corrector
        dx, ds, dz = direction(s * z + ds_a * dz_a - sigma * mu)
        a = min(1.0, 0.995 * min(_max_step(s, ds), _max_step(z, dz)))
        if a < 1e-12:
            info["stalled"] = True
            break
        x = x + a * dx
        s = s + a * ds
        z = z + a * dz
    else:
        it = max_iter
    return STATUS_MAX_ITER, best[1], best[2], it, info


def solve_qcqp(problem: QcqpProblem, tol: float = 1e-8, max_iter: int = 200,
               x0: Optional[np.ndarray] = None, phase1: bool = True) -> QcqpSolution:
    """Solve a convex QCQP.

    A failed main run (iteration cap, stalled steps or diverging multipliers)
    triggers a phase-I problem that minimizes the largest constraint value
    inside a big ball; a positive minimum certifies infeasibility.
    """
    if problem.m == 0:
        return _unconstrained(problem)
    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=float)
    status, x, z, its, info = _ipm(problem, x, tol, max_iter)
    if status != STATUS_OPTIMAL and x0 is not None and np.any(x0):
        # a warm start far from the central path can drive a slack to zero
        # before the residuals close; retry from the origin
        status, x, z, more, info = _ipm(problem, np.zeros(problem.n), tol, max_iter)
        its += more
        info["cold_restart"] = True
    if status != STATUS_OPTIMAL and phase1:
        t_min, _ = phase1_min_slack(problem, x, tol=tol, max_iter=max_iter)
        info["phase1_min_slack"] = t_min
        if t_min > 1e-7:
            status = STATUS_INFEASIBLE
    res = kkt_residuals(problem, x, z)
    return QcqpSolution(status, x, problem.objective_value(x), res, its, z, info)


def phase1_min_slack(problem: QcqpProblem, x_ref, tol=1e-8, max_iter=200, radius=None):
    """min t s.t. f_i(x) <= t, ||x - x_ref||^2 <= radius^2, t >= -1.

    Returns (t*, x*).  The lower bound on t keeps the problem bounded when
    the original constraints have a large interior.
    """
    n, m = problem.n, problem.m
    x_ref = np.asarray(x_ref, dtype=float)
    if radius is None:
        radius = 1e4 * (1.0 + np.linalg.norm(x_ref))
    N = n + 1
    P = np.zeros((m + 2, N, N))
    P[:m, :n, :n] = problem.P
    q = np.zeros((m + 2, N))
    q[:m, :n] = problem.q
    q[:m, n] = -1.0
    r = np.zeros(m + 2)
    r[:m] = problem.r
    # ball around the reference point
    P[m, :n, :n] = np.eye(n)
    q[m, :n] = -2.0 * x_ref
    r[m] = x_ref @ x_ref - radius ** 2
    # t >= -1
    q[m + 1, n] = -1.0
    r[m + 1] = -1.0
    q0 = np.zeros(N)
    q0[n] = 1.0
    aux = QcqpProblem(np.zeros((N, N)), q0, 0.0, P, q, r, check_convexity=False)
    start = np.concatenate([x_ref, [max(0.0, float(np.max(problem.constraint_values(x_ref)))) + 1.0]])
    status, y, _, _, _ = _ipm(aux, start, tol, max_iter)
    t = float(np.max(problem.constraint_values(y[:n])))
    return t, y[:n]
