"""Concave-convex procedure for difference-of-convex programs.

A DC program here has the form::

    minimize    f0(x) - h0(x)
    subject to  fi(x) - hi(x) <= 0

with convex quadratic ``fi`` (stored together as a :class:`QcqpProblem`)
and convex ``hi`` given through value/gradient evaluators.  Every outer
iteration replaces ``hi`` by its linearization at the current point,
which gives a convex QCQP whose feasible set is inside the original one,
so iterates stay feasible and the objective cannot increase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .qcqp import QcqpProblem, solve_qcqp, STATUS_OPTIMAL, STATUS_INFEASIBLE

# h(x) -> (values (m,), gradients (m, n)) for all constraints at once
BatchEvaluator = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]
# h0(x) -> (value, gradient)
ScalarEvaluator = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


_observers: list = []


def add_observer(fn: Callable[["CccpResult", "DcProgram"], None]) -> None:
    """Register a callback receiving every finished CCCP run (used for auditing)."""
    _observers.append(fn)


def remove_observer(fn) -> None:
    if fn in _observers:
        _observers.remove(fn)


def _notify(result, program):
    for fn in list(_observers):
        fn(result, program)


class CccpError(RuntimeError):
    """Numerical failure inside CCCP; carries the last accepted iterate."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


@dataclass
class DcProgram:
    """Convex parts in ``convex``; subtracted convex parts via evaluators.

    ``merit`` optionally replaces f0 - h0 as the monitored objective.  This
    is used when the caller refreshes weights between outer iterations
    (majorization-minimization), where the decreasing quantity is the
    function being majorized rather than the current weighted objective.
    """
    convex: QcqpProblem
    concave: Optional[BatchEvaluator] = None
    concave_objective: Optional[ScalarEvaluator] = None
    merit: Optional[Callable[[np.ndarray], float]] = None

    @property
    def n(self) -> int:
        return self.convex.n

    def objective_value(self, x) -> float:
        v = self.convex.objective_value(x)
        if self.concave_objective is not None:
            v -= self.concave_objective(x)[0]
        return float(v)

    def monitored_value(self, x) -> float:
        return float(self.merit(x)) if self.merit is not None else self.objective_value(x)

    def constraint_values(self, x) -> np.ndarray:
        v = self.convex.constraint_values(x)
        if self.concave is not None:
            v = v - self.concave(x)[0]
        return v

    def linearize(self, xt) -> QcqpProblem:
        """Convex subproblem with every h_i replaced by h_i(xt) + grad^T (x - xt)."""
        cv = self.convex
        q0, r0 = cv.q0, cv.r0
        if self.concave_objective is not None:
            h0, g0 = self.concave_objective(xt)
            q0 = q0 - g0
            r0 = r0 - h0 + g0 @ xt
        q, r = cv.q, cv.r
        if self.concave is not None:
            h, G = self.concave(xt)
            q = q - G
            r = r - h + G @ xt
        return cv.with_linear_terms(q0, r0, q, r)


def linearize_scalar(h: ScalarEvaluator, xt):
    """Affine minorant of a convex function at xt as a callable."""
    v, g = h(xt)
    xt = np.asarray(xt, dtype=float)
    return lambda x: v + g @ (np.asarray(x, dtype=float) - xt)


@dataclass
class CccpResult:
    x: np.ndarray
    trace: list                       # monitored objective, starting at x0
    iterations: int
    status: str                       # converged, max_outer, no_progress, stopped
    max_violation: list = field(default_factory=list)   # exact DC constraint value per iterate
    iterates: list = field(default_factory=list)
    qcqp_iterations: int = 0


def cccp_solve(dc: DcProgram, x0, rel_obj_tol: float = 1e-4, max_outer: int = 30,
               reweight: Optional[Callable[[np.ndarray, DcProgram], DcProgram]] = None,
               qcqp_tol: float = 1e-8, feas_tol: float = 1e-6,
               stop_when: Optional[Callable[[np.ndarray], bool]] = None,
               keep_iterates: bool = False, abs_obj_tol: float = 0.0) -> CccpResult:
    """Run CCCP from a feasible ``x0``.

    Parameters
    ----------
    reweight : callable(x, program) -> program, optional
        Called before every outer iteration after the first to refresh
        objective or constraint weights at the current iterate.
    stop_when : callable(x) -> bool, optional
        Early exit test evaluated on every accepted iterate.
    abs_obj_tol : float
        Absolute decrease below which the run also counts as converged.

    An iterate is accepted only if it does not increase the convex
    subproblem objective relative to the current point, which makes the
    monitored trace nonincreasing even when the inner solver stops a hair
    away from optimality.
    """
    x = np.array(x0, dtype=float)
    prog = dc
    val = prog.monitored_value(x)
    trace = [val]
    viol = [float(np.max(prog.constraint_values(x), initial=-np.inf))]
    iterates = [x.copy()] if keep_iterates else []
    status = "max_outer"
    total_its = 0
    it = 0
    if stop_when is not None and stop_when(x):
        result = CccpResult(x, trace, 0, "stopped", viol, iterates, 0)
        _notify(result, prog)
        return result
    for it in range(1, max_outer + 1):
        if reweight is not None and it > 1:
            prog = reweight(x, prog)
            val = prog.monitored_value(x)
        sub = prog.linearize(x)
        sol = solve_qcqp(sub, tol=qcqp_tol, x0=x)
        total_its += sol.iterations
        if sol.status == STATUS_INFEASIBLE:
            raise CccpError("convex subproblem reported infeasible at a feasible iterate", x)
        x_new = sol.x
        if sol.status != STATUS_OPTIMAL and sol.kkt_residuals["primal"] > qcqp_tol:
            status = "no_progress"
            it -= 1
            break
        cv = prog.constraint_values(x_new)
        worst = float(np.max(cv, initial=-np.inf))
        if worst > feas_tol:
            raise CccpError(f"iterate violates DC constraints by {worst:.3g}", x)
        if sub.objective_value(x_new) > sub.objective_value(x):
            status = "no_progress"
            it -= 1
            break
        new_val = prog.monitored_value(x_new)
        if new_val > val:
            status = "no_progress"
            it -= 1
            break
        x = x_new
        trace.append(new_val)
        viol.append(worst)
        if keep_iterates:
            iterates.append(x.copy())
        if stop_when is not None and stop_when(x):
            status = "stopped"
            break
        dec = val - new_val
        if dec <= rel_obj_tol * abs(val) or dec <= abs_obj_tol:
            status = "converged"
            break
        val = new_val
    result = CccpResult(x, trace, it, status, viol, iterates, total_its)
    _notify(result, prog)
    return result
