"""Complex-to-real lifting of vectors, Hermitian forms and complex QCQPs.

Conventions: a complex vector x maps to [Re x; Im x]; a Hermitian matrix A
maps to [[Re A, -Im A], [Im A, Re A]], so that x^H A x equals
lift(x)^T lift(A) lift(x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qcqp import QcqpProblem


def lift_vector(x) -> np.ndarray:
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag], axis=-1)


def unlift_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def lift_hermitian(A) -> np.ndarray:
    """Real symmetric lift; works on single matrices and on stacks (..., n, n)."""
    A = np.asarray(A)
    re, im = A.real, A.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def unlift_hermitian(X) -> np.ndarray:
    """Hermitian matrix closest (in the lift structure) to a real 2n x 2n matrix."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1] // 2
    re = 0.5 * (X[..., :n, :n] + X[..., n:, n:])
    im = 0.5 * (X[..., n:, :n] - X[..., :n, n:])
    return re + 1j * im


def is_hermitian(A, tol=1e-10) -> bool:
    A = np.asarray(A)
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    return bool(np.allclose(A, np.conj(np.swapaxes(A, -1, -2)), atol=tol * scale, rtol=0))


@dataclass(frozen=True)
class ComplexQuadForm:
    """x^H A x + 2 Re(b^H x) + c with A Hermitian."""
    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def value(self, x) -> float:
        x = np.asarray(x)
        return float(np.real(np.vdot(x, self.A @ x)) + 2.0 * np.real(np.vdot(self.b, x)) + self.c)


@dataclass(frozen=True)
class ComplexQcqp:
    objective: ComplexQuadForm
    constraints: Sequence[ComplexQuadForm] = field(default_factory=tuple)


def lift_form(form: ComplexQuadForm):
    if not is_hermitian(form.A):
        raise ValueError("quadratic form matrix must be Hermitian")
    b = np.asarray(form.b)
    return lift_hermitian(form.A), 2.0 * lift_vector(b), float(form.c)


def lift_complex(problem: ComplexQcqp, check_convexity: bool = True) -> QcqpProblem:
    """Real QCQP in 2n variables with identical objective and constraint values."""
    P0, q0, r0 = lift_form(problem.objective)
    n = q0.size
    if problem.constraints:
        lifted = [lift_form(c) for c in problem.constraints]
        P = np.stack([l[0] for l in lifted])
        q = np.stack([l[1] for l in lifted])
        r = np.array([l[2] for l in lifted])
    else:
        P, q, r = np.zeros((0, n, n)), np.zeros((0, n)), np.zeros(0)
    return QcqpProblem(P0, q0, r0, P, q, r, check_convexity=check_convexity)
