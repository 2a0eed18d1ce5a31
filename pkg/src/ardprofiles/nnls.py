"""Nonnegative least squares by the Lawson-Hanson active-set method."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import ValidationError


class NnlsIterationError(ValidationError):
    """Iteration cap reached before convergence (suspected cycling).

    Carries the best iterate found so far in ``result``.
    """

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class NnlsResult:
    """Solution of min ||Ax - b|| subject to x >= 0.

    Attributes
    ----------
    x : ndarray
        The minimizer.
    residual_norm : float
        ||Ax - b||_2 at the solution.
    active : ndarray of bool
        True for coordinates held at zero (the active constraints).
    kkt_gap : float
        Largest violation of the stationarity conditions: for free
        coordinates |A^T(Ax - b)|_j, for active ones max(0, -[A^T(Ax-b)]_j).
        Zero (to rounding) certifies optimality.
    iterations : int
        Number of passive-set changes performed.
    """

    x: np.ndarray
    residual_norm: float
    active: np.ndarray
    kkt_gap: float
    iterations: int


def kkt_gap(A, b, x, tol_active=0.0):
    """Max KKT violation of a candidate x >= 0 for min ||Ax - b||.

    Coordinates with x_j > tol_active are treated as free and must have
    zero gradient; the rest must have nonnegative gradient.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    grad = A.T @ (A @ x - b)
    free = x > tol_active
    gap = 0.0
    if np.any(free):
        gap = float(np.max(np.abs(grad[free])))
    if np.any(~free):
        gap = max(gap, float(np.max(-np.minimum(grad[~free], 0.0))))
    return gap


def nnls_solve(A, b, max_iter=None, tol=None) -> NnlsResult:
    """Solve min ||Ax - b||_2 subject to x >= 0.

    Active-set iteration of Lawson and Hanson (Solving Least Squares
    Problems, 1974, chapter 23).  The passive set P starts empty; each
    outer step moves the most negative-gradient coordinate into P, solves
    the unconstrained problem on P, and walks back along the segment to
    the previous iterate whenever the new solution leaves the positive
    orthant, dropping the coordinates that hit zero.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    max_iter : int, optional
        Cap on inner least-squares solves; default ``3 * n``.
    tol : float, optional
        Gradient threshold for entering the passive set; default
        ``10 * eps * ||A||_1 * max(m, n)`` as in the reference
        implementations.

    Returns
    -------
    NnlsResult
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError("A must be a matrix")
    if b.ndim != 1 or b.shape[0] != A.shape[0]:
        raise ValidationError("b must be a vector with one entry per row of A")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValidationError("nnls inputs must be finite")
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n
    if tol is None:
        tol = 10.0 * np.finfo(float).eps * np.abs(A).sum(axis=0).max() * max(m, n)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    grad = A.T @ b                       # -gradient of 0.5||Ax-b||^2 at x=0
    iterations = 0

    while iterations < max_iter:
        candidates = ~passive & (grad > tol)
        if not np.any(candidates):
            break
        j = int(np.argmax(np.where(candidates, grad, -np.inf)))
        passive[j] = True

        while True:
            iterations += 1
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx], *_ = np.linalg.lstsq(A[:, idx], b, rcond=None)
            if np.all(z[idx] > 0):
                x = z
                break
            # Backtrack to the boundary and release the blocking coordinates.
            blocked = idx[z[idx] <= 0]
            alpha = np.min(x[blocked] / (x[blocked] - z[blocked]))
            x = x + alpha * (z - x)
            released = passive & (x <= 0)
            passive[released] = False
            x[released] = 0.0
            if iterations >= max_iter:
                break

        grad = A.T @ (b - A @ x)

    resid = float(np.linalg.norm(A @ x - b))
    result = NnlsResult(x=x, residual_norm=resid, active=~passive,
                        kkt_gap=kkt_gap(A, b, x), iterations=iterations)
    if iterations >= max_iter and np.any(~passive & (grad > tol)):
        raise NnlsIterationError(
            f"no convergence within {max_iter} iterations "
            "(cycling suspected); best iterate attached", result)
    return result
