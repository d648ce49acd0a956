"""Lawson-Hanson active-set solver for ``min ||Ax - b||_2  s.t.  x >= 0``."""

from __future__ import annotations

import numpy as np


def nnls(A, b, rtol: float = 1e-10, max_iter: int = None):
    """Solve the non-negative least squares problem.

    Args:
        A: (m, n) matrix.
        b: length-m right-hand side.
        rtol: stop once the largest dual variable ``A^T (b - Ax)`` over the
            zero set is below ``rtol * ||b||``.
        max_iter: cap on outer iterations; defaults to ``3 n``.

    Returns:
        ``(x, rnorm)`` with ``rnorm = ||Ax - b||``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise ValueError("expected A of shape (m, n) and b of shape (m,)")
    m, n = A.shape
    max_iter = 3 * n if max_iter is None else max_iter
    tol = rtol * np.linalg.norm(b)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    it = 0
    while (~passive).any() and np.max(np.where(passive, -np.inf, w)) > tol:
        if it >= max_iter:
            raise RuntimeError("nnls did not converge")
        it += 1
        passive[int(np.argmax(np.where(passive, -np.inf, w)))] = True
        while True:
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                break
            # step back toward x until the first passive variable hits zero
            neg = passive & (z <= 0)
            ratios = x[neg] / (x[neg] - z[neg])
            alpha = ratios.min()
            x = x + alpha * (z - x)
            hit = np.flatnonzero(neg)[np.argmin(ratios)]
            x[hit] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
        x = z
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


def kkt_violation(A, b, x) -> float:
    """Largest violation of the NNLS optimality conditions at ``x``.

    With gradient g = A^T (Ax - b): free variables need g = 0, variables at
    zero need g >= 0, and x must be non-negative.
    """
    A = np.asarray(A, dtype=float)
    g = A.T @ (A @ x - np.asarray(b, dtype=float))
    free = x > 0
    worst = max(0.0, -float(np.min(x)) if len(x) else 0.0)
    if free.any():
        worst = max(worst, float(np.max(np.abs(g[free]))))
    if (~free).any():
        worst = max(worst, float(np.max(-g[~free])))
    return worst
