"""Discretized integral operators B, R, Q on the nodes of T and the solve against B."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .grid import FreqGrid, TimeGrid, kernel_table
from .model import floored_sum

__all__ = ["OperatorSet", "SolveError", "assemble_operators", "solve_B", "COND_LIMIT"]

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12


class SolveError(ArithmeticError):
    """B could not be factorized, even with the Tikhonov fallback."""


@dataclass(frozen=True)
class OperatorSet:
    """Dense operator matrices over all nodes of the time grid.

    Entry ``(j, k)`` is ``w_k * kernel(t_k -/+ t_j)``; on a uniform lattice the
    weights are one constant so the matrices are symmetric.  The equation for the
    dual function is posed on the sub-block ``unknown`` (the nodes of T).
    """

    B: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    time: TimeGrid
    cond: float
    min_eig: float

    @property
    def unknown(self) -> np.ndarray:
        return self.time.unknown

    @property
    def B_T(self) -> np.ndarray:
        u = self.unknown
        return self.B[np.ix_(u, u)]


def _lag_matrix(idx: np.ndarray, table: np.ndarray, plus: bool) -> np.ndarray:
    lag = idx[None, :] + idx[:, None] if plus else idx[None, :] - idx[:, None]
    return table[lag % table.size]


def assemble_operators(fvals, gvals, time: TimeGrid, freq: FreqGrid) -> OperatorSet:
    """Assemble B (ratio ``1/(f+g)``), R (``f/(f+g)``, lag ``t+u``) and Q (``fg/(f+g)``)."""
    fvals = np.asarray(fvals, dtype=float)
    gvals = np.asarray(gvals, dtype=float)
    s = floored_sum(fvals, gvals)
    k_b = kernel_table(1.0 / s, freq)
    k_r = kernel_table(fvals / s, freq)
    k_q = kernel_table(fvals * gvals / s, freq)
    w = time.step
    B = w * _lag_matrix(time.index, k_b, plus=False)
    R = w * _lag_matrix(time.index, k_r, plus=True)
    Q = w * _lag_matrix(time.index, k_q, plus=False)
    if not (np.all(np.isfinite(B)) and np.all(np.isfinite(R)) and np.all(np.isfinite(Q))):
        raise SolveError("non-finite operator entries")
    u = time.unknown
    if u.any():
        eig = linalg.eigvalsh(B[np.ix_(u, u)])
        min_eig, max_eig = float(eig[0]), float(eig[-1])
        cond = max_eig / min_eig if min_eig > 0 else np.inf
    else:
        min_eig, cond = np.inf, 1.0
    return OperatorSet(B=B, R=R, Q=Q, time=time, cond=cond, min_eig=min_eig)


@dataclass(frozen=True)
class SolveInfo:
    regularized: bool
    ridge: float
    residual: float


def solve_B(ops: OperatorSet, rhs) -> tuple[np.ndarray, SolveInfo]:
    """Solve ``B_T x = rhs`` on the nodes of T by Cholesky.

    When the condition estimate exceeds ``COND_LIMIT`` a ridge
    ``1e-10 * trace(B_T) / n`` is added and the returned info is flagged.
    """
    rhs = np.asarray(rhs, dtype=float)
    bt = ops.B_T
    n = bt.shape[0]
    if rhs.shape != (n,):
        raise ValueError(f"rhs must have shape ({n},)")
    if n == 0:
        return np.zeros(0), SolveInfo(False, 0.0, 0.0)
    ridge = 0.0
    if not np.isfinite(ops.cond) or ops.cond > COND_LIMIT:
        ridge = 1e-10 * np.trace(bt) / n
        logger.warning("B is ill-conditioned (cond %.3g); adding ridge %.3g", ops.cond, ridge)
    try:
        factor = linalg.cho_factor(bt + ridge * np.eye(n), lower=True)
    except linalg.LinAlgError as exc:
        raise SolveError("B is not positive definite") from exc
    x = linalg.cho_solve(factor, rhs)
    # one step of refinement keeps the residual near machine precision
    x += linalg.cho_solve(factor, rhs - bt @ x - ridge * x)
    scale = np.linalg.norm(rhs)
    resid = float(np.linalg.norm(bt @ x - rhs) / scale) if scale > 0 else 0.0
    return x, SolveInfo(ridge > 0, ridge, resid)
