"""Nonlinear observability analysis for range-only and range+flow outputs.

The system is locally weakly observable at a state iff the matrix stacking
the gradients of successive Lie derivatives of the output has full rank 2d.
Both matrix constructors below use closed-form derivative expressions of the
drag-augmented dynamics; rank and conditioning are evaluated numerically
through the singular values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DegeneratePositionError
from .model import DEGENERATE_POSITION_EPS, StateVector, _as_vector

#: Default condition-number threshold above which a sample counts as quasi-static.
QUASI_STATIC_CONDITION = 1e6


@dataclass(frozen=True)
class ObservabilityReport:
    """Rank / conditioning summary of one observability matrix.

    Attributes
    ----------
    matrix: ndarray
        The assembled matrix (rows are gradient rows of Lie derivatives).
    numerical_rank: int
        Rank at tolerance ``max(rows, cols) * sigma_max * 1e-10``.
    condition_number: float
        Ratio of extreme singular values; ``inf`` when rank-deficient.
    observable: bool
        True iff ``numerical_rank == 2d``.
    flagged: bool
        Set by :func:`observability_timeline` when the condition number
        exceeds the quasi-static threshold.
    """

    matrix: NDArray[np.float64]
    numerical_rank: int
    condition_number: float
    observable: bool
    flagged: bool = False


def _report(matrix: NDArray[np.float64], d: int, flagged: bool = False) -> ObservabilityReport:
    sv = np.linalg.svd(matrix, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    tol = max(matrix.shape) * smax * 1e-10
    rank = int(np.sum(sv > tol))
    full = min(matrix.shape)
    cond = float(sv[0] / sv[full - 1]) if rank == full and smax > 0 else float("inf")
    return ObservabilityReport(
        matrix=matrix,
        numerical_rank=rank,
        condition_number=cond,
        observable=rank == 2 * d,
        flagged=flagged,
    )


def _unpack(x: StateVector, u: ArrayLike, mu: ArrayLike):
    p = x.p
    v = x.v
    u = _as_vector(u, "u")
    mu = _as_vector(mu, "mu")
    if u.size != x.d or mu.size != x.d:
        raise ValueError("u and mu must match the state dimension")
    return p, v, u, mu


def lie_derivatives_srio(
    x: StateVector, u: ArrayLike, mu: ArrayLike, order: int = 6
) -> list[float]:
    """Lie derivatives of the squared-range output ``h = ||p||^2 / 2``.

    Closed forms up to order 6, with ``w = u - mu v``::

        L0 = p.p/2                 L4 = (3u - 7 mu v + mu^2 p) . w
        L1 = p.v                   L5 = (15 mu^2 v - 10 mu u - mu^3 p) . w
        L2 = v.v + p.w             L6 = (25 mu^2 u - 31 mu^3 v + mu^4 p) . w
        L3 = (3v - mu p) . w

    Returns the list ``[L0, ..., L_order]``.
    """
    if not 0 <= order <= 6:
        raise ValueError("order must be in [0, 6]")
    p, v, u, mu = _unpack(x, u, mu)
    w = u - mu * v
    vals = [
        0.5 * float(p @ p),
        float(p @ v),
        float(v @ v + p @ w),
        float((3 * v - mu * p) @ w),
        float((3 * u - 7 * mu * v + mu**2 * p) @ w),
        float((15 * mu**2 * v - 10 * mu * u - mu**3 * p) @ w),
        float((25 * mu**2 * u - 31 * mu**3 * v + mu**4 * p) @ w),
    ]
    return vals[: order + 1]


def lie_derivatives_srifo(
    x: StateVector, u: ArrayLike, mu: ArrayLike, order: int = 3
) -> list[NDArray[np.float64]]:
    """Lie derivatives of the stacked output ``[||p||^2 / 2; v]``.

    Vector-valued closed forms up to order 3; the first component follows
    :func:`lie_derivatives_srio` and the velocity component differentiates
    to ``(-mu)^(k-1) (u - mu v)`` for k >= 1.
    """
    if not 0 <= order <= 3:
        raise ValueError("order must be in [0, 3]")
    p, v, u, mu = _unpack(x, u, mu)
    w = u - mu * v
    range_part = lie_derivatives_srio(x, u, mu, order=min(order, 3))
    flow_part = [v, w, -mu * w, mu**2 * w]
    return [np.concatenate([[range_part[k]], flow_part[k]]) for k in range(order + 1)]


def observability_matrix_srio(
    x: StateVector, u: ArrayLike, mu: ArrayLike
) -> ObservabilityReport:
    """Observability matrix of the range-only (SRIO) system.

    Stacks the gradient rows of the Lie derivatives L0..L5 of the
    squared-range output: six rows by 2d columns. Generic states with
    ``mu > 0`` are full rank; with ``mu = 0`` the last two rows vanish and
    the rank cannot exceed 4.
    """
    p, v, u, mu = _unpack(x, u, mu)
    if np.linalg.norm(p) < DEGENERATE_POSITION_EPS:
        raise DegeneratePositionError("observability undefined at the anchor")
    w = u - mu * v
    rows = np.vstack(
        [
            np.concatenate([p, np.zeros_like(p)]),
            np.concatenate([v, p]),
            np.concatenate([w, 2 * v - mu * p]),
            np.concatenate([-mu * w, 3 * u - 6 * mu * v + mu**2 * p]),
            np.concatenate([mu**2 * w, -10 * mu * u + 14 * mu**2 * v - mu**3 * p]),
            np.concatenate([-(mu**3) * w, 25 * mu**2 * u - 30 * mu**3 * v + mu**4 * p]),
        ]
    )
    return _report(rows, x.d)


def observability_matrix_srifo(
    x: StateVector, u: ArrayLike, mu: ArrayLike
) -> ObservabilityReport:
    """Observability matrix of the range + flow-velocity (SRIFO) system.

    Block rows: ``[p^T 0]``, ``[0 I]``, ``[v^T p^T]``, ``[0 -mu]`` and the
    second-order range row ``[(u - mu v)^T  (2v - mu p)^T]``; (2d+3) rows by
    2d columns. Full rank for any p != 0, including ``mu = 0``.
    """
    p, v, u, mu = _unpack(x, u, mu)
    if np.linalg.norm(p) < DEGENERATE_POSITION_EPS:
        raise DegeneratePositionError("observability undefined at the anchor")
    d = x.d
    w = u - mu * v
    rows = np.vstack(
        [
            np.concatenate([p, np.zeros(d)])[None, :],
            np.hstack([np.zeros((d, d)), np.eye(d)]),
            np.concatenate([v, p])[None, :],
            np.hstack([np.zeros((d, d)), -np.diag(mu)]),
            np.concatenate([w, 2 * v - mu * p])[None, :],
        ]
    )
    return _report(rows, d)


def observability_timeline(
    trajectory,
    mu: ArrayLike,
    mode: str = "srio",
    condition_threshold: float = QUASI_STATIC_CONDITION,
) -> list[ObservabilityReport]:
    """Per-sample observability reports along a trajectory.

    Parameters
    ----------
    trajectory: iterable of (StateVector, u) pairs
    mu: array-like
        Diagonal drag coefficients.
    mode: {'srio', 'srifo'}
    condition_threshold: float
        Samples whose condition number exceeds this are flagged as
        quasi-static (degraded degree of observability).
    """
    build = observability_matrix_srio if mode == "srio" else observability_matrix_srifo
    reports = []
    for x, u in trajectory:
        rep = build(x, u, mu)
        if rep.condition_number > condition_threshold:
            rep = ObservabilityReport(
                matrix=rep.matrix,
                numerical_rank=rep.numerical_rank,
                condition_number=rep.condition_number,
                observable=rep.observable,
                flagged=True,
            )
        reports.append(rep)
    if not reports:
        raise ValueError("trajectory must be nonempty")
    return reports
