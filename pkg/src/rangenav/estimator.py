"""Sliding-window weighted least-squares state estimation.

One estimation window covers ``k_w + 1`` states ``x_0 .. x_{k_w}``. The
quadratic cost stacks three residual groups:

* prior residuals ``x_i - x^-_i`` for ``i in [0, k_w-1]``, weighted by
  ``P_inv`` (the prior sequence is the previous window's posterior),
* process residuals ``x_i - A^ell x_{i-1} - sum_j A^{ell-j} B u`` for
  ``i in [1, k_w]``, weighted by ``Q_inv``,
* measurement residuals ``r_i - C_i x_i`` (plus flow residuals
  ``v_i - x_v,i`` in ``srifo`` mode) for ``i in [1, k_w]``.

Writing the stacked residual as ``E_x x - E_theta theta`` the minimizer is
the solution of the normal equations ``(E_x^T W E_x) x = E_x^T W E_theta
theta``; the normal matrix is positive definite whenever ``P_inv`` and
``Q_inv`` are, independent of the measurement weights, which is what makes
zeroed measurement weights a safe fault-handling mechanism.

The window slides by ``stride`` samples per solve ("wriggling"): the prior
sequence is the shifted previous posterior, the range-direction rows ``C_i``
are re-used from the previous window, and only the newest row is built fresh
from a propagated prior. A polynomial change of variables ``x = T alpha``
(order ``k_t`` per state component) shrinks the normal matrix from
``2d(k_w+1)`` to ``2d(k_t+1)`` square.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, NamedTuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import InconsistentWindowError, SolverError
from .model import DiscreteModel, output_row, preintegration_blocks

MODES = ("srio", "srifo")
SENSORS = ("range", "flow")

#: Smallest acceptable normal-matrix eigenvalue relative to the largest.
SINGULARITY_RTOL = 1e-12


def _check_spd(name: str, m: NDArray[np.float64]) -> NDArray[np.float64]:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(m, m.T):
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(m) <= 0):
        raise ValueError(f"{name} must be positive definite")
    return m


@dataclass(frozen=True, eq=False)
class EstimatorConfig:
    """Window geometry, weights and mode of one estimator instance.

    Parameters
    ----------
    k_w: int
        Window size in range intervals; the window holds ``k_w + 1`` states.
        Must satisfy ``k_w >= 2d``.
    k_t: int
        Polynomial fitting order of the reduced solve, ``2 <= k_t <= k_w``.
    ell: int
        Pre-integration factor: acceleration samples per range interval.
    P_inv, Q_inv: ndarray, shape (2d, 2d)
        Per-step inverse covariances of the prior and the process; must be
        symmetric positive definite.
    R_inv_range: float
        Inverse covariance of the range measurement; ``0`` disables it
        (sensor fault).
    R_inv_flow: ndarray, shape (d, d)
        Inverse covariance of the flow velocity; all-zero disables it and
        degrades ``srifo`` to ``srio``.
    mode: {'srio', 'srifo'}
    stride: int
        Window advance per solve, in range samples.
    seed_output_row: {'propagate', 'copy'}
        How the newest range-direction row is produced: from a propagated
        prior (default) or by copying the previous row.
    scale_q_with_ell: bool
        If True, divide ``Q_inv`` by ``ell`` to model process noise
        accumulated over a pre-integrated interval. Off by default.
    """

    k_w: int
    k_t: int
    P_inv: NDArray[np.float64]
    Q_inv: NDArray[np.float64]
    R_inv_range: float = 1.0
    R_inv_flow: NDArray[np.float64] | None = None
    ell: int = 1
    mode: str = "srio"
    stride: int = 1
    seed_output_row: str = "propagate"
    scale_q_with_ell: bool = False
    _nominal_R_inv_range: float | None = None
    _nominal_R_inv_flow: NDArray[np.float64] | None = None

    def __post_init__(self):
        P_inv = _check_spd("P_inv", self.P_inv)
        Q_inv = _check_spd("Q_inv", self.Q_inv)
        object.__setattr__(self, "P_inv", P_inv)
        object.__setattr__(self, "Q_inv", Q_inv)
        d = P_inv.shape[0] // 2
        if P_inv.shape != (2 * d, 2 * d) or Q_inv.shape != (2 * d, 2 * d):
            raise ValueError("P_inv and Q_inv must both be 2d x 2d")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.k_w < 2 * d:
            raise ValueError(f"k_w must be >= 2d = {2 * d}")
        if not 2 <= self.k_t <= self.k_w:
            raise ValueError("k_t must satisfy 2 <= k_t <= k_w")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if not 1 <= self.stride <= self.k_w:
            raise ValueError("stride must be in [1, k_w]")
        if self.R_inv_range < 0:
            raise ValueError("R_inv_range must be >= 0")
        R_flow = self.R_inv_flow
        if R_flow is None:
            R_flow = np.eye(d)
        R_flow = np.asarray(R_flow, dtype=float)
        if R_flow.shape != (d, d):
            raise ValueError("R_inv_flow must be d x d")
        if not np.allclose(R_flow, R_flow.T) or np.any(np.linalg.eigvalsh(R_flow) < -1e-12):
            raise ValueError("R_inv_flow must be symmetric positive semi-definite")
        object.__setattr__(self, "R_inv_flow", R_flow)
        if self.seed_output_row not in ("propagate", "copy"):
            raise ValueError("seed_output_row must be 'propagate' or 'copy'")

    @property
    def d(self) -> int:
        return self.P_inv.shape[0] // 2

    @property
    def flow_active(self) -> bool:
        """True when flow residuals actually enter the cost."""
        return self.mode == "srifo" and bool(np.any(self.R_inv_flow != 0))


def set_fault(cfg: EstimatorConfig, sensor: str, faulty: bool) -> EstimatorConfig:
    """Return a config with one sensor's inverse covariance zeroed/restored.

    Zeroing the weight removes the sensor's influence while the normal
    matrix stays positive definite. Faulting ``flow`` in ``srifo`` mode makes
    the solve identical to ``srio`` on the same window. Un-faulting restores
    the value the config had when the fault was applied.
    """
    if sensor not in SENSORS:
        raise ValueError(f"sensor must be one of {SENSORS}")
    if sensor == "range":
        if faulty:
            if cfg._nominal_R_inv_range is not None:
                return cfg  # already faulted
            return replace(cfg, R_inv_range=0.0, _nominal_R_inv_range=cfg.R_inv_range)
        if cfg._nominal_R_inv_range is None:
            return cfg
        return replace(cfg, R_inv_range=cfg._nominal_R_inv_range, _nominal_R_inv_range=None)
    if faulty:
        if cfg._nominal_R_inv_flow is not None:
            return cfg
        return replace(
            cfg,
            R_inv_flow=np.zeros((cfg.d, cfg.d)),
            _nominal_R_inv_flow=cfg.R_inv_flow,
        )
    if cfg._nominal_R_inv_flow is None:
        return cfg
    return replace(cfg, R_inv_flow=cfg._nominal_R_inv_flow, _nominal_R_inv_flow=None)


@dataclass
class MeasurementWindow:
    """Time-aligned inputs for one solve.

    Attributes
    ----------
    priors: ndarray, shape (k_w, 2d)
        Prior estimates of states ``x_0 .. x_{k_w - 1}`` (the previous
        window's posterior, shifted by the stride).
    inputs: ndarray, shape (k_w * ell, d)
        Acceleration samples, ``ell`` per range interval, oldest first.
    ranges: ndarray, shape (k_w,)
        Range measurements for states ``x_1 .. x_{k_w}``; NaN marks a
        missing sample (its weight is zeroed).
    flows: ndarray, shape (k_w, d), optional
        Flow velocity measurements aligned with ``ranges``; NaN rows mark
        missing samples. Required in ``srifo`` mode unless flow is faulted.
    output_rows: ndarray, shape (k_w, 2d), optional
        Cached range-direction rows ``C_1 .. C_{k_w}``. When absent they are
        rebuilt from the priors (and a propagated prior for the newest row).
    """

    priors: NDArray[np.float64]
    inputs: NDArray[np.float64]
    ranges: NDArray[np.float64]
    flows: NDArray[np.float64] | None = None
    output_rows: NDArray[np.float64] | None = None


class AssembledSystem(NamedTuple):
    """Stacked residual system ``E = E_x x - E_theta theta`` with weight W."""

    E_x: NDArray[np.float64]
    E_theta: NDArray[np.float64]
    theta: NDArray[np.float64]
    W: NDArray[np.float64]


@dataclass(frozen=True)
class PolyCoefficients:
    """Reduced decision vector of the polynomial-fitted trajectory."""

    alpha: NDArray[np.float64]
    t0: float
    dt_grid: float


@dataclass
class SolveReport:
    """Result of one window solve.

    ``states`` holds the ``k_w + 1`` estimated states, one ``[p, v]`` row
    each. ``min_eig_WT`` is the smallest eigenvalue of the normal matrix
    actually solved and ``spectral_radius`` the contraction factor of the
    prior-error propagation operator (< 1 for a convergent estimator).
    ``solve_time`` covers assembly and solve, not the diagnostics.
    """

    states: NDArray[np.float64]
    alpha: PolyCoefficients | None
    min_eig_WT: float
    spectral_radius: float
    solve_time: float


def _effective_q_inv(cfg: EstimatorConfig) -> NDArray[np.float64]:
    return cfg.Q_inv / cfg.ell if cfg.scale_q_with_ell else cfg.Q_inv


def _window_output_rows(
    window: MeasurementWindow, cfg: EstimatorConfig, model: DiscreteModel
) -> NDArray[np.float64]:
    """Range-direction rows C_1..C_{k_w}, built from priors when not cached."""
    if window.output_rows is not None:
        rows = np.asarray(window.output_rows, dtype=float)
        if rows.shape != (cfg.k_w, 2 * cfg.d):
            raise InconsistentWindowError(f"output_rows shape {rows.shape}")
        return rows
    rows = np.empty((cfg.k_w, 2 * cfg.d))
    for i in range(cfg.k_w - 1):
        rows[i] = output_row(window.priors[i + 1, : cfg.d])
    if cfg.seed_output_row == "copy" and cfg.k_w >= 2:
        rows[cfg.k_w - 1] = rows[cfg.k_w - 2]
    else:
        A_eff, blocks = preintegration_blocks(model, cfg.ell)
        newest = A_eff @ window.priors[-1] + np.einsum(
            "jnd,jd->n", blocks, window.inputs[-cfg.ell :]
        )
        rows[cfg.k_w - 1] = output_row(newest[: cfg.d])
    return rows


def assemble_system(
    window: MeasurementWindow, cfg: EstimatorConfig, model: DiscreteModel
) -> AssembledSystem:
    """Stack the prior / process / measurement blocks for one window.

    Returns
    -------
    AssembledSystem
        ``E_x`` has ``(4d+1) k_w`` rows in ``srio`` mode and ``(5d+1) k_w``
        rows in ``srifo`` mode, by ``2d (k_w + 1)`` columns. ``W`` is the
        block-diagonal weight. NaN measurements contribute value 0 at
        weight 0.

    Raises
    ------
    InconsistentWindowError
        If array shapes disagree with the config.
    """
    d, n, kw, ell = cfg.d, 2 * cfg.d, cfg.k_w, cfg.ell
    if model.d != d:
        raise InconsistentWindowError("model dimension disagrees with config")
    priors = np.asarray(window.priors, dtype=float)
    inputs = np.asarray(window.inputs, dtype=float)
    ranges = np.asarray(window.ranges, dtype=float)
    if priors.shape != (kw, n):
        raise InconsistentWindowError(f"priors shape {priors.shape}, expected {(kw, n)}")
    if inputs.shape != (kw * ell, d):
        raise InconsistentWindowError(f"inputs shape {inputs.shape}, expected {(kw * ell, d)}")
    if ranges.shape != (kw,):
        raise InconsistentWindowError(f"ranges shape {ranges.shape}, expected {(kw,)}")

    flow_active = cfg.flow_active
    flows = None
    if flow_active:
        if window.flows is None:
            raise InconsistentWindowError("srifo mode requires flow measurements")
        flows = np.asarray(window.flows, dtype=float)
        if flows.shape != (kw, d):
            raise InconsistentWindowError(f"flows shape {flows.shape}, expected {(kw, d)}")

    C_rows = _window_output_rows(window, cfg, model)
    A_eff, B_blocks = preintegration_blocks(model, cfg.ell)

    n_meas = kw * (1 + d) if flow_active else kw
    rows_total = 2 * n * kw + n_meas
    cols_x = n * (kw + 1)
    cols_theta = n * kw + d * kw * ell + n_meas

    E_x = np.zeros((rows_total, cols_x))
    E_theta = np.zeros((rows_total, cols_theta))
    theta = np.zeros(cols_theta)
    W = np.zeros((rows_total, rows_total))

    # prior block: picks x_0 .. x_{k_w-1}
    idx = np.arange(n * kw)
    E_x[idx, idx] = 1.0
    E_theta[idx, idx] = 1.0
    theta[: n * kw] = priors.ravel()
    Q_inv = _effective_q_inv(cfg)
    for i in range(kw):
        W[i * n : (i + 1) * n, i * n : (i + 1) * n] = cfg.P_inv

    # process block: x_{i+1} - A^ell x_i - sum_j A^{ell-1-j} B u_{i*ell+j}
    theta[n * kw : n * kw + d * kw * ell] = inputs.ravel()
    for i in range(kw):
        r0 = n * kw + i * n
        E_x[r0 : r0 + n, i * n : (i + 1) * n] = -A_eff
        E_x[r0 : r0 + n, (i + 1) * n : (i + 2) * n] = np.eye(n)
        for j in range(ell):
            c0 = n * kw + (i * ell + j) * d
            E_theta[r0 : r0 + n, c0 : c0 + d] = B_blocks[j]
        W[r0 : r0 + n, r0 : r0 + n] = Q_inv

    # measurement block: ranges (and flows) for x_1 .. x_{k_w}
    m0 = 2 * n * kw
    t0 = n * kw + d * kw * ell
    range_vals = np.where(np.isnan(ranges), 0.0, ranges)
    range_w = np.where(np.isnan(ranges), 0.0, cfg.R_inv_range)
    if not flow_active:
        for i in range(kw):
            E_x[m0 + i, (i + 1) * n : (i + 2) * n] = C_rows[i]
            E_theta[m0 + i, t0 + i] = 1.0
            theta[t0 + i] = range_vals[i]
            W[m0 + i, m0 + i] = range_w[i]
    else:
        flow_missing = np.any(np.isnan(flows), axis=1)
        flow_vals = np.where(np.isnan(flows), 0.0, flows)
        for i in range(kw):
            r0 = m0 + i * (1 + d)
            c0 = t0 + i * (1 + d)
            E_x[r0, (i + 1) * n : (i + 2) * n] = C_rows[i]
            E_x[r0 + 1 : r0 + 1 + d, (i + 1) * n + d : (i + 2) * n] = np.eye(d)
            E_theta[r0 : r0 + 1 + d, c0 : c0 + 1 + d] = np.eye(1 + d)
            theta[c0] = range_vals[i]
            theta[c0 + 1 : c0 + 1 + d] = flow_vals[i]
            W[r0, r0] = range_w[i]
            if not flow_missing[i]:
                W[r0 + 1 : r0 + 1 + d, r0 + 1 : r0 + 1 + d] = cfg.R_inv_flow
    return AssembledSystem(E_x, E_theta, theta, W)


def build_basis(k_w: int, k_t: int, dt_grid: float, d: int) -> NDArray[np.float64]:
    """Polynomial basis T mapping coefficients to the stacked state sequence.

    Component ``j`` of the state at grid index ``i`` is the order-``k_t``
    polynomial ``sum_m s_i^m alpha_{j,m}`` with ``s_i = i / k_w``: grid
    times are measured from the window start and normalized by the window
    span so high orders stay well conditioned.

    Returns
    -------
    ndarray, shape (2d (k_w+1), 2d (k_t+1))
        Full column rank; square and invertible when ``k_t == k_w``.
    """
    if k_t > k_w:
        raise ValueError("k_t must be <= k_w")
    if k_t < 0:
        raise ValueError("k_t must be >= 0")
    if dt_grid <= 0:
        raise ValueError("dt_grid must be > 0")
    s = np.arange(k_w + 1) / k_w
    V = s[:, None] ** np.arange(k_t + 1)[None, :]  # (k_w+1, k_t+1)
    n = 2 * d
    T = np.zeros((n * (k_w + 1), n * (k_t + 1)))
    for j in range(n):
        T[j::n, j * (k_t + 1) : (j + 1) * (k_t + 1)] = V
    return T


def _prior_information(cfg: EstimatorConfig, cols: int) -> NDArray[np.float64]:
    """I_A^T P^{-1} I_A: the prior-block information on the stacked states."""
    n, kw = 2 * cfg.d, cfg.k_w
    S = np.zeros((cols, cols))
    for i in range(kw):
        S[i * n : (i + 1) * n, i * n : (i + 1) * n] = cfg.P_inv
    return S


def _spd_solve(M: NDArray[np.float64], rhs: NDArray[np.float64]):
    try:
        c, low = scipy.linalg.cho_factor(M, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SolverError(f"normal matrix not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)


def _diagnostics(
    cfg: EstimatorConfig, M: NDArray[np.float64], S: NDArray[np.float64]
) -> tuple[float, float]:
    eigs = np.linalg.eigvalsh(M)
    if eigs[0] <= SINGULARITY_RTOL * eigs[-1]:
        raise SolverError(f"normal matrix numerically singular (min eig {eigs[0]:.3g})")
    rho = float(scipy.linalg.eigh(S, M, eigvals_only=True)[-1])
    return float(eigs[0]), rho


def solve_full(
    window: MeasurementWindow, cfg: EstimatorConfig, model: DiscreteModel
) -> SolveReport:
    """Minimize the window cost over the full stacked state sequence.

    The normal matrix is ``2d (k_w+1)`` square and positive definite for any
    valid config, so the minimizer exists uniquely even with all measurement
    weights zeroed.
    """
    tic = time.perf_counter()
    E_x, E_theta, theta, W = assemble_system(window, cfg, model)
    WE = E_x.T @ (W @ E_x)
    rhs = E_x.T @ (W @ (E_theta @ theta))
    xhat = _spd_solve(WE, rhs)
    toc = time.perf_counter()
    S = _prior_information(cfg, E_x.shape[1])
    min_eig, rho = _diagnostics(cfg, WE, S)
    states = xhat.reshape(cfg.k_w + 1, 2 * cfg.d)
    return SolveReport(states, None, min_eig, rho, toc - tic)


def solve_reduced(
    window: MeasurementWindow, cfg: EstimatorConfig, model: DiscreteModel
) -> SolveReport:
    """Minimize the window cost over polynomial coefficients.

    Substituting ``x = T alpha`` shrinks the normal matrix to
    ``2d (k_t+1)`` square; the estimated states are ``T alpha_hat``. The
    normal matrix inherits positive definiteness through T's full column
    rank. With ``k_t == k_w`` this reproduces :func:`solve_full` exactly.
    """
    tic = time.perf_counter()
    E_x, E_theta, theta, W = assemble_system(window, cfg, model)
    dt_grid = model.dt * cfg.ell
    T = build_basis(cfg.k_w, cfg.k_t, dt_grid, cfg.d)
    E_T = E_x @ T
    WT = E_T.T @ (W @ E_T)
    rhs = E_T.T @ (W @ (E_theta @ theta))
    alpha = _spd_solve(WT, rhs)
    xhat = T @ alpha
    toc = time.perf_counter()
    S = _prior_information(cfg, E_x.shape[1])
    min_eig, rho = _diagnostics(cfg, WT, T.T @ S @ T)
    states = xhat.reshape(cfg.k_w + 1, 2 * cfg.d)
    coeffs = PolyCoefficients(alpha=alpha, t0=0.0, dt_grid=dt_grid)
    return SolveReport(states, coeffs, min_eig, rho, toc - tic)


def check_convergence(
    cfg: EstimatorConfig,
    model: DiscreteModel,
    window: MeasurementWindow,
    reduced: bool = True,
) -> float:
    """Spectral radius of the prior-error propagation operator.

    A deviation in the prior sequence maps to a posterior deviation through
    ``M = W_E^{-1} (I_A^T P^{-1} I_A)`` (full solve) or its basis-projected
    counterpart (reduced solve); the estimator contracts prior errors iff
    the spectral radius of ``M`` is below one.
    """
    E_x, _, _, W = assemble_system(window, cfg, model)
    S = _prior_information(cfg, E_x.shape[1])
    if reduced:
        T = build_basis(cfg.k_w, cfg.k_t, model.dt * cfg.ell, cfg.d)
        E_T = E_x @ T
        M = E_T.T @ (W @ E_T)
        S = T.T @ S @ T
    else:
        M = E_x.T @ (W @ E_x)
    return float(scipy.linalg.eigh(S, M, eigvals_only=True)[-1])


def remainder_factor(mu_i: float, t_bar: float, k_t: int) -> float:
    """Worst-case Taylor factor ``(mu t*)^(k_t+1) / (k_t+1)!``.

    ``t*`` saturates at ``(k_t+1)/mu`` where the factor peaks; the
    exponential damping term is bounded by one (worst case).
    """
    if mu_i <= 0 or t_bar <= 0:
        raise ValueError("mu_i and t_bar must be > 0")
    t_star = min(t_bar, (k_t + 1) / mu_i)
    return (mu_i * t_star) ** (k_t + 1) / math.factorial(k_t + 1)


def remainder_bound(mu_i: float, t_bar: float, k_t: int, v0: float, M_u: float) -> float:
    """Upper bound on the position error of an order-``k_t`` polynomial fit.

    Over a horizon ``t_bar``, per axis, for initial speed ``v0`` and input
    bound ``M_u``:

    ``bound = M_h (|v0| t_bar + M_u t_bar^2 / 2)``

    with ``M_h`` from :func:`remainder_factor`. The bound shrinks
    factorially in ``k_t`` while ``mu t_bar`` stays moderate, which is what
    justifies low fitting orders over windows of a couple of seconds.
    """
    M_h = remainder_factor(mu_i, t_bar, k_t)
    return M_h * (abs(v0) * t_bar + 0.5 * M_u * t_bar**2)


class StreamRecord(NamedTuple):
    """One range-rate sample of the measurement stream.

    ``accel`` holds the ``ell`` acceleration samples covering the interval
    since the previous record (ignored on the first record). ``range_`` and
    ``flow`` may be NaN / contain NaN to mark dropouts.
    """

    t: float
    accel: NDArray[np.float64]
    range_: float
    flow: NDArray[np.float64] | None = None


@dataclass
class Estimate:
    """One emitted posterior state."""

    t: float
    state: NDArray[np.float64]
    report: SolveReport
    range_ok: bool
    flow_ok: bool


def wriggle(
    stream: Iterable[StreamRecord],
    cfg: EstimatorConfig,
    model: DiscreteModel,
    x0: ArrayLike,
    reduced: bool = True,
) -> Iterator[Estimate]:
    """Run the stepping-window estimator over a measurement stream.

    The first ``k_w`` priors are dead-reckoned from ``x0`` through the
    process model using the measured accelerations; afterwards each solve's
    posterior (shifted by the stride) seeds the next window's priors, and
    cached range-direction rows are re-used with only the newest rows built
    from propagated priors. Yields one estimate per stride: the newest
    posterior state of each solve.

    Parameters
    ----------
    stream: iterable of StreamRecord
        Time-ordered records at the range sampling rate.
    cfg: EstimatorConfig
    model: DiscreteModel
    x0: array-like, shape (2d,)
        Initial state guess in anchor-centered coordinates.
    reduced: bool
        Solve in the polynomial basis (default) or in full dimension.
    """
    d, n, kw, ell, stride = cfg.d, 2 * cfg.d, cfg.k_w, cfg.ell, cfg.stride
    solve = solve_reduced if reduced else solve_full
    A_eff, B_blocks = preintegration_blocks(model, ell)

    def propagate(x: NDArray[np.float64], accel: NDArray[np.float64]) -> NDArray[np.float64]:
        u = np.where(np.isnan(accel), 0.0, accel)
        return A_eff @ x + np.einsum("jnd,jd->n", B_blocks, u)

    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},)")

    # ring buffers aligned with the last k_w + 1 records
    times: list[float] = []
    accels: list[NDArray[np.float64]] = []
    ranges: list[float] = []
    flows: list[NDArray[np.float64]] = []
    # best state estimate per buffered record (posterior, else propagated)
    track: list[NDArray[np.float64]] = []
    # cached range-direction rows for buffered records 1..k_w
    rows: list[NDArray[np.float64]] = []
    since_solve = 0
    started = False

    for rec in stream:
        accel = np.asarray(rec.accel, dtype=float) if rec.accel is not None else np.zeros((ell, d))
        if accel.shape == (d,) and ell == 1:
            accel = accel[None, :]
        if accel.shape != (ell, d):
            raise InconsistentWindowError(f"accel block shape {accel.shape}, expected {(ell, d)}")
        flow = np.full(d, np.nan) if rec.flow is None else np.asarray(rec.flow, dtype=float)

        if not track:
            track.append(x0.copy())
        else:
            track.append(propagate(track[-1], accel))
            if cfg.seed_output_row == "copy" and started and rows:
                rows.append(rows[-1].copy())
            else:
                rows.append(output_row(track[-1][:d]))
        times.append(rec.t)
        accels.append(accel)
        ranges.append(np.nan if rec.range_ is None else float(rec.range_))
        flows.append(flow)
        if len(times) > kw + 1:
            for buf in (times, accels, ranges, flows, track):
                buf.pop(0)
            rows.pop(0)
        if len(times) < kw + 1:
            continue
        since_solve += 1
        if started and since_solve < stride:
            continue
        since_solve = 0
        started = True

        window = MeasurementWindow(
            priors=np.vstack(track[:kw]),
            inputs=np.concatenate(accels[1:], axis=0),
            ranges=np.asarray(ranges[1:]),
            flows=np.vstack(flows[1:]) if cfg.flow_active else None,
            output_rows=np.vstack(rows),
        )
        report = solve(window, cfg, model)
        for i in range(kw + 1):
            track[i] = report.states[i]

        yield Estimate(
            t=times[-1],
            state=report.states[-1].copy(),
            report=report,
            range_ok=not np.isnan(ranges[-1]),
            flow_ok=not np.any(np.isnan(flows[-1])),
        )
