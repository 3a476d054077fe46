"""Drag-augmented flying-robot dynamics.

Continuous model (d-dimensional, d >= 2)::

    d/dt [p; v] = [[0, I], [0, -mu]] [p; v] + [0; I] u

where ``mu`` is a diagonal matrix of linear drag coefficients and ``u`` is
the applied (thrust-induced) acceleration. ``u`` is assumed to be expressed
in the world frame with gravity already compensated; on a multirotor it can
be recovered from the attitude (see :func:`acceleration_from_attitude`).

Discretizing with a zero-order hold approximation at period ``dt`` gives::

    x[k+1] = A x[k] + B u[k]
    A = [[I, dt*I], [0, I - dt*mu]]
    B = [[dt^2/2 * I], [dt * I]]

and the range observation is linearized around a reference position as a
single output row ``[p^T/||p||, 0]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DegeneratePositionError, InvalidDragError

#: Positions closer to the anchor than this are rejected as directionless.
DEGENERATE_POSITION_EPS = 1e-6


def _as_vector(a: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class StateVector:
    """Stacked position / velocity state.

    Parameters
    ----------
    p: array-like
        Position in meters, length d >= 2.
    v: array-like
        Velocity in m/s, same length as ``p``.
    """

    p: NDArray[np.float64]
    v: NDArray[np.float64]

    def __post_init__(self):
        p = _as_vector(self.p, "p")
        v = _as_vector(self.v, "v")
        if p.shape != v.shape:
            raise ValueError("p and v must have identical length")
        if p.size < 2:
            raise ValueError("state dimension d must be >= 2")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.p.size

    @property
    def stacked(self) -> NDArray[np.float64]:
        """Return the 2d state vector [p; v]."""
        return np.concatenate([self.p, self.v])

    @classmethod
    def from_stacked(cls, x: ArrayLike) -> "StateVector":
        x = np.asarray(x, dtype=float)
        d = x.size // 2
        return cls(x[:d], x[d:])


@dataclass(frozen=True)
class DragModel:
    """Diagonal drag coefficients plus the sampling period.

    Parameters
    ----------
    mu: array-like
        Diagonal drag coefficients in 1/s, length d. Entries must be >= 0.
        ``mu = 0`` is accepted (no-drag ablations) even though range-only
        observability degrades in that case.
    dt: float
        Sampling period in seconds.
    """

    mu: NDArray[np.float64]
    dt: float

    def __post_init__(self):
        mu = _as_vector(self.mu, "mu")
        object.__setattr__(self, "mu", mu)
        if np.any(mu < 0):
            raise InvalidDragError("drag coefficients must be >= 0")
        if not self.dt > 0:
            raise InvalidDragError("dt must be > 0")
        # discrete stability: the velocity block I - dt*mu must stay a contraction
        if np.any(1.0 - self.dt * mu <= 0):
            raise InvalidDragError(
                f"1 - dt*mu must stay positive, got dt={self.dt}, mu={mu}"
            )

    @property
    def d(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class DiscreteModel:
    """Discrete transition ``x[k+1] = A x[k] + B u[k]`` for a drag model."""

    A: NDArray[np.float64]
    B: NDArray[np.float64]
    mu: NDArray[np.float64]
    dt: float

    @property
    def d(self) -> int:
        return self.B.shape[1]

    def output_row(self, p: ArrayLike) -> NDArray[np.float64]:
        """Range-observation row for reference position ``p`` (see module docs)."""
        return output_row(p)


@dataclass(frozen=True)
class InputSample:
    """One acceleration input with its timestamp."""

    u: NDArray[np.float64]
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "u", _as_vector(self.u, "u"))
        if not np.isfinite(self.t):
            raise ValueError("t must be finite")


def discretize(drag: DragModel) -> DiscreteModel:
    """Build the constant (A, B) pair for a drag model.

    Parameters
    ----------
    drag: DragModel
        Validated drag model (its invariants guarantee the velocity block
        ``I - dt*mu`` is a contraction).

    Returns
    -------
    DiscreteModel
        With ``A`` of shape (2d, 2d) and ``B`` of shape (2d, d).
    """
    d = drag.d
    dt = drag.dt
    A = np.eye(2 * d)
    A[:d, d:] = dt * np.eye(d)
    A[d:, d:] = np.diag(1.0 - dt * drag.mu)
    B = np.vstack([0.5 * dt**2 * np.eye(d), dt * np.eye(d)])
    return DiscreteModel(A=A, B=B, mu=drag.mu.copy(), dt=dt)


def output_row(p: ArrayLike, eps: float = DEGENERATE_POSITION_EPS) -> NDArray[np.float64]:
    """Observation row ``[p^T/||p||, 0_{1xd}]`` for the range output.

    Raises
    ------
    DegeneratePositionError
        If ``||p|| < eps``; a robot co-located with the anchor has no
        defined range direction.
    """
    p = _as_vector(p, "p")
    norm = float(np.linalg.norm(p))
    if norm < eps:
        raise DegeneratePositionError(f"||p|| = {norm:.3g} < {eps:.3g}")
    row = np.zeros(2 * p.size)
    row[: p.size] = p / norm
    return row


def step(model: DiscreteModel, x: StateVector, u: InputSample | ArrayLike) -> StateVector:
    """Advance the state one sampling period with input ``u`` (no noise)."""
    u_vec = u.u if isinstance(u, InputSample) else _as_vector(u, "u")
    if u_vec.size != model.d:
        raise ValueError(f"input has length {u_vec.size}, expected {model.d}")
    x_next = model.A @ x.stacked + model.B @ u_vec
    return StateVector.from_stacked(x_next)


def preintegration_blocks(
    model: DiscreteModel, ell: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return ``A^ell`` and the input chain ``[A^{ell-1}B, ..., A B, B]``.

    The chain is stacked as an (ell, 2d, d) array. ``A^ell`` is formed by
    repeated multiplication; ``ell`` is small in practice.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    blocks = np.empty((ell, 2 * model.d, model.d))
    blocks[ell - 1] = model.B
    for j in range(ell - 2, -1, -1):
        blocks[j] = model.A @ blocks[j + 1]
    A_eff = np.linalg.matrix_power(model.A, ell)
    return A_eff, blocks


def preintegrate(
    model: DiscreteModel, ell: int, inputs: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Compound ``ell`` inputs into one effective transition.

    Parameters
    ----------
    model: DiscreteModel
    ell: int
        Number of input samples between consecutive range measurements.
    inputs: array-like, shape (ell, d)
        Acceleration samples in chronological order.

    Returns
    -------
    (A_eff, b_eff)
        ``A_eff = A^ell`` and ``b_eff = sum_j A^{ell-j} B u_j`` such that
        ``x[k+1] = A_eff x[k] + b_eff`` reproduces ``ell`` sequential steps.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape != (ell, model.d):
        raise ValueError(f"expected {ell} inputs of length {model.d}, got {inputs.shape}")
    A_eff, blocks = preintegration_blocks(model, ell)
    b_eff = np.einsum("jnd,jd->n", blocks, inputs)
    return A_eff, b_eff


def acceleration_from_attitude(theta: float, phi: float, g: float = 9.81) -> tuple[float, float]:
    """Lateral acceleration implied by small pitch / roll angles.

    For non-aggressive flight the thrust-induced lateral acceleration is
    ``a_x = g sin(theta)`` and ``a_y = -g sin(phi)`` with ``theta`` the
    pitch and ``phi`` the roll angle in radians.
    """
    return g * np.sin(theta), -g * np.sin(phi)


def closed_form_velocity(mu_i: float, v0: float, u: float, t: float) -> float:
    """Per-axis velocity under constant input ``u``.

    Solves ``dv/dt = u - mu_i v`` exactly:
    ``v(t) = v0 exp(-mu_i t) + (u/mu_i)(1 - exp(-mu_i t))``,
    falling back to ``v0 + u t`` when ``mu_i == 0``.
    """
    if mu_i < 0:
        raise InvalidDragError("mu_i must be >= 0")
    if mu_i == 0.0:
        return v0 + u * t
    decay = np.exp(-mu_i * t)
    return v0 * decay + (u / mu_i) * (1.0 - decay)
