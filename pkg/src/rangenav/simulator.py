"""Synthetic flight data: ground-truth trajectories and noisy sensor streams.

Ground truth is propagated with the *exact discrete* drag model at the
25 Hz sensor rate, so the measurement and process models seen by the
estimator are mutually consistent by construction (a zero-noise dataset is
recovered to solver precision). Trajectory shapes are produced by choosing
the applied-acceleration sequence; a light tracking feedback keeps shaped
trajectories near their reference without violating the discrete dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import AnchorCollisionError
from .model import DiscreteModel, DragModel, discretize

SAMPLE_RATE = 25.0  #: sensor sampling frequency, Hz

TRAJECTORY_KINDS = ("figure_eight", "random_smooth", "quasi_static", "constant_velocity")


@dataclass(frozen=True)
class TrajectorySpec:
    """Shape and scale of a ground-truth trajectory.

    ``velocity_scale`` and ``accel_scale`` cap the commanded speeds and
    accelerations (``accel_scale`` doubles as the input bound of the
    polynomial-fit error analysis). ``anchor`` is the position of the
    ranging anchor in world coordinates.
    """

    kind: str = "random_smooth"
    duration: float = 120.0
    velocity_scale: float = 1.5
    accel_scale: float = 3.0
    seed: int = 0
    anchor: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"kind must be one of {TRAJECTORY_KINDS}")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.velocity_scale < 0 or self.accel_scale < 0:
            raise ValueError("scales must be >= 0")
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))


@dataclass(frozen=True)
class NoiseSpec:
    """Per-sensor noise magnitudes (one-sigma) and the noise seed.

    Defaults follow typical MEMS-IMU / UWB / optical-flow datasheet
    figures; the accelerometer additionally carries a bias random walk of
    density ``accel_bias_walk`` (m/s^2 per sqrt-second).
    """

    accel_sigma: float = 0.2
    range_sigma: float = 0.10
    flow_sigma: float = 0.05
    accel_bias_walk: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("accel_sigma", "range_sigma", "flow_sigma", "accel_bias_walk"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class FaultSchedule:
    """Sensor outage intervals: (sensor, start, end) in seconds."""

    intervals: tuple[tuple[str, float, float], ...] = ()

    def __post_init__(self):
        norm = []
        for sensor, start, end in self.intervals:
            if sensor not in ("range", "flow"):
                raise ValueError(f"unknown sensor {sensor!r}")
            if not start < end:
                raise ValueError("fault interval must have start < end")
            norm.append((sensor, float(start), float(end)))
        object.__setattr__(self, "intervals", tuple(norm))

    def mask(self, sensor: str, t: NDArray[np.float64]) -> NDArray[np.bool_]:
        """Boolean array: True where ``sensor`` is faulted at time ``t``."""
        out = np.zeros(t.shape, dtype=bool)
        for name, start, end in self.intervals:
            if name == sensor:
                out |= (t >= start) & (t <= end)
        return out


@dataclass
class Trajectory:
    """Ground-truth states and applied accelerations on the sample grid."""

    t: NDArray[np.float64]
    states: NDArray[np.float64]  # (N, 2d) rows [p, v]
    inputs: NDArray[np.float64]  # (N, d) applied acceleration

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def positions(self) -> NDArray[np.float64]:
        return self.states[:, : self.d]

    @property
    def velocities(self) -> NDArray[np.float64]:
        return self.states[:, self.d :]


@dataclass
class Dataset:
    """One synthetic (or recorded) measurement set on a common timebase.

    NaN entries mark missing measurements (sensor faults or absent
    channels); fabricated values are never substituted. Ground-truth
    velocities survive only in memory, the CSV format stores positions.
    """

    t: NDArray[np.float64]
    imu: NDArray[np.float64]  # (N, d)
    uwb: NDArray[np.float64]  # (N,)
    flow: NDArray[np.float64] | None  # (N, d)
    truth_pos: NDArray[np.float64] | None  # (N, d)
    truth_vel: NDArray[np.float64] | None  # (N, d)
    anchor: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    faults: FaultSchedule = field(default_factory=FaultSchedule)


def _smooth_noise(rng: np.random.Generator, n: int, d: int, cutoff_steps: float) -> NDArray[np.float64]:
    """Band-limited unit-scale noise via a two-pass exponential smoother."""
    w = rng.standard_normal((n, d))
    alpha = 1.0 / cutoff_steps
    out = np.empty_like(w)
    acc = np.zeros(d)
    for i in range(n):
        acc += alpha * (w[i] - acc)
        out[i] = acc
    acc = np.zeros(d)
    for i in range(n - 1, -1, -1):
        acc += alpha * (out[i] - acc)
        out[i] = acc
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def _limit(u: NDArray[np.float64], bound: float) -> NDArray[np.float64]:
    return np.clip(u, -bound, bound) if bound > 0 else np.zeros_like(u)


def generate(spec: TrajectorySpec, drag: DragModel) -> Trajectory:
    """Ground-truth trajectory satisfying the discrete drag dynamics.

    The applied-acceleration sequence is built per ``spec.kind`` and the
    state is propagated with the exact ``(A, B)`` pair of ``drag`` at 25 Hz,
    so ``(v[k+1] - v[k])/dt == u[k] - mu v[k]`` holds to machine precision.
    Identical specs and seeds produce bit-identical trajectories.
    """
    model = discretize(drag)
    d = drag.d
    dt = drag.dt
    n = int(round(spec.duration * SAMPLE_RATE)) + 1
    rng = np.random.default_rng(spec.seed)
    mu = drag.mu

    # start offset keeps the flight clear of the anchor; the figure-eight
    # orbits closer so the range direction sweeps fast in all axes
    if spec.kind == "figure_eight":
        home = spec.anchor + np.asarray([1.5, 1.0, 1.1][:d] + [1.0] * max(0, d - 3))
    else:
        home = spec.anchor + np.asarray([2.0, 1.0, 1.5][:d] + [1.0] * max(0, d - 3))

    inputs = np.zeros((n, d))
    states = np.zeros((n, 2 * d))
    states[0, :d] = home

    if spec.kind == "constant_velocity":
        direction = np.ones(d) / np.sqrt(d)
        v_target = spec.velocity_scale * direction
        if np.all(mu > 0):
            u_const = mu * v_target
        else:
            u_const = np.zeros(d)
            states[0, d:] = v_target
        inputs[:] = u_const
        for k in range(n - 1):
            states[k + 1] = model.A @ states[k] + model.B @ inputs[k]
        return Trajectory(t=np.arange(n) * dt, states=states, inputs=inputs)

    if spec.kind == "figure_eight":
        # lissajous figure-eight with an incommensurate altitude component so
        # the curve's osculating plane keeps tumbling (good range geometry);
        # tracked with a PD + feedforward law so the applied acceleration
        # stays consistent with the discrete dynamics
        amp_base = 2.2  # meters; room-scale loops
        omega = max(spec.velocity_scale, 0.1) / amp_base
        amp = np.full(d, amp_base)
        if d >= 3:
            amp[2] *= 0.6
        freq = np.ones(d)
        freq[1] = 2.0
        if d >= 3:
            freq[2] = 1.37
        scale = np.ones(d)
        scale[1] = 0.5
        offsets = np.zeros(d)
        offsets[2:] = 0.7 * np.arange(1, d - 1)
        # redraw the phase until the reference path clears the anchor; close
        # passes make the range direction swing too fast to be a fair shape
        t_grid = np.arange(n) * dt
        for _ in range(64):
            phase = rng.uniform(0, 2 * np.pi) + offsets
            path = home + scale * amp * np.sin(np.outer(omega * t_grid, freq) + phase)
            if np.linalg.norm(path - spec.anchor, axis=1).min() > 0.4:
                break

        def ref(t):
            arg = freq * (omega * t) + phase
            p = scale * amp * np.sin(arg)
            v = scale * amp * freq * omega * np.cos(arg)
            a = -scale * amp * (freq * omega) ** 2 * np.sin(arg)
            return home + p, v, a

        p0, v0, _ = ref(0.0)
        states[0, :d] = p0
        states[0, d:] = v0
        kp, kv = 4.0, 4.0
        for k in range(n - 1):
            p_ref, v_ref, a_ref = ref(k * dt)
            u = a_ref + mu * v_ref + kp * (p_ref - states[k, :d]) + kv * (v_ref - states[k, d:])
            inputs[k] = _limit(u, spec.accel_scale if spec.accel_scale > 0 else np.inf)
            states[k + 1] = model.A @ states[k] + model.B @ inputs[k]
        return Trajectory(t=np.arange(n) * dt, states=states, inputs=inputs)

    # random_smooth / quasi_static: band-limited random inputs plus a weak
    # recentering pull, all folded into the applied acceleration so the
    # discrete dynamics stay exact
    if spec.kind == "quasi_static":
        v_cap = 0.1
        u_scale = min(spec.accel_scale, 0.4 * v_cap * max(float(np.min(mu)), 0.5) / np.sqrt(d))
        kp, kv = 0.02, 0.3
    else:
        v_cap = np.inf
        u_scale = 0.85 * spec.accel_scale
        kp, kv = 0.08, 0.05
    excitation = _smooth_noise(rng, n, d, cutoff_steps=12.0)
    bound = spec.accel_scale if spec.accel_scale > 0 else np.inf
    for _ in range(40):
        for k in range(n - 1):
            p, v = states[k, :d], states[k, d:]
            u = excitation[k] * u_scale + kp * (home - p) - kv * v
            inputs[k] = _limit(u, bound)
            states[k + 1] = model.A @ states[k] + model.B @ inputs[k]
        if np.linalg.norm(states[:, d:], axis=1).max() <= v_cap:
            break
        u_scale *= 0.6  # shrink the excitation until the speed cap holds
    return Trajectory(t=np.arange(n) * dt, states=states, inputs=inputs)


def sense(
    trajectory: Trajectory,
    noise: NoiseSpec,
    anchor: NDArray[np.float64] | None = None,
    faults: FaultSchedule | None = None,
    with_flow: bool = True,
    min_anchor_distance: float = 1e-3,
) -> Dataset:
    """Synthesize IMU / range / flow measurements from a trajectory.

    range = ||p - anchor|| + noise, accel = u + bias + noise,
    flow = v + noise. Faulted intervals carry NaN. Raises
    ``AnchorCollisionError`` if the trajectory passes within
    ``min_anchor_distance`` of the anchor.
    """
    faults = faults or FaultSchedule()
    anchor = np.zeros(trajectory.d) if anchor is None else np.asarray(anchor, dtype=float)
    t = trajectory.t
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0 / SAMPLE_RATE
    rel = trajectory.positions - anchor
    dist = np.linalg.norm(rel, axis=1)
    if np.any(dist < min_anchor_distance):
        raise AnchorCollisionError(
            f"trajectory approaches the anchor to {dist.min():.3g} m"
        )
    rng = np.random.default_rng(noise.seed)
    n, d = trajectory.inputs.shape

    bias = np.cumsum(
        rng.standard_normal((n, d)) * noise.accel_bias_walk * np.sqrt(dt), axis=0
    )
    imu = trajectory.inputs + bias + rng.standard_normal((n, d)) * noise.accel_sigma
    uwb = dist + rng.standard_normal(n) * noise.range_sigma
    flow = trajectory.velocities + rng.standard_normal((n, d)) * noise.flow_sigma

    uwb[faults.mask("range", t)] = np.nan
    if with_flow:
        flow[faults.mask("flow", t)] = np.nan
    else:
        flow = None

    return Dataset(
        t=t.copy(),
        imu=imu,
        uwb=uwb,
        flow=flow,
        truth_pos=trajectory.positions.copy(),
        truth_vel=trajectory.velocities.copy(),
        anchor=anchor.copy(),
        faults=faults,
    )
